#include "authid/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "authid/digest.hpp"
#include "authid/error.hpp"

namespace authid {

namespace pt = boost::property_tree;

namespace {

std::string where(const std::string& section, const std::string& key) { return "[" + section + "] " + key; }

double as_double(const std::string& section, const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError(where(section, key) + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t as_uint(const std::string& section, const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError(where(section, key) + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

template <typename T>
T as_enum(const std::string& section, const std::string& key, const std::string& v,
          std::initializer_list<std::pair<const char*, T>> options) {
  std::string names;
  for (const auto& [name, value] : options) {
    if (v == name) return value;
    names += (names.empty() ? "" : ", ") + std::string(name);
  }
  throw ConfigError(where(section, key) + ": '" + v + "' is not one of " + names);
}

std::size_t hidden_width(const MlpConfig& c) {
  for (const auto& l : c.layers)
    if (l.kind == LayerKind::dense) return l.width;
  return kDefaultHiddenWidth;
}

double dropout_rate(const MlpConfig& c) {
  for (const auto& l : c.layers)
    if (l.kind == LayerKind::dropout) return l.dropout_rate;
  return kDefaultDropoutRate;
}

using Setter = std::function<void(const std::string&)>;
using Section = std::map<std::string, Setter>;

// Width and dropout rebuild the layer list, so they are applied before the
// other keys of their section.
void apply_network_shape(const pt::ptree& tree, const std::string& name, MlpConfig& cfg, bool meta) {
  auto section = tree.get_child_optional(name);
  if (!section) return;
  std::size_t width = hidden_width(cfg);
  double dropout = dropout_rate(cfg);
  bool changed = false;
  if (auto v = section->get_optional<std::string>("width")) {
    width = as_uint(name, "width", *v);
    changed = true;
  }
  if (auto v = section->get_optional<std::string>("dropout")) {
    dropout = as_double(name, "dropout", *v);
    changed = true;
  }
  if (!changed) return;
  auto shaped = meta ? MlpConfig::meta_default(width, dropout) : MlpConfig::base_default(width, dropout);
  cfg.layers = std::move(shaped.layers);
}

Section mlp_keys(MlpConfig& c, bool meta) {
  const std::string s = meta ? "meta" : "mlp";
  Section keys{
      {"width", [](const std::string&) {}},
      {"dropout", [](const std::string&) {}},
      {"epochs", [&c, s](const std::string& v) { c.epochs = as_uint(s, "epochs", v); }},
      {"patience", [&c, s](const std::string& v) { c.patience = as_uint(s, "patience", v); }},
      {"batch_size", [&c, s](const std::string& v) { c.batch_size = as_uint(s, "batch_size", v); }},
      {"learning_rate",
       [&c, s](const std::string& v) { c.optimizer.learning_rate = as_double(s, "learning_rate", v); }},
      {"validation_fraction",
       [&c, s](const std::string& v) { c.validation_fraction = as_double(s, "validation_fraction", v); }},
  };
  if (meta) {
    keys["momentum"] = [&c, s](const std::string& v) { c.optimizer.momentum = as_double(s, "momentum", v); };
  } else {
    keys["beta1"] = [&c, s](const std::string& v) { c.optimizer.beta1 = as_double(s, "beta1", v); };
    keys["beta2"] = [&c, s](const std::string& v) { c.optimizer.beta2 = as_double(s, "beta2", v); };
  }
  return keys;
}

ClassStyle& style_slot(SyntheticSpec& spec, std::size_t index) {
  if (spec.styles.size() <= index) {
    const std::size_t old = spec.styles.size();
    spec.styles.resize(index + 1);
    for (std::size_t i = old; i <= index; ++i) spec.styles[i] = default_style(i);
  }
  return spec.styles[index];
}

Section class_keys(ClassStyle& st, const std::string& s) {
  return {
      {"mean_line_length", [&st, s](const std::string& v) { st.mean_line_length = as_double(s, "mean_line_length", v); }},
      {"comment_rate", [&st, s](const std::string& v) { st.comment_rate = as_double(s, "comment_rate", v); }},
      {"underscore_rate", [&st, s](const std::string& v) { st.underscore_rate = as_double(s, "underscore_rate", v); }},
      {"indent_width",
       [&st, s](const std::string& v) { st.indent_width = static_cast<int>(as_uint(s, "indent_width", v)); }},
      {"identifier_length_mean",
       [&st, s](const std::string& v) { st.identifier_length_mean = as_double(s, "identifier_length_mean", v); }},
      {"identifier_length_stddev",
       [&st, s](const std::string& v) { st.identifier_length_stddev = as_double(s, "identifier_length_stddev", v); }},
  };
}

// Drops trailing comments: ';' or '#' preceded by whitespace.
std::string strip_inline_comments(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool after_space = false, in_comment = false;
  for (char ch : text) {
    if (ch == '\n') {
      in_comment = after_space = false;
      out += ch;
      continue;
    }
    if (in_comment) continue;
    if ((ch == ';' || ch == '#') && after_space) {
      in_comment = true;
      continue;
    }
    after_space = ch == ' ' || ch == '\t';
    out += ch;
  }
  return out;
}

}  // namespace

RunConfig parse_config(std::string_view text, RunConfig cfg) {
  pt::ptree tree;
  try {
    std::istringstream in{strip_inline_comments(text)};
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config: line " + std::to_string(e.line()) + ": " + e.message());
  }

  for (const auto& [name, child] : tree)
    if (child.empty() && !child.data().empty()) throw ConfigError("config: key '" + name + "' outside any section");

  auto& st = cfg.stacking;
  apply_network_shape(tree, "mlp", st.base.mlp, false);
  apply_network_shape(tree, "meta", st.meta, true);

  std::map<std::string, Section> sections;
  sections["stacking"] = {
      {"seed", [&](const std::string& v) { st.seed = as_uint("stacking", "seed", v); }},
      {"meta_source",
       [&](const std::string& v) {
         st.meta_source = as_enum<MetaSource>("stacking", "meta_source", v,
                                              {{"in_sample", MetaSource::in_sample}, {"k_fold", MetaSource::k_fold}});
       }},
      {"folds", [&](const std::string& v) { st.folds = as_uint("stacking", "folds", v); }},
  };
  sections["split"] = {
      {"train_fraction", [&](const std::string& v) { cfg.train_fraction = as_double("split", "train_fraction", v); }},
      {"seed", [&](const std::string& v) { cfg.split_seed = as_uint("split", "seed", v); }},
  };
  sections["features"] = {
      {"bins",
       [&](const std::string& v) {
         st.binning.bins.fill(static_cast<std::uint32_t>(as_uint("features", "bins", v)));
       }},
      {"normalization",
       [&](const std::string& v) {
         st.binning.normalization = as_enum<Normalization>(
             "features", "normalization", v,
             {{"relative_frequency", Normalization::relative_frequency}, {"raw_count", Normalization::raw_count}});
       }},
      {"profile",
       [&](const std::string& v) {
         st.profile = as_enum<int>("features", "profile", v, {{"python", 0}, {"c_family", 1}}) == 0
                          ? CommentProfile::python()
                          : CommentProfile::c_family();
       }},
  };
  sections["mlp"] = mlp_keys(st.base.mlp, false);
  sections["meta"] = mlp_keys(st.meta, true);
  auto forests = [&](auto fn) {
    fn(st.base.forest_gini);
    fn(st.base.forest_gain_ratio);
  };
  sections["forest"] = {
      {"trees", [&](const std::string& v) { forests([&](ForestConfig& f) { f.n_trees = as_uint("forest", "trees", v); }); }},
      {"max_depth",
       [&](const std::string& v) { forests([&](ForestConfig& f) { f.tree.max_depth = as_uint("forest", "max_depth", v); }); }},
      {"min_samples_split",
       [&](const std::string& v) {
         forests([&](ForestConfig& f) { f.tree.min_samples_split = as_uint("forest", "min_samples_split", v); });
       }},
      {"max_features",
       [&](const std::string& v) { forests([&](ForestConfig& f) { f.max_features = as_uint("forest", "max_features", v); }); }},
      {"voting",
       [&](const std::string& v) {
         const auto voting = as_enum<Voting>("forest", "voting", v, {{"soft", Voting::soft}, {"hard", Voting::hard}});
         forests([&](ForestConfig& f) { f.voting = voting; });
       }},
  };
  sections["svm"] = {
      {"c", [&](const std::string& v) { st.base.c_svm.c = st.base.nu_svm.c = as_double("svm", "c", v); }},
      {"nu", [&](const std::string& v) { st.base.c_svm.nu = st.base.nu_svm.nu = as_double("svm", "nu", v); }},
      {"kernel",
       [&](const std::string& v) {
         st.base.c_svm.kernel = st.base.nu_svm.kernel =
             as_enum<KernelType>("svm", "kernel", v, {{"rbf", KernelType::rbf}, {"linear", KernelType::linear}});
       }},
      {"gamma", [&](const std::string& v) { st.base.c_svm.gamma = st.base.nu_svm.gamma = as_double("svm", "gamma", v); }},
      {"tolerance",
       [&](const std::string& v) {
         st.base.c_svm.tolerance = st.base.nu_svm.tolerance = as_double("svm", "tolerance", v);
       }},
  };
  auto& sy = cfg.synth;
  sections["synth"] = {
      {"classes", [&](const std::string& v) { sy.n_classes = static_cast<int>(as_uint("synth", "classes", v)); }},
      {"segments_per_class",
       [&](const std::string& v) { sy.segments_per_class = static_cast<int>(as_uint("synth", "segments_per_class", v)); }},
      {"seed", [&](const std::string& v) { sy.seed = as_uint("synth", "seed", v); }},
      {"lines_per_segment",
       [&](const std::string& v) { sy.lines_per_segment = as_double("synth", "lines_per_segment", v); }},
  };

  // [synth] first so that classes is known before [class.N] sections are sized.
  std::vector<std::pair<std::size_t, const pt::ptree*>> class_sections;
  for (const auto& [name, child] : tree) {
    if (child.empty()) continue;
    if (name.rfind("class.", 0) == 0) {
      const auto idx = as_uint(name, "(section index)", name.substr(6));
      class_sections.emplace_back(idx, &child);
      continue;
    }
    auto it = sections.find(name);
    if (it == sections.end()) throw ConfigError("config: unknown section [" + name + "]");
    for (const auto& [key, value] : child) {
      auto k = it->second.find(key);
      if (k == it->second.end()) throw ConfigError("config: unknown key " + where(name, key));
      k->second(value.data());
    }
  }
  for (const auto& [idx, child] : class_sections) {
    if (idx >= static_cast<std::size_t>(std::max(sy.n_classes, 0)))
      throw ConfigError("config: [class." + std::to_string(idx) + "] but only " + std::to_string(sy.n_classes) +
                        " classes");
    if (sy.styles.empty())
      for (int i = 0; i < sy.n_classes; ++i) style_slot(sy, static_cast<std::size_t>(i));
    const std::string name = "class." + std::to_string(idx);
    auto keys = class_keys(style_slot(sy, idx), name);
    for (const auto& [key, value] : *child) {
      auto k = keys.find(key);
      if (k == keys.end()) throw ConfigError("config: unknown key " + where(name, key));
      k->second(value.data());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), std::move(base));
}

void RunConfig::validate() const {
  stacking.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("[split] train_fraction must be in (0, 1)");
}

std::uint64_t RunConfig::digest() const {
  Digest d;
  d.update(to_hex(stacking.digest()));
  char buf[64];
  std::snprintf(buf, sizeof buf, "|%.17g|%llu", train_fraction,
                static_cast<unsigned long long>(effective_split_seed()));
  d.update(buf);
  return d.value();
}

std::string RunConfig::to_ini() const {
  std::ostringstream o;
  o.precision(17);
  const auto& st = stacking;
  o << "[stacking]\nseed = " << st.seed << "\nmeta_source = " << to_string(st.meta_source) << "\nfolds = " << st.folds
    << "\n\n";
  o << "[split]\ntrain_fraction = " << train_fraction << "\nseed = " << effective_split_seed() << "\n\n";
  const bool uniform_bins = std::all_of(st.binning.bins.begin(), st.binning.bins.end(),
                                        [&](auto b) { return b == st.binning.bins[0]; });
  o << "[features]\n";
  if (uniform_bins) o << "bins = " << st.binning.bins[0] << "\n";
  o << "normalization = "
    << (st.binning.normalization == Normalization::relative_frequency ? "relative_frequency" : "raw_count")
    << "\nprofile = " << st.profile.name << "\n\n";
  auto net = [&](const char* name, const MlpConfig& c, bool meta) {
    o << "[" << name << "]\nwidth = " << hidden_width(c) << "\ndropout = " << dropout_rate(c) << "\nepochs = " << c.epochs
      << "\npatience = " << c.patience << "\nbatch_size = " << c.batch_size
      << "\nlearning_rate = " << c.optimizer.learning_rate;
    if (meta)
      o << "\nmomentum = " << c.optimizer.momentum;
    else
      o << "\nbeta1 = " << c.optimizer.beta1 << "\nbeta2 = " << c.optimizer.beta2;
    o << "\nvalidation_fraction = " << c.validation_fraction << "\n\n";
  };
  net("mlp", st.base.mlp, false);
  net("meta", st.meta, true);
  const auto& f = st.base.forest_gini;
  o << "[forest]\ntrees = " << f.n_trees << "\nmax_depth = " << f.tree.max_depth
    << "\nmin_samples_split = " << f.tree.min_samples_split << "\nmax_features = " << f.max_features
    << "\nvoting = " << (f.voting == Voting::soft ? "soft" : "hard") << "\n\n";
  const auto& s = st.base.c_svm;
  o << "[svm]\nc = " << s.c << "\nnu = " << st.base.nu_svm.nu << "\nkernel = " << (s.kernel == KernelType::rbf ? "rbf" : "linear")
    << "\ngamma = " << s.gamma << "\ntolerance = " << s.tolerance << "\n";
  return o.str();
}

}  // namespace authid
