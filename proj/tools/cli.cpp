#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <istream>
#include <iterator>
#include <optional>
#include <ostream>
#include <sstream>

#include "authid/binary_io.hpp"
#include "authid/config.hpp"
#include "authid/corpus.hpp"
#include "authid/digest.hpp"
#include "authid/ensemble.hpp"
#include "authid/error.hpp"
#include "authid/eval.hpp"
#include "authid/metrics.hpp"
#include "authid/text.hpp"

namespace authid::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config;
  unsigned jobs = 0;
  std::string format = "text";
  bool verbose = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Master seed (overrides the config file)");
  sub->add_option("--config", c.config, "Configuration file (key = value with [sections])")->check(CLI::ExistingFile);
  sub->add_option("--jobs,-j", c.jobs, "Worker threads, 0 = all cores")->capture_default_str();
  sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"text", "tsv"}))->capture_default_str();
  sub->add_flag("--verbose,-v", c.verbose, "Progress and timings on stderr");
}

RunConfig resolve_config(const Common& c) {
  RunConfig rc = c.config ? load_config(*c.config) : RunConfig{};
  if (c.seed) {
    rc.stacking.seed = *c.seed;
    rc.synth.seed = *c.seed;
  }
  rc.validate();
  return rc;
}

class Timer {
 public:
  Timer(const Common& c, std::ostream& err) : on_(c.verbose), err_(err) {}
  void mark(const std::string& what) {
    if (!on_) return;
    const auto now = std::chrono::steady_clock::now();
    char buf[64];
    std::snprintf(buf, sizeof buf, " (%.2fs)", std::chrono::duration<double>(now - last_).count());
    err_ << what << buf << "\n";
    last_ = now;
  }

 private:
  bool on_;
  std::ostream& err_;
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

SegmentSet scan(const fs::path& corpus, const std::optional<fs::path>& manifest, std::ostream& err) {
  ScanReport report;
  auto set = scan_corpus(corpus, manifest, &report);
  for (const auto& s : report.skipped) err << "skipped " << s.path << ": " << s.reason << "\n";
  return set;
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// --- extract -------------------------------------------------------------------------

struct ExtractArgs {
  fs::path corpus;
  std::optional<fs::path> manifest;
  fs::path cache;
  std::optional<fs::path> skipped;
};

FeatureCache build_cache(const SegmentSet& set, const StackingConfig& config, unsigned jobs) {
  FeatureCache cache;
  cache.binning = config.binning;
  cache.labels = set.labels;
  cache.features = featurize(set, config.binning, config.profile, jobs);
  for (const auto& r : set.records) cache.ids.push_back(r.id);
  for (auto i : set.label_indices()) cache.label_indices.push_back(static_cast<std::uint32_t>(i));
  return cache;
}

int cmd_extract(const ExtractArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
  const auto rc = resolve_config(c);
  Timer timer(c, err);
  ScanReport report;
  auto set = scan_corpus(a.corpus, a.manifest, &report);
  for (const auto& s : report.skipped) err << "skipped " << s.path << ": " << s.reason << "\n";
  if (a.skipped) {
    const auto text = report.to_jsonl();
    write_file_bytes(a.skipped->string(), std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }
  timer.mark("scanned corpus");
  const auto cache = build_cache(set, rc.stacking, c.jobs);
  save_feature_cache(a.cache, cache);
  timer.mark("extracted features");
  if (c.format == "tsv") {
    out << "segments\t" << set.size() << "\nclasses\t" << set.labels.size() << "\ndimension\t"
        << cache.features.cols() << "\nbinning_digest\t" << to_hex(rc.stacking.binning.digest()) << "\n";
  } else {
    out << "segments: " << set.size() << "\nclasses: " << set.labels.size() << "\ndimension: " << cache.features.cols()
        << "\nbinning digest: " << to_hex(rc.stacking.binning.digest()) << "\ncache: " << a.cache.string() << "\n";
  }
  return 0;
}

// --- train ---------------------------------------------------------------------------

struct TrainArgs {
  std::optional<fs::path> corpus;
  std::optional<fs::path> manifest;
  std::optional<fs::path> cache;
  fs::path model;
  std::optional<fs::path> ledger;
  std::optional<std::string> meta_source;
};

int cmd_train(const TrainArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
  auto rc = resolve_config(c);
  if (a.meta_source) rc.stacking.meta_source = *a.meta_source == "k_fold" ? MetaSource::k_fold : MetaSource::in_sample;
  rc.validate();
  Timer timer(c, err);

  std::optional<FeatureCache> cache;
  if (a.cache && fs::exists(*a.cache)) {
    cache = load_feature_cache(*a.cache, rc.stacking.binning);
    if (!cache) {
      if (!a.corpus) throw Error("feature cache " + a.cache->string() + " was built with different binning; pass --corpus to rebuild it");
      err << "feature cache " << a.cache->string() << " is stale; re-extracting\n";
    }
  }
  if (!cache) {
    if (!a.corpus) throw Error(a.cache ? "feature cache " + a.cache->string() + " does not exist" : "no corpus given");
    const auto set = scan(*a.corpus, a.manifest, err);
    timer.mark("scanned corpus");
    cache = build_cache(set, rc.stacking, c.jobs);
    timer.mark("extracted features");
    if (a.cache) save_feature_cache(*a.cache, *cache);
  }

  std::vector<std::size_t> labels(cache->label_indices.begin(), cache->label_indices.end());
  std::vector<std::size_t> counts(cache->labels.size(), 0);
  for (auto y : labels) ++counts.at(y);
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] < 2)
      throw CorpusError("class " + cache->labels.label(c) + " has " + std::to_string(counts[c]) +
                        " segment(s); splitting needs at least 2 so both train and test see it");
  const auto split = stratified_split(labels, cache->labels.size(), rc.train_fraction, rc.effective_split_seed());
  std::vector<std::size_t> rows;
  std::vector<std::size_t> train_labels;
  std::vector<std::string> train_ids;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] != Split::train) continue;
    rows.push_back(i);
    train_labels.push_back(labels[i]);
    train_ids.push_back(cache->ids[i]);
  }
  const auto x = cache->features.select(rows);
  const auto model = train_stack(x, train_labels, cache->labels, train_ids, rc.stacking, c.jobs);
  timer.mark("trained stack");

  save_model(model, a.model);
  const fs::path ledger_path = a.ledger ? *a.ledger : fs::path(a.model.string() + ".ledger.json");
  auto ledger = nlohmann::json::parse(model.ledger().to_json());
  ledger["run_config_digest"] = to_hex(rc.digest());
  ledger["train_fraction"] = rc.train_fraction;
  ledger["split_seed"] = rc.effective_split_seed();
  ledger["test_size"] = split.size() - rows.size();
  const auto text = ledger.dump(2) + "\n";
  write_file_bytes(ledger_path.string(), std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));

  const auto& l = model.ledger();
  if (c.format == "tsv") {
    out << "model\ttrain_accuracy\tvalidation_accuracy\n";
    for (const auto& m : l.models)
      out << m.name << '\t' << fixed(m.train_accuracy, 6) << '\t' << fixed(m.validation_accuracy, 6) << "\n";
  } else {
    out << "train segments: " << rows.size() << "\nheld-out segments: " << split.size() - rows.size()
        << "\nclasses: " << cache->labels.size() << "\nmeta input width: " << model.meta_input_width()
        << "\nmeta source: " << to_string(rc.stacking.meta_source) << "\n\n";
    char line[128];
    std::snprintf(line, sizeof line, "%-18s  %8s  %10s\n", "model", "train", "validation");
    out << line;
    for (const auto& m : l.models) {
      std::snprintf(line, sizeof line, "%-18s  %8s  %10s\n", m.name.c_str(), fixed(m.train_accuracy, 4).c_str(),
                    fixed(m.validation_accuracy, 4).c_str());
      out << line;
    }
    out << "\nledger digest: " << to_hex(l.digest()) << "\nmodel: " << a.model.string()
        << "\nledger: " << ledger_path.string() << "\n";
  }
  return 0;
}

// --- predict -------------------------------------------------------------------------

struct PredictArgs {
  fs::path model;
  std::vector<fs::path> files;
  std::size_t top = 0;
};

int cmd_predict(const PredictArgs& a, const Common& c, std::istream& in, std::ostream& out, std::ostream&) {
  const auto model = load_model(a.model);
  const int digits = c.format == "tsv" ? 17 : 6;
  auto emit = [&](std::string_view bytes) {
    const auto ranked = model.predict(decode_utf8(bytes));
    const std::size_t n = a.top == 0 ? ranked.size() : std::min(a.top, ranked.size());
    for (std::size_t i = 0; i < n; ++i) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.*g", digits, ranked[i].second);
      out << ranked[i].first << '\t' << (c.format == "tsv" ? buf : fixed(ranked[i].second, 6)) << "\n";
    }
  };
  if (a.files.empty()) {
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    emit(bytes);
    return 0;
  }
  // Read everything first so an unreadable file fails before any output.
  std::vector<std::string> contents;
  for (const auto& f : a.files) {
    if (!fs::is_regular_file(f)) throw Error("cannot read " + f.string());
    const auto bytes = read_file_bytes(f.string());
    contents.emplace_back(bytes.begin(), bytes.end());
  }
  for (std::size_t i = 0; i < a.files.size(); ++i) {
    if (a.files.size() > 1) out << (i ? "\n" : "") << "# " << a.files[i].string() << "\n";
    emit(contents[i]);
  }
  return 0;
}

// --- evaluate ------------------------------------------------------------------------

struct EvaluateArgs {
  fs::path model;
  fs::path corpus;
  std::optional<fs::path> manifest;
  bool with_bases = false;
  bool all = false;
  std::optional<fs::path> report;
};

int cmd_evaluate(const EvaluateArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
  RunConfig rc = c.config ? load_config(*c.config) : RunConfig{};
  const auto model = load_model(a.model);
  Timer timer(c, err);
  auto set = scan(a.corpus, a.manifest, err);
  SegmentSet test;
  if (a.all) {
    test = std::move(set);
  } else {
    // Same split as `train`: explicit seed, else the config's, else the model's.
    const std::uint64_t seed = c.seed ? *c.seed : rc.split_seed.value_or(model.config().seed);
    test = split_dataset(std::move(set), rc.train_fraction, seed).subset(Split::test);
  }
  timer.mark("scanned corpus");

  std::vector<EvaluationReport> reports;
  if (a.with_bases)
    reports = evaluate_all(model, test, c.jobs);
  else
    reports.push_back(evaluate(model, test, c.jobs));
  timer.mark("evaluated");

  std::ostringstream text;
  if (c.format == "tsv") {
    text << reports.front().confusion_tsv();
    if (a.with_bases) {
      text << "\nclassifier\taccuracy\tmicro_f1\n";
      for (const auto& r : reports) text << r.model_name << '\t' << fixed(r.accuracy, 6) << '\t' << fixed(r.micro_f1, 6) << "\n";
    }
  } else {
    text << reports.front().to_text();
    if (a.with_bases) text << "\n" << accuracy_table(reports);
  }
  const auto s = text.str();
  if (a.report)
    write_file_bytes(a.report->string(), std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  else
    out << s;
  return 0;
}

// --- synth ---------------------------------------------------------------------------

struct SynthArgs {
  std::optional<fs::path> spec;
  fs::path out;
  std::optional<int> classes;
  std::optional<int> segments;
};

int cmd_synth(const SynthArgs& a, const Common& c, std::ostream& out, std::ostream&) {
  Common merged = c;
  if (a.spec) {
    if (c.config) throw ConfigError("--spec and --config are the same file; give one");
    merged.config = a.spec->string();
  }
  auto rc = resolve_config(merged);
  if (a.classes) rc.synth.n_classes = *a.classes;
  if (a.segments) rc.synth.segments_per_class = *a.segments;
  validate(rc.synth);
  const auto set = generate_synthetic_corpus(rc.synth);
  write_corpus(set, a.out);
  if (c.format == "tsv")
    out << "segments\t" << set.size() << "\nclasses\t" << set.labels.size() << "\n";
  else
    out << "wrote " << set.size() << " segments for " << set.labels.size() << " classes to " << a.out.string() << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Source-code authorship identification with a stacked ensemble", "authid"};
  app.require_subcommand(1);

  Common common;

  ExtractArgs ea;
  auto* extract = app.add_subcommand("extract", "Extract feature vectors from a corpus into a cache file");
  extract->add_option("corpus", ea.corpus, "Corpus root")->required()->check(CLI::ExistingDirectory);
  extract->add_option("--manifest", ea.manifest, "Manifest of '<path>\\t<label>' lines")->check(CLI::ExistingFile);
  extract->add_option("--cache,-o", ea.cache, "Feature cache to write")->required();
  extract->add_option("--skipped", ea.skipped, "Write skipped files as JSON lines");
  add_common(extract, common);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train the stacked ensemble on the training split");
  auto* t_corpus = train->add_option("--corpus", ta.corpus, "Corpus root")->check(CLI::ExistingDirectory);
  train->add_option("--manifest", ta.manifest, "Manifest of '<path>\\t<label>' lines")
      ->check(CLI::ExistingFile)
      ->needs(t_corpus);
  train->add_option("--cache", ta.cache, "Feature cache (read if valid, written after extraction)");
  train->add_option("--model,-o", ta.model, "Model file to write")->required();
  train->add_option("--ledger", ta.ledger, "Ledger JSON (default: <model>.ledger.json)");
  train->add_option("--meta-source", ta.meta_source, "Where meta-features come from")
      ->check(CLI::IsMember({"in_sample", "k_fold"}));
  add_common(train, common);

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Rank the known authors of source files (or stdin)");
  predict->add_option("--model,-m", pa.model, "Model file")->required()->check(CLI::ExistingFile);
  predict->add_option("files", pa.files, "Segments to classify; stdin when none");
  predict->add_option("--top", pa.top, "Print only the N most probable labels (0 = all)");
  add_common(predict, common);

  EvaluateArgs va;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a model on the held-out split of a corpus");
  evaluate_cmd->add_option("--model,-m", va.model, "Model file")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--corpus", va.corpus, "Corpus root")->required()->check(CLI::ExistingDirectory);
  evaluate_cmd->add_option("--manifest", va.manifest, "Manifest of '<path>\\t<label>' lines")->check(CLI::ExistingFile);
  evaluate_cmd->add_flag("--with-bases", va.with_bases, "Also score each base classifier");
  evaluate_cmd->add_flag("--all", va.all, "Score every segment instead of the held-out split");
  evaluate_cmd->add_option("--report", va.report, "Write the report to a file instead of stdout");
  add_common(evaluate_cmd, common);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic style-controlled corpus");
  synth->add_option("--spec", sa.spec, "Spec file with [synth] and [class.N] sections")->check(CLI::ExistingFile);
  synth->add_option("--out,-o", sa.out, "Output directory")->required();
  synth->add_option("--classes", sa.classes, "Number of classes");
  synth->add_option("--segments", sa.segments, "Segments per class");
  add_common(synth, common);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*extract) return cmd_extract(ea, common, out, err);
    if (*train) {
      if (!ta.corpus && !ta.cache) throw Error("train needs --corpus, --cache or both");
      return cmd_train(ta, common, out, err);
    }
    if (*predict) return cmd_predict(pa, common, in, out, err);
    if (*evaluate_cmd) return cmd_evaluate(va, common, out, err);
    if (*synth) return cmd_synth(sa, common, out, err);
  } catch (const std::exception& e) {
    err << "authid: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace authid::cli
