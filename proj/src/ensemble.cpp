#include "authid/ensemble.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include <json.hpp>

#include "authid/digest.hpp"
#include "authid/error.hpp"
#include "authid/learners/probability.hpp"
#include "authid/parallel.hpp"
#include "authid/rng.hpp"
#include "authid/text.hpp"

namespace authid {

std::string_view to_string(MetaSource source) noexcept {
  return source == MetaSource::in_sample ? "in_sample" : "k_fold";
}

// --- config ------------------------------------------------------------------------

namespace {

void encode_profile(BinaryWriter& w, const CommentProfile& p) {
  w.str(p.name);
  w.str(encode_utf8(p.line_comment));
  w.u64(p.blocks.size());
  for (const auto& b : p.blocks) {
    w.str(encode_utf8(b.open));
    w.str(encode_utf8(b.close));
  }
  w.str(encode_utf8(p.doc_prefix));
  w.str(encode_utf8(p.string_quotes));
  w.u32(static_cast<std::uint32_t>(p.escape));
  w.u64(p.keywords.size());
  for (const auto& k : p.keywords) w.str(encode_utf8(k));
}

CommentProfile decode_profile(BinaryReader& r) {
  CommentProfile p;
  p.name = r.str();
  p.line_comment = decode_utf8(r.str());
  p.blocks.resize(r.u64());
  if (p.blocks.size() > r.remaining()) throw FormatError("stored comment profile is malformed");
  for (auto& b : p.blocks) {
    b.open = decode_utf8(r.str());
    b.close = decode_utf8(r.str());
  }
  p.doc_prefix = decode_utf8(r.str());
  p.string_quotes = decode_utf8(r.str());
  p.escape = static_cast<char32_t>(r.u32());
  const auto n_keywords = r.u64();
  if (n_keywords > r.remaining()) throw FormatError("stored comment profile is malformed");
  for (std::uint64_t i = 0; i < n_keywords; ++i) p.keywords.push_back(decode_utf8(r.str()));
  return p;
}

void encode_config(BinaryWriter& w, const StackingConfig& c) {
  w.u8(static_cast<std::uint8_t>(c.meta_source));
  w.u64(c.folds);
  for (auto b : c.binning.bins) w.u32(b);
  w.u8(static_cast<std::uint8_t>(c.binning.normalization));
  encode_profile(w, c.profile);
  c.base.mlp.encode(w);
  c.base.forest_gini.encode(w);
  c.base.forest_gain_ratio.encode(w);
  c.base.c_svm.encode(w);
  c.base.nu_svm.encode(w);
  c.meta.encode(w);
  w.u64(c.seed);
}

StackingConfig decode_config(BinaryReader& r) {
  StackingConfig c;
  c.meta_source = static_cast<MetaSource>(r.u8());
  c.folds = r.u64();
  for (auto& b : c.binning.bins) b = r.u32();
  c.binning.normalization = static_cast<Normalization>(r.u8());
  c.profile = decode_profile(r);
  c.base.mlp = MlpConfig::decode(r);
  c.base.forest_gini = ForestConfig::decode(r);
  c.base.forest_gain_ratio = ForestConfig::decode(r);
  c.base.c_svm = SvmConfig::decode(r);
  c.base.nu_svm = SvmConfig::decode(r);
  c.meta = MlpConfig::decode(r);
  c.seed = r.u64();
  return c;
}

}  // namespace

void StackingConfig::validate() const {
  if (meta_source != MetaSource::in_sample && meta_source != MetaSource::k_fold)
    throw ConfigError("unknown meta-feature source");
  if (meta_source == MetaSource::k_fold && folds < 2) throw ConfigError("k-fold meta-features need k >= 2");
  binning.validate();
  base.validate();
  meta.validate();
}

std::uint64_t StackingConfig::digest() const {
  BinaryWriter w;
  encode_config(w, *this);
  return Digest{}.update(w.bytes()).value();
}

std::uint64_t StackingConfig::learner_seed(std::size_t position) const noexcept {
  return derive_seed(seed, 10 + position);
}
std::uint64_t StackingConfig::meta_seed() const noexcept { return derive_seed(seed, 20); }
std::uint64_t StackingConfig::fold_seed() const noexcept { return derive_seed(seed, 30); }

// --- meta-features --------------------------------------------------------------------

FeatureVector assemble_meta_features(std::span<const std::vector<double>> blocks, std::size_t n_classes) {
  if (blocks.size() != kBaseLearnerCount) throw DimensionError(kBaseLearnerCount, blocks.size());
  FeatureVector out;
  out.reserve(kBaseLearnerCount * n_classes);
  for (const auto& b : blocks) {
    if (b.size() != n_classes) throw DimensionError(n_classes, b.size());
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

std::vector<std::pair<std::string, double>> rank(const LabelIndex& labels, std::span<const double> probabilities) {
  if (probabilities.size() != labels.size()) throw DimensionError(labels.size(), probabilities.size());
  std::vector<std::pair<std::string, double>> out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out.emplace_back(labels.label(i), probabilities[i]);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

// --- ledger ---------------------------------------------------------------------------

std::uint64_t TrainingLedger::digest() const {
  BinaryWriter w;
  w.u64(stacking_digest);
  w.u64(label_digest);
  w.u8(static_cast<std::uint8_t>(meta_source));
  w.u64(train_size);
  w.u64(models.size());
  for (const auto& m : models) {
    w.str(m.name);
    w.u64(m.seed);
    w.u64(m.config_digest);
    w.u64(m.parameter_digest);
    w.f64(m.train_accuracy);
    w.f64(m.validation_accuracy);
  }
  w.u64(fold_ids.size());
  for (std::size_t i = 0; i < fold_ids.size(); ++i) {
    w.str(fold_ids[i]);
    w.u32(folds[i]);
  }
  return Digest{}.update(w.bytes()).value();
}

std::string TrainingLedger::to_json() const {
  using nlohmann::json;
  auto number = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j;
  j["format_version"] = kModelFormatVersion;
  j["digest"] = to_hex(digest());
  j["stacking_config_digest"] = to_hex(stacking_digest);
  j["label_digest"] = to_hex(label_digest);
  j["learner_order_digest"] = to_hex(learner_order_digest());
  j["meta_source"] = std::string(to_string(meta_source));
  j["train_size"] = train_size;
  j["models"] = json::array();
  for (const auto& m : models) {
    j["models"].push_back({{"name", m.name},
                           {"seed", to_hex(m.seed)},
                           {"config_digest", to_hex(m.config_digest)},
                           {"param_digest", to_hex(m.parameter_digest)},
                           {"train_accuracy", number(m.train_accuracy)},
                           {"validation_accuracy", number(m.validation_accuracy)},
                           {"wall_time_seconds", number(m.wall_seconds)}});
  }
  if (!fold_ids.empty()) {
    j["fold_membership"] = json::array();
    for (std::size_t i = 0; i < fold_ids.size(); ++i)
      j["fold_membership"].push_back({{"id", fold_ids[i]}, {"fold", folds[i]}});
  }
  return j.dump(2) + "\n";
}

void save_ledger(const TrainingLedger& ledger, const std::filesystem::path& path) {
  const auto text = ledger.to_json();
  write_file_bytes(path.string(), std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// --- model ----------------------------------------------------------------------------

EnsembleModel::EnsembleModel(StackingConfig config, LabelIndex labels, std::vector<BaseModel> bases, Mlp meta,
                             TrainingLedger ledger)
    : config_(std::move(config)),
      labels_(std::move(labels)),
      bases_(std::move(bases)),
      meta_(std::move(meta)),
      ledger_(std::move(ledger)) {
  if (bases_.size() != kBaseLearnerCount) throw Error("ensemble: exactly five base models are required");
  for (std::size_t m = 0; m < kBaseLearnerCount; ++m) {
    if (bases_[m].kind() != kLearnerOrder[m]) throw Error("ensemble: base models are not in learner order");
    if (!(bases_[m].labels() == labels_)) throw Error("ensemble: base model label index differs");
    if (bases_[m].input_dim() != config_.binning.dimension())
      throw DimensionError(config_.binning.dimension(), bases_[m].input_dim());
  }
  if (meta_.input_dim() != kBaseLearnerCount * labels_.size())
    throw DimensionError(kBaseLearnerCount * labels_.size(), meta_.input_dim());
  if (meta_.n_classes() != labels_.size()) throw Error("ensemble: meta model class count differs");
}

FeatureVector EnsembleModel::features(std::u32string_view text) const {
  return vectorize(extract_metrics(text, config_.profile), config_.binning);
}

FeatureVector EnsembleModel::meta_features(std::span<const double> features) const {
  std::vector<std::vector<double>> blocks;
  blocks.reserve(kBaseLearnerCount);
  for (const auto& b : bases_) blocks.push_back(b.predict_proba(features));
  return assemble_meta_features(blocks, labels_.size());
}

std::vector<double> EnsembleModel::predict_proba_features(std::span<const double> features) const {
  return meta_.predict_proba(meta_features(features));
}

std::vector<double> EnsembleModel::predict_proba(std::u32string_view text) const {
  if (text.empty()) throw Error("cannot predict the author of an empty segment");
  return predict_proba_features(features(text));
}

std::vector<std::pair<std::string, double>> EnsembleModel::predict(std::u32string_view text) const {
  return rank(labels_, predict_proba(text));
}

// --- training -------------------------------------------------------------------------

std::vector<std::uint32_t> assign_folds(std::span<const std::size_t> labels, const LabelIndex& index,
                                        std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("k-fold meta-features need k >= 2");
  std::vector<std::vector<std::size_t>> members(index.size());
  for (std::size_t i = 0; i < labels.size(); ++i) members.at(labels[i]).push_back(i);
  std::vector<std::uint32_t> out(labels.size(), 0);
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto& m = members[c];
    // Largest fold holds ceil(n/k) of this class; the rest must keep two.
    const std::size_t largest = (m.size() + folds - 1) / folds;
    if (m.size() < largest + 2)
      throw CorpusError("k-fold meta-features: class '" + index.label(c) + "' has " + std::to_string(m.size()) +
                        " training segment(s); with k = " + std::to_string(folds) +
                        " some fold would train on fewer than 2");
    Rng rng(derive_seed(seed, c));
    rng.shuffle(std::span<std::size_t>(m));
    for (std::size_t j = 0; j < m.size(); ++j) out[m[j]] = static_cast<std::uint32_t>(j % folds);
  }
  return out;
}

FeatureMatrix out_of_fold_meta_features(const FeatureMatrix& x, std::span<const std::size_t> labels,
                                        const LabelIndex& index, const StackingConfig& config,
                                        std::span<const std::uint32_t> folds, unsigned jobs) {
  const std::size_t n = x.rows(), k = index.size();
  if (labels.size() != n || folds.size() != n) throw Error("out-of-fold: labels, folds and rows differ in count");
  const std::size_t n_folds = n == 0 ? 0 : *std::max_element(folds.begin(), folds.end()) + 1;

  FeatureMatrix meta(n, kBaseLearnerCount * k);
  parallel_for(n_folds * kBaseLearnerCount, jobs, [&](std::size_t task) {
    const std::size_t f = task / kBaseLearnerCount, m = task % kBaseLearnerCount;
    std::vector<std::size_t> train_rows, held_out;
    for (std::size_t i = 0; i < n; ++i) (folds[i] == f ? held_out : train_rows).push_back(i);
    if (held_out.empty()) return;
    const auto sub_x = x.select(train_rows);
    std::vector<std::size_t> sub_y;
    sub_y.reserve(train_rows.size());
    for (auto i : train_rows) sub_y.push_back(labels[i]);
    const auto model =
        train_base_model(kLearnerOrder[m], sub_x, sub_y, index, config.base, derive_seed(config.learner_seed(m), f))
            .model;
    for (auto i : held_out) {
      const auto p = model.predict_proba(x.row(i));
      std::copy(p.begin(), p.end(), meta.row(i).begin() + static_cast<std::ptrdiff_t>(m * k));
    }
  });
  return meta;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

EnsembleModel train_stack(const FeatureMatrix& x, std::span<const std::size_t> labels, const LabelIndex& index,
                          std::span<const std::string> ids, const StackingConfig& config, unsigned jobs) {
  config.validate();
  const std::size_t n = x.rows(), k = index.size();
  if (k < 2) throw CorpusError("training needs at least 2 classes, found " + std::to_string(k));
  if (labels.size() != n) throw Error("train_stack: label count does not match sample count");
  if (!ids.empty() && ids.size() != n) throw Error("train_stack: id count does not match sample count");
  if (x.cols() != config.binning.dimension()) throw DimensionError(config.binning.dimension(), x.cols());
  std::vector<std::size_t> counts(k, 0);
  for (auto y : labels) ++counts.at(y);
  std::vector<std::string> missing;
  for (std::size_t c = 0; c < k; ++c)
    if (counts[c] == 0) missing.push_back(index.label(c));
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw CorpusError("no training segments for class(es): " + list);
  }

  // Phase 2: the five base learners, independent of each other.
  std::vector<std::optional<TrainedBase>> trained(kBaseLearnerCount);
  std::vector<double> wall(kBaseLearnerCount + 1, 0.0);
  parallel_for(kBaseLearnerCount, jobs, [&](std::size_t m) {
    const auto start = std::chrono::steady_clock::now();
    trained[m] = train_base_model(kLearnerOrder[m], x, labels, index, config.base, config.learner_seed(m), jobs);
    wall[m] = seconds_since(start);
  });

  std::vector<BaseModel> bases;
  for (auto& t : trained) bases.push_back(std::move(t->model));

  // Phase 3: in-sample posteriors, needed for training accuracies either way.
  FeatureMatrix in_sample(n, kBaseLearnerCount * k);
  parallel_for(n, jobs, [&](std::size_t i) {
    for (std::size_t m = 0; m < kBaseLearnerCount; ++m) {
      const auto p = bases[m].predict_proba(x.row(i));
      std::copy(p.begin(), p.end(), in_sample.row(i).begin() + static_cast<std::ptrdiff_t>(m * k));
    }
  });

  TrainingLedger ledger;
  ledger.stacking_digest = config.digest();
  ledger.label_digest = index.digest();
  ledger.meta_source = config.meta_source;
  ledger.train_size = n;

  FeatureMatrix meta_x;
  if (config.meta_source == MetaSource::in_sample) {
    meta_x = in_sample;
  } else {
    const auto folds = assign_folds(labels, index, config.folds, config.fold_seed());
    meta_x = out_of_fold_meta_features(x, labels, index, config, folds, jobs);
    for (std::size_t i = 0; i < n; ++i) ledger.fold_ids.push_back(ids.empty() ? std::to_string(i) : ids[i]);
    ledger.folds = folds;
  }

  // Phase 4: meta classifier.
  auto meta_cfg = config.meta;
  meta_cfg.seed = config.meta_seed();
  const auto meta_start = std::chrono::steady_clock::now();
  auto meta = train_mlp(meta_x, labels, k, meta_cfg);
  wall[kBaseLearnerCount] = seconds_since(meta_start);

  auto accuracy = [&](auto&& predict) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += argmax(predict(i)) == labels[i];
    return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
  };
  for (std::size_t m = 0; m < kBaseLearnerCount; ++m) {
    LedgerEntry e;
    e.name = std::string(learner_name(kLearnerOrder[m]));
    e.seed = bases[m].seed();
    e.config_digest = bases[m].config_digest();
    e.parameter_digest = bases[m].parameter_digest();
    e.train_accuracy = accuracy([&](std::size_t i) {
      auto row = in_sample.row(i);
      return std::vector<double>(row.begin() + static_cast<std::ptrdiff_t>(m * k),
                                 row.begin() + static_cast<std::ptrdiff_t>((m + 1) * k));
    });
    e.validation_accuracy = trained[m]->info.validation_accuracy;
    e.wall_seconds = wall[m];
    ledger.models.push_back(std::move(e));
  }
  {
    LedgerEntry e;
    e.name = "meta";
    e.seed = meta_cfg.seed;
    auto digest_cfg = config.meta;
    digest_cfg.seed = 0;
    e.config_digest = digest_cfg.digest();
    BinaryWriter w;
    meta.net.encode(w);
    e.parameter_digest = Digest{}.update(w.bytes()).value();
    // Accuracy of the full stack on its training set, through in-sample features.
    e.train_accuracy = accuracy([&](std::size_t i) { return meta.net.predict_proba(in_sample.row(i)); });
    e.validation_accuracy = meta.summary.validation_accuracy;
    e.wall_seconds = wall[kBaseLearnerCount];
    ledger.models.push_back(std::move(e));
  }

  return EnsembleModel(config, index, std::move(bases), std::move(meta.net), std::move(ledger));
}

EnsembleModel train_stack(const SegmentSet& train, const StackingConfig& config, unsigned jobs) {
  config.validate();
  if (train.size() == 0) throw CorpusError("training set is empty");
  const auto x = featurize(train, config.binning, config.profile, jobs);
  const auto labels = train.label_indices();
  std::vector<std::string> ids;
  ids.reserve(train.size());
  for (const auto& r : train.records) ids.push_back(r.id);
  return train_stack(x, labels, train.labels, ids, config, jobs);
}

// --- model file -----------------------------------------------------------------------

namespace {

constexpr std::uint8_t kModelMagic[8] = {'A', 'I', 'D', 'M', 'O', 'D', 'E', 'L'};

}  // namespace

std::vector<std::uint8_t> encode_model(const EnsembleModel& model) {
  BinaryWriter w;
  w.raw(kModelMagic);
  w.u32(kModelFormatVersion);
  w.u64(learner_order_digest());
  w.u64(model.config().digest());
  encode_config(w, model.config());
  w.u64(model.labels().size());
  for (const auto& l : model.labels().labels()) w.str(l);
  for (const auto& b : model.bases()) b.encode(w);
  model.meta().encode(w);

  const auto& ledger = model.ledger();
  w.u64(ledger.stacking_digest);
  w.u64(ledger.label_digest);
  w.u8(static_cast<std::uint8_t>(ledger.meta_source));
  w.u64(ledger.train_size);
  w.u64(ledger.models.size());
  for (const auto& m : ledger.models) {
    w.str(m.name);
    w.u64(m.seed);
    w.u64(m.config_digest);
    w.u64(m.parameter_digest);
    w.f64(m.train_accuracy);
    w.f64(m.validation_accuracy);
  }
  w.u64(ledger.fold_ids.size());
  for (std::size_t i = 0; i < ledger.fold_ids.size(); ++i) {
    w.str(ledger.fold_ids[i]);
    w.u32(ledger.folds[i]);
  }
  auto bytes = std::move(w).take();
  append_crc32(bytes);
  return bytes;
}

EnsembleModel decode_model(std::span<const std::uint8_t> bytes) {
  BinaryReader r(bytes);
  if (bytes.size() < sizeof kModelMagic ||
      !std::equal(std::begin(kModelMagic), std::end(kModelMagic), r.raw(sizeof kModelMagic).begin()))
    throw FormatError("not an authid model file (bad magic bytes)");
  if (const auto v = r.u32(); v != kModelFormatVersion) throw VersionError(v, kModelFormatVersion);
  if (!crc32_matches(bytes)) throw FormatError("model file integrity check failed (checksum mismatch or truncation)");
  if (r.u64() != learner_order_digest())
    throw FormatError("model file was written with a different base-learner order");

  const auto stored_digest = r.u64();
  auto config = decode_config(r);
  if (config.digest() != stored_digest) throw FormatError("model file config digest mismatch");
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model file holds an invalid config: ") + e.what());
  }

  const auto n_labels = r.u64();
  if (n_labels > r.remaining()) throw FormatError("model file label count is malformed");
  std::vector<std::string> names;
  for (std::uint64_t i = 0; i < n_labels; ++i) names.push_back(r.str());
  LabelIndex labels(names);
  if (labels.labels() != names) throw FormatError("model file labels are not sorted and distinct");

  std::vector<BaseModel> bases;
  for (std::size_t m = 0; m < kBaseLearnerCount; ++m) bases.push_back(BaseModel::decode(r, labels));
  auto meta = Mlp::decode(r);

  TrainingLedger ledger;
  ledger.stacking_digest = r.u64();
  ledger.label_digest = r.u64();
  ledger.meta_source = static_cast<MetaSource>(r.u8());
  ledger.train_size = r.u64();
  const auto n_models = r.u64();
  if (n_models != kBaseLearnerCount + 1) throw FormatError("model file ledger is malformed");
  for (std::uint64_t i = 0; i < n_models; ++i) {
    LedgerEntry e;
    e.name = r.str();
    e.seed = r.u64();
    e.config_digest = r.u64();
    e.parameter_digest = r.u64();
    e.train_accuracy = r.f64();
    e.validation_accuracy = r.f64();
    e.wall_seconds = std::numeric_limits<double>::quiet_NaN();
    ledger.models.push_back(std::move(e));
  }
  const auto n_folds = r.u64();
  if (n_folds > r.remaining()) throw FormatError("model file fold ledger is malformed");
  for (std::uint64_t i = 0; i < n_folds; ++i) {
    ledger.fold_ids.push_back(r.str());
    ledger.folds.push_back(r.u32());
  }
  if (r.remaining() != 4) throw FormatError("model file has trailing bytes");

  try {
    return EnsembleModel(std::move(config), std::move(labels), std::move(bases), std::move(meta), std::move(ledger));
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("model file is inconsistent: ") + e.what());
  }
}

void save_model(const EnsembleModel& model, const std::filesystem::path& path) {
  write_file_bytes(path.string(), encode_model(model));
}

EnsembleModel load_model(const std::filesystem::path& path) { return decode_model(read_file_bytes(path.string())); }

}  // namespace authid
