#pragma once

// Two-level stacking: five base classifiers produce class posteriors, which are
// concatenated into meta-features for a meta MLP.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "authid/corpus.hpp"
#include "authid/learners/base_model.hpp"
#include "authid/learners/mlp.hpp"
#include "authid/matrix.hpp"
#include "authid/metrics.hpp"

namespace authid {

enum class MetaSource : std::uint8_t { in_sample, k_fold };

std::string_view to_string(MetaSource source) noexcept;

struct StackingConfig {
  MetaSource meta_source = MetaSource::in_sample;
  std::size_t folds = 5;  // k_fold only
  BinningConfig binning;
  CommentProfile profile = CommentProfile::python();
  BaseLearnerConfigs base;
  MlpConfig meta = MlpConfig::meta_default();
  std::uint64_t seed = 0;

  void validate() const;
  // Every field, seed included.
  std::uint64_t digest() const;

  // Sub-seeds: base learner m (in kLearnerOrder position) and the meta MLP.
  std::uint64_t learner_seed(std::size_t position) const noexcept;
  std::uint64_t meta_seed() const noexcept;
  std::uint64_t fold_seed() const noexcept;
};

// Concatenation of the five base posteriors in kLearnerOrder. Throws
// DimensionError unless there are exactly five blocks of length n_classes.
FeatureVector assemble_meta_features(std::span<const std::vector<double>> blocks, std::size_t n_classes);

struct LedgerEntry {
  std::string name;
  std::uint64_t seed = 0;
  std::uint64_t config_digest = 0;
  std::uint64_t parameter_digest = 0;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;  // NaN when the learner has no hold-out
  double wall_seconds = 0.0;         // not persisted in the model file, not digested
};

struct TrainingLedger {
  std::uint64_t stacking_digest = 0;
  std::uint64_t label_digest = 0;
  MetaSource meta_source = MetaSource::in_sample;
  std::size_t train_size = 0;
  std::vector<LedgerEntry> models;     // five bases in kLearnerOrder, then "meta"
  std::vector<std::string> fold_ids;   // k_fold only: segment ids ...
  std::vector<std::uint32_t> folds;    // ... and the fold each one was held out in

  // Digest of everything except wall times.
  std::uint64_t digest() const;
  std::string to_json() const;
};

class EnsembleModel {
 public:
  EnsembleModel() = default;
  EnsembleModel(StackingConfig config, LabelIndex labels, std::vector<BaseModel> bases, Mlp meta,
                TrainingLedger ledger);

  const StackingConfig& config() const noexcept { return config_; }
  const LabelIndex& labels() const noexcept { return labels_; }
  const std::vector<BaseModel>& bases() const noexcept { return bases_; }
  const Mlp& meta() const noexcept { return meta_; }
  const TrainingLedger& ledger() const noexcept { return ledger_; }
  std::size_t meta_input_width() const noexcept { return meta_.input_dim(); }

  // Shared preprocessing: metrics + histogram vector of one segment.
  FeatureVector features(std::u32string_view text) const;
  FeatureVector meta_features(std::span<const double> features) const;
  std::vector<double> predict_proba_features(std::span<const double> features) const;
  // Throws Error on empty text.
  std::vector<double> predict_proba(std::u32string_view text) const;
  // Labels by descending probability; ties keep label order.
  std::vector<std::pair<std::string, double>> predict(std::u32string_view text) const;

 private:
  StackingConfig config_;
  LabelIndex labels_;
  std::vector<BaseModel> bases_;
  Mlp meta_;
  TrainingLedger ledger_;
};

// Sorts (label, probability) pairs by descending probability, stable in label order.
std::vector<std::pair<std::string, double>> rank(const LabelIndex& labels, std::span<const double> probabilities);

// Stratified fold of every sample, round-robin after a per-class shuffle.
// Throws CorpusError when some fold's training part would leave a class with
// fewer than two samples.
std::vector<std::uint32_t> assign_folds(std::span<const std::size_t> labels, const LabelIndex& index,
                                        std::size_t folds, std::uint64_t seed);

// Meta-features of every training sample produced by base models that never
// saw it: for fold f, each learner is trained on samples outside f with seed
// derive_seed(learner seed, f) and predicts the samples in f.
FeatureMatrix out_of_fold_meta_features(const FeatureMatrix& x, std::span<const std::size_t> labels,
                                        const LabelIndex& index, const StackingConfig& config,
                                        std::span<const std::uint32_t> folds, unsigned jobs = 1);

// Trains the full stack. `ids` name the rows (for the fold ledger); pass an
// empty span to use row numbers.
EnsembleModel train_stack(const FeatureMatrix& x, std::span<const std::size_t> labels, const LabelIndex& index,
                          std::span<const std::string> ids, const StackingConfig& config, unsigned jobs = 1);
// Extracts features from the segments first. Uses the set's LabelIndex.
EnsembleModel train_stack(const SegmentSet& train, const StackingConfig& config, unsigned jobs = 1);

// --- model file ---------------------------------------------------------------------

inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> encode_model(const EnsembleModel& model);
// Throws FormatError on bad magic, checksum or structure; VersionError on a
// format version other than kModelFormatVersion.
EnsembleModel decode_model(std::span<const std::uint8_t> bytes);
void save_model(const EnsembleModel& model, const std::filesystem::path& path);
EnsembleModel load_model(const std::filesystem::path& path);
void save_ledger(const TrainingLedger& ledger, const std::filesystem::path& path);

}  // namespace authid
