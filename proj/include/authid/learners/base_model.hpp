#pragma once

// A trained base classifier of the stack, with the metadata needed to audit
// and reload it.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "authid/binary_io.hpp"
#include "authid/corpus.hpp"
#include "authid/learners/forest.hpp"
#include "authid/learners/mlp.hpp"
#include "authid/learners/svm.hpp"
#include "authid/matrix.hpp"

namespace authid {

enum class LearnerKind : std::uint8_t { mlp, forest_gini, forest_gain_ratio, c_svm, nu_svm };

inline constexpr std::size_t kBaseLearnerCount = 5;
// Meta-feature block order.
inline constexpr std::array<LearnerKind, kBaseLearnerCount> kLearnerOrder{
    LearnerKind::mlp, LearnerKind::forest_gini, LearnerKind::forest_gain_ratio, LearnerKind::c_svm,
    LearnerKind::nu_svm};

std::string_view learner_name(LearnerKind kind) noexcept;
std::uint64_t learner_order_digest() noexcept;

struct BaseLearnerConfigs {
  MlpConfig mlp = MlpConfig::base_default();
  ForestConfig forest_gini;
  ForestConfig forest_gain_ratio;
  SvmConfig c_svm = SvmConfig::c_default();
  SvmConfig nu_svm = SvmConfig::nu_default();

  BaseLearnerConfigs() { forest_gain_ratio.tree.criterion = SplitCriterion::gain_ratio; }

  void validate() const;
  // Digest of one learner's config, seed excluded.
  std::uint64_t digest(LearnerKind kind) const;
};

struct BaseTrainingInfo {
  double validation_accuracy = 0.0;  // MLP hold-out, forest out-of-bag; NaN for SVMs
};

class BaseModel {
 public:
  using Model = std::variant<Mlp, RandomForest, SvmModel>;

  BaseModel() = default;
  BaseModel(LearnerKind kind, Model model, LabelIndex labels, std::uint64_t seed, std::uint64_t config_digest);

  LearnerKind kind() const noexcept { return kind_; }
  const LabelIndex& labels() const noexcept { return labels_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t config_digest() const noexcept { return config_digest_; }
  const Model& model() const noexcept { return model_; }
  std::size_t input_dim() const noexcept;
  std::size_t n_classes() const noexcept { return labels_.size(); }

  // Simplex over labels() order. Throws DimensionError on a length mismatch.
  std::vector<double> predict_proba(std::span<const double> x) const;

  // Digest of the encoded parameters.
  std::uint64_t parameter_digest() const;

  // The label index is stored once per ensemble, not per model.
  void encode(BinaryWriter& w) const;
  static BaseModel decode(BinaryReader& r, const LabelIndex& labels);

 private:
  void encode_parameters(BinaryWriter& w) const;

  LearnerKind kind_ = LearnerKind::mlp;
  Model model_;
  LabelIndex labels_;
  std::uint64_t seed_ = 0;
  std::uint64_t config_digest_ = 0;
};

struct TrainedBase {
  BaseModel model;
  BaseTrainingInfo info;
};

// Trains one learner on rows of x. `seed` replaces the seed in the learner's
// config; `jobs` only affects forest tree growing.
TrainedBase train_base_model(LearnerKind kind, const FeatureMatrix& x, std::span<const std::size_t> labels,
                             const LabelIndex& index, const BaseLearnerConfigs& configs, std::uint64_t seed,
                             unsigned jobs = 1);

}  // namespace authid
