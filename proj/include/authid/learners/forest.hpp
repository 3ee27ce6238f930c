#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "authid/learners/tree.hpp"

namespace authid {

enum class Voting : std::uint8_t { soft, hard };

struct ForestConfig {
  std::size_t n_trees = 100;
  TreeConfig tree;
  Voting voting = Voting::soft;
  // Features considered per split; 0 = ceil(sqrt(d)).
  std::size_t max_features = 0;
  std::uint64_t seed = 0;

  void validate() const;
  std::uint64_t digest() const;
  void encode(BinaryWriter& w) const;
  static ForestConfig decode(BinaryReader& r);
};

class RandomForest {
 public:
  RandomForest() = default;
  RandomForest(std::vector<DecisionTree> trees, std::size_t input_dim, std::size_t n_classes, Voting voting);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t n_classes() const noexcept { return n_classes_; }
  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
  Voting voting() const noexcept { return voting_; }
  void set_voting(Voting v) noexcept { voting_ = v; }

  // Soft: mean leaf distribution. Hard: fraction of trees whose leaf argmax is
  // each class.
  std::vector<double> predict_proba(std::span<const double> x) const;

  // Accuracy of soft out-of-bag votes over samples that were out of bag for at
  // least one tree; NaN if there were none. Only set by train_random_forest.
  double oob_accuracy() const noexcept { return oob_accuracy_; }

  void encode(BinaryWriter& w) const;
  static RandomForest decode(BinaryReader& r);

  friend RandomForest train_random_forest(const FeatureMatrix&, std::span<const std::size_t>, std::size_t,
                                          const ForestConfig&, unsigned);

 private:
  std::vector<DecisionTree> trees_;
  std::size_t input_dim_ = 0;
  std::size_t n_classes_ = 0;
  Voting voting_ = Voting::soft;
  double oob_accuracy_ = 0.0;
};

// Each tree is grown on a bootstrap resample of the full training set using its
// own seed derived from config.seed, so results do not depend on `jobs`.
RandomForest train_random_forest(const FeatureMatrix& x, std::span<const std::size_t> labels, std::size_t n_classes,
                                 const ForestConfig& config, unsigned jobs = 1);

}  // namespace authid
