#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "authid/binary_io.hpp"
#include "authid/matrix.hpp"
#include "authid/rng.hpp"

namespace authid {

namespace detail {
class TreeBuilder;
}

enum class SplitCriterion : std::uint8_t { gini_impurity, gain_ratio };

struct TreeConfig {
  SplitCriterion criterion = SplitCriterion::gini_impurity;
  std::size_t max_depth = 0;          // 0 = unlimited
  std::size_t min_samples_split = 2;
  std::size_t max_features = 0;       // features drawn per split; 0 = all

  friend bool operator==(const TreeConfig&, const TreeConfig&) = default;
};

// 1 - sum p_i^2; 0 for an empty node.
double gini_impurity(std::span<const std::size_t> class_counts);
// Shannon entropy in bits.
double entropy(std::span<const std::size_t> class_counts);
// (H(parent) - sum_c |c|/|parent| H(c)) / SplitInfo; 0 when SplitInfo is 0.
double gain_ratio(std::span<const std::size_t> parent_counts,
                  std::span<const std::vector<std::size_t>> child_counts);

// Binary tree over (feature <= threshold) tests; leaves hold class
// distributions.
class DecisionTree {
 public:
  struct Node {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::uint32_t left = 0;     // child index, or leaf-distribution index for leaves
    std::uint32_t right = 0;
  };

  DecisionTree() = default;
  // Single leaf with the given distribution.
  static DecisionTree constant(std::vector<double> distribution);

  std::size_t n_classes() const noexcept { return n_classes_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t leaf_count() const noexcept;
  std::size_t depth() const noexcept;

  // Class distribution of the leaf reached by x.
  std::span<const double> leaf_distribution(std::span<const double> x) const;

  void encode(BinaryWriter& w) const;
  static DecisionTree decode(BinaryReader& r);

  friend class detail::TreeBuilder;

 private:
  std::size_t n_classes_ = 0;
  std::vector<Node> nodes_;
  std::vector<double> leaves_;  // n_leaves x n_classes
};

// Grows a tree on the given sample rows (duplicates allowed, as in a
// bootstrap). At each node `max_features` features are drawn without
// replacement; if none of them separates the node the remaining features are
// tried in random order. Thresholds are midpoints between consecutive distinct
// values. A node becomes a leaf when pure, below min_samples_split, at
// max_depth, or when no feature separates it.
DecisionTree train_decision_tree(const FeatureMatrix& x, std::span<const std::size_t> labels,
                                 std::size_t n_classes, std::span<const std::size_t> rows, const TreeConfig& config,
                                 Rng& rng);

}  // namespace authid
