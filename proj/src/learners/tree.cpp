#include "authid/learners/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "authid/error.hpp"

namespace authid {

double gini_impurity(std::span<const std::size_t> class_counts) {
  const double n = static_cast<double>(std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0}));
  if (n == 0.0) return 0.0;
  double sum_sq = 0.0;
  for (auto c : class_counts) {
    double p = static_cast<double>(c) / n;
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

double entropy(std::span<const std::size_t> class_counts) {
  const double n = static_cast<double>(std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0}));
  if (n == 0.0) return 0.0;
  double h = 0.0;
  for (auto c : class_counts) {
    if (c == 0) continue;
    double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

double gain_ratio(std::span<const std::size_t> parent_counts, std::span<const std::vector<std::size_t>> child_counts) {
  const std::size_t n = std::accumulate(parent_counts.begin(), parent_counts.end(), std::size_t{0});
  if (n == 0) return 0.0;
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> total(parent_counts.size(), 0);
  double remainder = 0.0;
  for (const auto& child : child_counts) {
    if (child.size() != parent_counts.size()) throw Error("gain_ratio: child class count mismatch");
    std::size_t m = std::accumulate(child.begin(), child.end(), std::size_t{0});
    for (std::size_t k = 0; k < child.size(); ++k) total[k] += child[k];
    sizes.push_back(m);
    remainder += static_cast<double>(m) / static_cast<double>(n) * entropy(child);
  }
  if (!std::equal(total.begin(), total.end(), parent_counts.begin()))
    throw Error("gain_ratio: children do not partition the parent");
  const double split_info = entropy(sizes);
  if (split_info <= 0.0) return 0.0;
  return (entropy(parent_counts) - remainder) / split_info;
}

// --- DecisionTree ----------------------------------------------------------------

DecisionTree DecisionTree::constant(std::vector<double> distribution) {
  DecisionTree t;
  t.n_classes_ = distribution.size();
  t.nodes_.push_back(Node{-1, 0.0, 0, 0});
  t.leaves_ = std::move(distribution);
  return t;
}

std::size_t DecisionTree::leaf_count() const noexcept {
  return n_classes_ == 0 ? 0 : leaves_.size() / n_classes_;
}

std::size_t DecisionTree::depth() const noexcept {
  if (nodes_.empty()) return 0;
  std::size_t best = 0;
  std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (nodes_[i].feature >= 0) {
      stack.push_back({nodes_[i].left, d + 1});
      stack.push_back({nodes_[i].right, d + 1});
    }
  }
  return best;
}

std::span<const double> DecisionTree::leaf_distribution(std::span<const double> x) const {
  std::uint32_t i = 0;
  while (nodes_[i].feature >= 0) {
    const auto& n = nodes_[i];
    i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return {leaves_.data() + static_cast<std::size_t>(nodes_[i].left) * n_classes_, n_classes_};
}

void DecisionTree::encode(BinaryWriter& w) const {
  w.u64(n_classes_);
  w.u64(nodes_.size());
  for (const auto& n : nodes_) {
    w.u32(static_cast<std::uint32_t>(n.feature));
    w.f64(n.threshold);
    w.u32(n.left);
    w.u32(n.right);
  }
  w.f64s(leaves_);
}

DecisionTree DecisionTree::decode(BinaryReader& r) {
  DecisionTree t;
  t.n_classes_ = r.u64();
  const std::uint64_t n_nodes = r.u64();
  if (n_nodes == 0 || n_nodes > r.remaining() / 20) throw FormatError("stored tree has an invalid node count");
  t.nodes_.resize(n_nodes);
  for (auto& n : t.nodes_) {
    n.feature = static_cast<std::int32_t>(r.u32());
    n.threshold = r.f64();
    n.left = r.u32();
    n.right = r.u32();
  }
  t.leaves_ = r.f64s();
  if (t.n_classes_ == 0 || t.leaves_.size() % t.n_classes_ != 0) throw FormatError("stored tree leaves malformed");
  const std::size_t n_leaves = t.leaves_.size() / t.n_classes_;
  for (std::size_t i = 0; i < t.nodes_.size(); ++i) {
    const auto& n = t.nodes_[i];
    bool ok = n.feature >= 0 ? (n.left > i && n.right > i && n.left < n_nodes && n.right < n_nodes)
                             : n.left < n_leaves;
    if (!ok) throw FormatError("stored tree has dangling node references");
  }
  return t;
}

// --- training --------------------------------------------------------------------

namespace detail {

struct SplitChoice {
  std::size_t feature;
  double threshold;
  double score;
};

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& x, std::span<const std::size_t> labels, std::size_t n_classes,
              const TreeConfig& config, Rng& rng)
      : x_(x), labels_(labels), k_(n_classes), config_(config), rng_(rng) {
    features_.resize(x.cols());
    std::iota(features_.begin(), features_.end(), std::size_t{0});
  }

  DecisionTree build(std::vector<std::size_t> rows) {
    tree_.n_classes_ = k_;
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  std::vector<std::size_t> counts_of(std::span<const std::size_t> rows) const {
    std::vector<std::size_t> c(k_, 0);
    for (auto r : rows) ++c[labels_[r]];
    return c;
  }

  std::uint32_t make_leaf(const std::vector<std::size_t>& counts, std::size_t n) {
    auto leaf_index = static_cast<std::uint32_t>(tree_.leaves_.size() / k_);
    for (auto c : counts) tree_.leaves_.push_back(static_cast<double>(c) / static_cast<double>(n));
    tree_.nodes_.push_back(DecisionTree::Node{-1, 0.0, leaf_index, 0});
    return static_cast<std::uint32_t>(tree_.nodes_.size() - 1);
  }

  std::uint32_t grow(std::vector<std::size_t>& rows, std::size_t depth) {
    const auto counts = counts_of(rows);
    const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
    const bool depth_cap = config_.max_depth > 0 && depth >= config_.max_depth;
    if (pure || rows.size() < std::max<std::size_t>(2, config_.min_samples_split) || depth_cap)
      return make_leaf(counts, rows.size());

    auto split = find_split(rows, counts);
    if (!split) return make_leaf(counts, rows.size());

    std::vector<std::size_t> left, right;
    for (auto r : rows) (x_(r, split->feature) <= split->threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    const auto index = static_cast<std::uint32_t>(tree_.nodes_.size());
    tree_.nodes_.push_back(
        DecisionTree::Node{static_cast<std::int32_t>(split->feature), split->threshold, 0, 0});
    const auto l = grow(left, depth + 1);
    const auto r = grow(right, depth + 1);
    tree_.nodes_[index].left = l;
    tree_.nodes_[index].right = r;
    return index;
  }

  std::optional<SplitChoice> find_split(std::span<const std::size_t> rows, const std::vector<std::size_t>& parent) {
    rng_.shuffle(std::span<std::size_t>(features_));
    const std::size_t budget =
        config_.max_features == 0 ? features_.size() : std::min(config_.max_features, features_.size());
    std::optional<SplitChoice> best;
    for (std::size_t f = 0; f < features_.size(); ++f) {
      if (f >= budget && best) break;
      evaluate(features_[f], rows, parent, best);
    }
    return best;
  }

  void evaluate(std::size_t feature, std::span<const std::size_t> rows, const std::vector<std::size_t>& parent,
                std::optional<SplitChoice>& best) {
    sorted_.clear();
    for (auto r : rows) sorted_.push_back({x_(r, feature), labels_[r]});
    std::sort(sorted_.begin(), sorted_.end());
    if (sorted_.front().first == sorted_.back().first) return;

    const std::size_t n = sorted_.size();
    const double parent_entropy = config_.criterion == SplitCriterion::gain_ratio ? entropy(parent) : 0.0;
    left_.assign(k_, 0);
    right_ = parent;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      ++left_[sorted_[i].second];
      --right_[sorted_[i].second];
      const double a = sorted_[i].first, b = sorted_[i + 1].first;
      if (!(a < b)) continue;
      const double nl = static_cast<double>(i + 1), nr = static_cast<double>(n - i - 1);
      double score;
      if (config_.criterion == SplitCriterion::gini_impurity) {
        score = -(nl * gini_impurity(left_) + nr * gini_impurity(right_)) / static_cast<double>(n);
      } else {
        const double pl = nl / static_cast<double>(n), pr = nr / static_cast<double>(n);
        const double gain = parent_entropy - pl * entropy(left_) - pr * entropy(right_);
        const double split_info = -(pl * std::log2(pl) + pr * std::log2(pr));
        score = gain / split_info;
      }
      if (!best || score > best->score) {
        double t = a + (b - a) / 2.0;
        if (!(t < b)) t = a;
        best = SplitChoice{feature, t, score};
      }
    }
  }

  const FeatureMatrix& x_;
  std::span<const std::size_t> labels_;
  std::size_t k_;
  const TreeConfig& config_;
  Rng& rng_;
  DecisionTree tree_;
  std::vector<std::size_t> features_;
  std::vector<std::pair<double, std::size_t>> sorted_;
  std::vector<std::size_t> left_, right_;
};

}  // namespace detail

DecisionTree train_decision_tree(const FeatureMatrix& x, std::span<const std::size_t> labels, std::size_t n_classes,
                                 std::span<const std::size_t> rows, const TreeConfig& config, Rng& rng) {
  if (rows.empty()) throw Error("decision tree: no training samples");
  if (x.cols() == 0) throw Error("decision tree: zero-dimensional features");
  for (auto r : rows)
    if (r >= x.rows() || labels[r] >= n_classes) throw Error("decision tree: sample or label index out of range");
  return detail::TreeBuilder(x, labels, n_classes, config, rng).build(std::vector<std::size_t>(rows.begin(), rows.end()));
}

}  // namespace authid
