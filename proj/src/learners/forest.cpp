#include "authid/learners/forest.hpp"

#include <cmath>
#include <limits>

#include "authid/digest.hpp"
#include "authid/error.hpp"
#include "authid/learners/probability.hpp"
#include "authid/parallel.hpp"

namespace authid {

void ForestConfig::validate() const {
  if (n_trees < 1) throw ConfigError("forest: n_trees must be >= 1");
  if (tree.min_samples_split < 2) throw ConfigError("forest: min_samples_split must be >= 2");
}

void ForestConfig::encode(BinaryWriter& w) const {
  w.u64(n_trees);
  w.u8(static_cast<std::uint8_t>(tree.criterion));
  w.u64(tree.max_depth);
  w.u64(tree.min_samples_split);
  w.u64(tree.max_features);
  w.u8(static_cast<std::uint8_t>(voting));
  w.u64(max_features);
  w.u64(seed);
}

ForestConfig ForestConfig::decode(BinaryReader& r) {
  ForestConfig c;
  c.n_trees = r.u64();
  c.tree.criterion = static_cast<SplitCriterion>(r.u8());
  c.tree.max_depth = r.u64();
  c.tree.min_samples_split = r.u64();
  c.tree.max_features = r.u64();
  c.voting = static_cast<Voting>(r.u8());
  c.max_features = r.u64();
  c.seed = r.u64();
  return c;
}

std::uint64_t ForestConfig::digest() const {
  BinaryWriter w;
  encode(w);
  return Digest{}.update(w.bytes()).value();
}

RandomForest::RandomForest(std::vector<DecisionTree> trees, std::size_t input_dim, std::size_t n_classes,
                           Voting voting)
    : trees_(std::move(trees)), input_dim_(input_dim), n_classes_(n_classes), voting_(voting) {
  if (trees_.empty()) throw Error("forest: at least one tree is required");
  for (const auto& t : trees_)
    if (t.n_classes() != n_classes_) throw Error("forest: tree class count mismatch");
}

std::vector<double> RandomForest::predict_proba(std::span<const double> x) const {
  if (x.size() != input_dim_) throw DimensionError(input_dim_, x.size());
  std::vector<double> p(n_classes_, 0.0);
  for (const auto& t : trees_) {
    auto dist = t.leaf_distribution(x);
    if (voting_ == Voting::hard) {
      p[argmax(dist)] += 1.0;
    } else {
      for (std::size_t k = 0; k < n_classes_; ++k) p[k] += dist[k];
    }
  }
  double sum = 0.0;
  for (double v : p) sum += v;
  for (auto& v : p) v /= sum;
  return p;
}

void RandomForest::encode(BinaryWriter& w) const {
  w.u64(input_dim_);
  w.u64(n_classes_);
  w.u8(static_cast<std::uint8_t>(voting_));
  w.f64(oob_accuracy_);
  w.u64(trees_.size());
  for (const auto& t : trees_) t.encode(w);
}

RandomForest RandomForest::decode(BinaryReader& r) {
  const std::size_t dim = r.u64();
  const std::size_t k = r.u64();
  auto voting = static_cast<Voting>(r.u8());
  double oob = r.f64();
  const std::uint64_t n = r.u64();
  if (n == 0 || n > r.remaining()) throw FormatError("stored forest has an invalid tree count");
  std::vector<DecisionTree> trees;
  trees.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) trees.push_back(DecisionTree::decode(r));
  try {
    RandomForest f(std::move(trees), dim, k, voting);
    f.oob_accuracy_ = oob;
    return f;
  } catch (const Error& e) {
    throw FormatError(std::string("invalid stored forest: ") + e.what());
  }
}

RandomForest train_random_forest(const FeatureMatrix& x, std::span<const std::size_t> labels, std::size_t n_classes,
                                 const ForestConfig& config, unsigned jobs) {
  config.validate();
  const std::size_t n = x.rows();
  if (n == 0) throw Error("forest: empty training set");
  if (labels.size() != n) throw Error("forest: label count does not match sample count");

  TreeConfig tree_cfg = config.tree;
  tree_cfg.max_features = config.max_features != 0
                              ? config.max_features
                              : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(x.cols()))));

  std::vector<DecisionTree> trees(config.n_trees);
  std::vector<std::vector<bool>> in_bag(config.n_trees, std::vector<bool>(n, false));
  parallel_for(config.n_trees, jobs, [&](std::size_t t) {
    Rng rng(derive_seed(config.seed, t));
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) {
      r = rng.below(n);
      in_bag[t][r] = true;
    }
    trees[t] = train_decision_tree(x, labels, n_classes, rows, tree_cfg, rng);
  });

  RandomForest forest(std::move(trees), x.cols(), n_classes, config.voting);

  std::size_t oob_n = 0, oob_correct = 0;
  std::vector<double> votes(n_classes);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(votes.begin(), votes.end(), 0.0);
    bool any = false;
    for (std::size_t t = 0; t < forest.trees_.size(); ++t) {
      if (in_bag[t][i]) continue;
      any = true;
      auto dist = forest.trees_[t].leaf_distribution(x.row(i));
      for (std::size_t k = 0; k < n_classes; ++k) votes[k] += dist[k];
    }
    if (!any) continue;
    ++oob_n;
    oob_correct += argmax(votes) == labels[i];
  }
  forest.oob_accuracy_ = oob_n == 0 ? std::numeric_limits<double>::quiet_NaN()
                                    : static_cast<double>(oob_correct) / static_cast<double>(oob_n);
  return forest;
}

}  // namespace authid
