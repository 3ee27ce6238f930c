#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "authid/error.hpp"
#include "authid/learners/forest.hpp"
#include "authid/learners/mlp.hpp"
#include "authid/learners/probability.hpp"
#include "authid/learners/svm.hpp"
#include "authid/learners/tree.hpp"
#include "oracles.hpp"

using namespace authid;

namespace {

FeatureMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  FeatureMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (auto& v : m.row(r)) v = rng.uniform(-1.0, 1.0);
  return m;
}

// Three well-separated blobs in d dimensions.
struct Blobs {
  FeatureMatrix x;
  std::vector<std::size_t> y;
};

Blobs blobs(std::uint64_t seed, std::size_t per_class, std::size_t k = 3, std::size_t d = 4) {
  Rng rng(seed);
  Blobs b{FeatureMatrix(0, d), {}};
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      std::vector<double> row(d);
      for (std::size_t f = 0; f < d; ++f) row[f] = (f % k == c ? 1.0 : 0.0) + rng.normal(0.0, 0.15);
      b.x.append_row(row);
      b.y.push_back(c);
    }
  return b;
}

}  // namespace

TEST_CASE("softmax examples") {
  auto p = softmax(std::vector<double>{0, 0, 0});
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 3.0));
  p = softmax(std::vector<double>{std::log(2.0), 0.0});
  CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  p = softmax(std::vector<double>{1000.0, 0.0});
  CHECK(std::isfinite(p[0]));
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p[1] >= 0.0);
  CHECK(p[1] < 1e-300);
}

TEST_CASE("cross-entropy examples") {
  CHECK(cross_entropy(std::vector<double>{1, 0}, 0) == doctest::Approx(0.0));
  CHECK(cross_entropy(std::vector<double>{0.5, 0.5}, 1) == doctest::Approx(std::log(2.0)));
  const double floor_case = cross_entropy(std::vector<double>{0, 1}, 0);
  CHECK(std::isfinite(floor_case));
  CHECK(floor_case == doctest::Approx(-std::log(kCrossEntropyFloor)));
}

TEST_CASE("argmax and simplex helpers") {
  CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
  CHECK(is_simplex(std::vector<double>{0.25, 0.75}));
  CHECK_FALSE(is_simplex(std::vector<double>{0.5, 0.6}));
  CHECK_FALSE(is_simplex(std::vector<double>{-0.1, 1.1}));
}

TEST_CASE("default MLP layer sequences") {
  const auto base = MlpConfig::base_default();
  REQUIRE(base.layers.size() == 14);
  CHECK(base.layers.front().kind == LayerKind::input);
  for (int i = 1; i <= 8; ++i) CHECK(base.layers[i] == LayerSpec::dense(128));
  CHECK(base.layers[9] == LayerSpec::dropout(0.25));
  CHECK(base.layers[10] == LayerSpec::dense(128));
  CHECK(base.layers[11] == LayerSpec::dropout(0.25));
  CHECK(base.layers[12] == LayerSpec::dense(128));
  CHECK(base.layers[13].kind == LayerKind::output);
  CHECK(base.optimizer.kind == OptimizerSpec::Kind::adam);

  const auto meta = MlpConfig::meta_default();
  CHECK(meta.layers.front().kind == LayerKind::input);
  CHECK(meta.layers.back().kind == LayerKind::output);
  CHECK(meta.optimizer.kind == OptimizerSpec::Kind::sgd);
  CHECK(std::count_if(meta.layers.begin(), meta.layers.end(),
                      [](const LayerSpec& l) { return l.kind == LayerKind::dense; }) == 13);
}

TEST_CASE("MLP config validation") {
  auto cfg = MlpConfig::base_default();
  cfg.layers[9].dropout_rate = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = MlpConfig::base_default();
  cfg.layers[1].width = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = MlpConfig::base_default();
  cfg.optimizer.beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = MlpConfig::base_default();
  cfg.layers.erase(cfg.layers.begin());
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("first Adam step moves every parameter by about -lr") {
  Optimizer opt(OptimizerSpec::adam(0.01), 5);
  std::vector<double> params(5, 0.5), grad(5, 1.0);
  opt.step(params, grad);
  for (double p : params) CHECK(p - 0.5 == doctest::Approx(-0.01).epsilon(1e-5));
}

TEST_CASE("SGD with zero momentum is plain gradient descent") {
  Optimizer opt(OptimizerSpec::sgd(0.001, 0.0), 2);
  std::vector<double> params{1.0, -1.0}, grad{2.0, -4.0};
  opt.step(params, grad);
  CHECK(params[0] == doctest::Approx(1.0 - 0.002));
  CHECK(params[1] == doctest::Approx(-1.0 + 0.004));
}

TEST_CASE("zero-initialized network outputs the uniform distribution") {
  Mlp net(MlpConfig::base_default(16).layers, 7, 4);
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    auto x = random_matrix(rng, 1, 7);
    for (double p : net.predict_proba(x.row(0))) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
  }
}

TEST_CASE("MLP output is the softmax of its logits") {
  Mlp net(MlpConfig::base_default(8).layers, 5, 3);
  Rng rng(11);
  net.initialize(rng);
  auto x = random_matrix(rng, 1, 5);
  auto p = net.predict_proba(x.row(0));
  auto s = softmax(net.logits(x.row(0)));
  for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == s[i]);
}

TEST_CASE("MLP rejects inputs of the wrong dimension") {
  Mlp net(MlpConfig::base_default(8).layers, 5, 3);
  std::vector<double> x(4, 0.0);
  CHECK_THROWS_AS(net.predict_proba(x), DimensionError);
}

TEST_CASE("analytic gradient matches central differences on a 2-class width-3 net") {
  std::vector<LayerSpec> layers{LayerSpec::input(), LayerSpec::dense(3), LayerSpec::output()};
  Mlp net(layers, 4, 2);
  Rng rng(5);
  net.initialize(rng);
  auto x = random_matrix(rng, 6, 4);
  std::vector<std::size_t> y{0, 1, 0, 1, 1, 0};
  auto check = test::check_gradient(net, x, y, std::nullopt);
  CHECK(check.max_relative_error < 1e-4);
}

TEST_CASE("gradient check with dropout and several depths") {
  Rng rng(99);
  for (int trial = 0; trial < 6; ++trial) {
    std::vector<LayerSpec> layers{LayerSpec::input()};
    const std::size_t depth = 1 + rng.below(3);
    for (std::size_t l = 0; l < depth; ++l) {
      layers.push_back(LayerSpec::dense(2 + rng.below(5)));
      if (rng.bernoulli(0.5)) layers.push_back(LayerSpec::dropout(0.3));
    }
    layers.push_back(LayerSpec::output());
    const std::size_t d = 2 + rng.below(4), k = 2 + rng.below(3);
    Mlp net(layers, d, k);
    test::randomize_parameters(net, rng);
    auto x = random_matrix(rng, 8, d);
    std::vector<std::size_t> y(8);
    for (auto& v : y) v = rng.below(k);
    auto check = test::check_gradient(net, x, y, std::uint64_t{1234 + static_cast<unsigned>(trial)});
    INFO("trial " << trial);
    CHECK(check.max_relative_error < 1e-4);
  }
}

TEST_CASE("MLP training learns separable blobs deterministically") {
  auto data = blobs(1, 40);
  auto cfg = MlpConfig::base_default(32);
  cfg.seed = 7;
  cfg.epochs = 60;
  auto a = train_mlp(data.x, data.y, 3, cfg);
  auto b = train_mlp(data.x, data.y, 3, cfg);
  CHECK(std::equal(a.net.parameters().begin(), a.net.parameters().end(), b.net.parameters().begin()));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.x.rows(); ++i) correct += argmax(a.net.predict_proba(data.x.row(i))) == data.y[i];
  CHECK(static_cast<double>(correct) / static_cast<double>(data.x.rows()) >= 0.9);
  CHECK(a.summary.validation_size > 0);
}

TEST_CASE("MLP divergence names the epoch") {
  auto data = blobs(2, 10);
  for (std::size_t r = 0; r < data.x.rows(); ++r) data.x(r, 0) = std::numeric_limits<double>::quiet_NaN();
  auto cfg = MlpConfig::base_default(8);
  try {
    train_mlp(data.x, data.y, 3, cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("MLP serialization round trip") {
  Mlp net(MlpConfig::base_default(8).layers, 5, 3);
  Rng rng(4);
  net.initialize(rng);
  BinaryWriter w;
  net.encode(w);
  BinaryReader r(w.bytes());
  auto copy = Mlp::decode(r);
  auto x = random_matrix(rng, 1, 5);
  CHECK(copy.predict_proba(x.row(0)) == net.predict_proba(x.row(0)));
}

TEST_CASE("gini impurity examples") {
  CHECK(gini_impurity(std::vector<std::size_t>{4, 0}) == 0.0);
  CHECK(gini_impurity(std::vector<std::size_t>{2, 2}) == doctest::Approx(0.5));
  CHECK(gini_impurity(std::vector<std::size_t>{1, 1, 1, 1}) == doctest::Approx(0.75));
}

TEST_CASE("gain ratio examples") {
  using Counts = std::vector<std::size_t>;
  std::vector<Counts> perfect{{2, 0}, {0, 2}};
  CHECK(gain_ratio(Counts{2, 2}, perfect) == doctest::Approx(1.0));
  std::vector<Counts> same{{1, 1}, {2, 2}};
  CHECK(gain_ratio(Counts{3, 3}, same) == 0.0);

  // [2,2] -> [2,1] | [0,1], evaluated by hand:
  // H(parent) = 1; H([2,1]) = log2(3) - 2/3; remainder = 3/4 H([2,1]);
  // split info = H([3,1]) = 2 - (3/4) log2(3).
  std::vector<Counts> uneven{{2, 1}, {0, 1}};
  const double h21 = std::log2(3.0) - 2.0 / 3.0;
  const double expected = (1.0 - 0.75 * h21) / (2.0 - 0.75 * std::log2(3.0));
  CHECK(expected == doctest::Approx(0.3836885).epsilon(1e-6));
  CHECK(gain_ratio(Counts{2, 2}, uneven) == doctest::Approx(expected).epsilon(1e-12));

  std::vector<Counts> bad{{2, 1}, {1, 1}};
  CHECK_THROWS(gain_ratio(Counts{2, 2}, bad));
}

TEST_CASE("decision tree basics") {
  Rng rng(1);
  SUBCASE("single class gives a single leaf") {
    FeatureMatrix x(3, 1);
    std::vector<std::size_t> y{1, 1, 1}, rows{0, 1, 2};
    auto t = train_decision_tree(x, y, 2, rows, {}, rng);
    CHECK(t.leaf_count() == 1);
    auto p = t.leaf_distribution(x.row(0));
    CHECK(p[1] == 1.0);
  }
  SUBCASE("1-D separable data gives one split with pure children") {
    FeatureMatrix x(0, 1);
    x.append_row(std::vector<double>{0.0});
    x.append_row(std::vector<double>{1.0});
    std::vector<std::size_t> y{0, 1}, rows{0, 1};
    for (auto crit : {SplitCriterion::gini_impurity, SplitCriterion::gain_ratio}) {
      TreeConfig cfg;
      cfg.criterion = crit;
      auto t = train_decision_tree(x, y, 2, rows, cfg, rng);
      CHECK(t.node_count() == 3);
      CHECK(t.leaf_distribution(std::vector<double>{0.0})[0] == 1.0);
      CHECK(t.leaf_distribution(std::vector<double>{1.0})[1] == 1.0);
      CHECK(t.leaf_distribution(std::vector<double>{0.4})[0] == 1.0);
      CHECK(t.leaf_distribution(std::vector<double>{0.6})[1] == 1.0);
    }
  }
}

TEST_CASE("unlimited-depth tree fits any consistent dataset") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 20 + rng.below(181), d = 1 + rng.below(5), k = 2 + rng.below(4);
    FeatureMatrix x(n, d);
    std::vector<std::size_t> y(n), rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (auto& v : x.row(i)) v = static_cast<double>(rng.below(4));  // heavy ties
      y[i] = rng.below(k);
    }
    // Make labels consistent: identical rows share the first row's label.
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (std::equal(x.row(i).begin(), x.row(i).end(), x.row(j).begin())) {
          y[i] = y[j];
          break;
        }
    TreeConfig cfg;
    cfg.criterion = trial % 2 ? SplitCriterion::gain_ratio : SplitCriterion::gini_impurity;
    cfg.max_features = 1;
    auto t = train_decision_tree(x, y, k, rows, cfg, rng);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += argmax(t.leaf_distribution(x.row(i))) == y[i];
    CHECK(correct == n);
  }
}

TEST_CASE("forest of one tree on a two-point set") {
  FeatureMatrix x(0, 1);
  x.append_row(std::vector<double>{0.0});
  x.append_row(std::vector<double>{1.0});
  std::vector<std::size_t> y{0, 1};
  ForestConfig cfg;
  cfg.n_trees = 1;
  // Bootstrap may miss a point; search for a seed whose resample holds both.
  bool found = false;
  for (std::uint64_t seed = 0; seed < 20 && !found; ++seed) {
    cfg.seed = seed;
    auto f = train_random_forest(x, y, 2, cfg);
    if (f.trees()[0].node_count() == 3) {
      found = true;
      CHECK(f.predict_proba(std::vector<double>{0.0})[0] == 1.0);
    }
  }
  CHECK(found);
}

TEST_CASE("forest on pure data predicts that class with certainty") {
  FeatureMatrix x(10, 3);
  Rng rng(2);
  for (std::size_t i = 0; i < 10; ++i)
    for (auto& v : x.row(i)) v = rng.uniform();
  std::vector<std::size_t> y(10, 2);
  auto f = train_random_forest(x, y, 3, ForestConfig{});
  auto p = f.predict_proba(x.row(4));
  CHECK(p[2] == 1.0);
}

TEST_CASE("hard voting returns vote fractions") {
  std::vector<DecisionTree> trees;
  for (int i = 0; i < 80; ++i) trees.push_back(DecisionTree::constant({0.6, 0.4}));
  for (int i = 0; i < 20; ++i) trees.push_back(DecisionTree::constant({0.3, 0.7}));
  RandomForest f(std::move(trees), 2, 2, Voting::hard);
  auto p = f.predict_proba(std::vector<double>{0.0, 0.0});
  CHECK(p[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.2).epsilon(1e-15));
  f.set_voting(Voting::soft);
  p = f.predict_proba(std::vector<double>{0.0, 0.0});
  CHECK(p[0] == doctest::Approx(0.54));
  CHECK_THROWS_AS(f.predict_proba(std::vector<double>{0.0}), DimensionError);
}

TEST_CASE("forest monotonicity, OOB accuracy, determinism across jobs") {
  auto data = blobs(8, 30, 3, 6);
  ForestConfig one;
  one.n_trees = 1;
  one.seed = 3;
  ForestConfig hundred = one;
  hundred.n_trees = 100;
  auto accuracy = [&](const RandomForest& f) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < data.x.rows(); ++i) c += argmax(f.predict_proba(data.x.row(i))) == data.y[i];
    return static_cast<double>(c) / static_cast<double>(data.x.rows());
  };
  auto f1 = train_random_forest(data.x, data.y, 3, one);
  auto f100 = train_random_forest(data.x, data.y, 3, hundred, 4);
  CHECK(accuracy(f100) >= accuracy(f1) - 0.02);
  CHECK(f100.oob_accuracy() >= 0.9);

  auto serial = train_random_forest(data.x, data.y, 3, hundred, 1);
  BinaryWriter a, b;
  f100.encode(a);
  serial.encode(b);
  CHECK(a.bytes() == b.bytes());

  BinaryReader r(a.bytes());
  auto copy = RandomForest::decode(r);
  CHECK(copy.predict_proba(data.x.row(5)) == f100.predict_proba(data.x.row(5)));
}

TEST_CASE("SMO matches the projected-gradient QP oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto s = test::separable_2d(seed);
    KernelMatrix k(s.x, KernelType::linear, 0.0);
    auto sol = solve_c_svc(k, s.y, 1.0, 1e-3);
    CHECK(max_kkt_violation(k, s.y, sol) <= 1e-3);
    std::vector<double> w(2, 0.0);
    for (std::size_t i = 0; i < s.x.rows(); ++i)
      for (std::size_t f = 0; f < 2; ++f) w[f] += sol.coef[i] * s.x(i, f);
    auto oracle = test::qp_oracle_normal(s.x, s.y, 1.0, 20000);
    const double nw = std::hypot(w[0], w[1]), no = std::hypot(oracle[0], oracle[1]);
    INFO("seed " << seed);
    CHECK(std::abs(w[0] / nw - oracle[0] / no) < 1e-3);
    CHECK(std::abs(w[1] / nw - oracle[1] / no) < 1e-3);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < s.x.rows(); ++i)
      correct += (w[0] * s.x(i, 0) + w[1] * s.x(i, 1) + sol.bias > 0) == (s.y[i] > 0);
    CHECK(correct == s.x.rows());
  }
}

TEST_CASE("nu-SVM bounds at nu = 0.15") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto s = test::separable_2d(seed + 100);
    KernelMatrix k(s.x, KernelType::rbf, 1.0);
    auto sol = solve_nu_svc(k, s.y, 0.15, 1e-3);
    const double n = static_cast<double>(s.x.rows());
    std::size_t sv = 0, margin_errors = 0;
    for (std::size_t i = 0; i < s.x.rows(); ++i) {
      sv += sol.alpha[i] > 0.0;
      double f = sol.bias;
      for (std::size_t j = 0; j < s.x.rows(); ++j) f += sol.coef[j] * k(i, j);
      margin_errors += s.y[i] * f < 1.0 - 1e-3;
    }
    CHECK(static_cast<double>(margin_errors) / n <= 0.15);
    CHECK(static_cast<double>(sv) / n >= 0.15);
  }
}

TEST_CASE("infeasible nu is rejected") {
  FeatureMatrix x(10, 1);
  for (std::size_t i = 0; i < 10; ++i) x(i, 0) = static_cast<double>(i);
  std::vector<std::int8_t> y{+1, +1, -1, -1, -1, -1, -1, -1, -1, -1};
  KernelMatrix k(x, KernelType::rbf, 1.0);
  CHECK_THROWS_AS(solve_nu_svc(k, y, 0.5, 1e-3), ConfigError);
  CHECK_NOTHROW(solve_nu_svc(k, y, 0.4, 1e-3));
}

TEST_CASE("SMO iteration cap raises a convergence error") {
  auto s = test::separable_2d(3);
  KernelMatrix k(s.x, KernelType::linear, 0.0);
  try {
    solve_c_svc(k, s.y, 1.0, 1e-3, 1);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(std::string(e.what()).find('1') != std::string::npos);
  }
}

TEST_CASE("Platt fit orders probabilities by decision value") {
  std::vector<double> dec{-2, -1.5, -1, -0.5, 0.5, 1, 1.5, 2};
  std::vector<std::int8_t> y{-1, -1, -1, -1, +1, +1, +1, +1};
  auto s = fit_platt(dec, y);
  CHECK(s.a < 0.0);
  CHECK(s(2.0) > 0.5);
  CHECK(s(-2.0) < 0.5);
  CHECK(s(1.0) > s(0.0));
}

TEST_CASE("multiclass SVMs: accuracy, simplex outputs, round trip") {
  auto data = blobs(12, 25);
  for (auto cfg : {SvmConfig::c_default(), SvmConfig::nu_default()}) {
    auto m = train_svm(data.x, data.y, 3, cfg);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.x.rows(); ++i) {
      auto p = m.predict_proba(data.x.row(i));
      CHECK(is_simplex(p));
      correct += argmax(p) == data.y[i];
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(data.x.rows()) >= 0.95);
    BinaryWriter w;
    m.encode(w);
    BinaryReader r(w.bytes());
    auto copy = SvmModel::decode(r);
    CHECK(copy.predict_proba(data.x.row(3)) == m.predict_proba(data.x.row(3)));
    CHECK_THROWS_AS(m.predict_proba(std::vector<double>{1.0}), DimensionError);
  }
}

TEST_CASE("SVM training preconditions") {
  FeatureMatrix x(3, 2);
  std::vector<std::size_t> y{0, 0, 1};
  CHECK_THROWS(train_svm(x, y, 2, SvmConfig::c_default()));
  SvmConfig bad;
  bad.c = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = SvmConfig::nu_default();
  bad.nu = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("scale gamma heuristic") {
  FeatureMatrix constant(4, 3);
  CHECK(scale_gamma(constant) == 1.0);
  FeatureMatrix x(0, 2);
  x.append_row(std::vector<double>{0.0, 1.0});
  x.append_row(std::vector<double>{1.0, 0.0});
  CHECK(scale_gamma(x) == doctest::Approx(1.0 / (2.0 * 0.25)));
}
