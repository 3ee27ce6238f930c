// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>

#include "authid/binary_io.hpp"
#include "authid/config.hpp"
#include "authid/corpus.hpp"
#include "authid/ensemble.hpp"
#include "authid/eval.hpp"
#include "authid/learners/probability.hpp"
#include "authid/learners/svm.hpp"
#include "authid/learners/tree.hpp"
#include "cli.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace authid;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s  %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

// Runs one criterion; an exception is a failure, not a crash.
void criterion(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [ok, detail] = body();
    report(ok, name, detail);
  } catch (const std::exception& e) {
    report(false, name, std::string("exception: ") + e.what());
  }
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int run_cli(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "authid");
  std::istringstream in;
  std::ostringstream o, e;
  const int code = cli::run(args, in, o, e);
  if (out) *out = o.str();
  if (code != 0) std::fprintf(stderr, "%s", e.str().c_str());
  return code;
}

// Independent of the library's own check.
bool simplex(const std::vector<double>& p, std::size_t k) {
  if (p.size() != k) return false;
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
    s += v;
  }
  return std::abs(s - 1.0) <= 1e-9;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

FeatureMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  FeatureMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (auto& v : m.row(r)) v = rng.uniform(-1.0, 1.0);
  return m;
}

}  // namespace

int main() {
  test::TempDir work;
  const fs::path corpus = work / "corpus";
  const fs::path model_a = work / "a.model", model_b = work / "b.model";
  const std::uint64_t seed = 7;
  std::optional<EnsembleModel> eight;

  criterion("published-figure honesty", [] {
    const auto readme = test::read_text(fs::path(AUTHID_SOURCE_DIR) / "README.md");
    const bool states = readme.find("87%") != std::string::npos && readme.find("0.86") != std::string::npos &&
                        readme.find("not reproducible") != std::string::npos;
    return std::pair{states, std::string(states ? "README states that the published 87% / 0.86 / 79-83% figures are "
                                                  "not reproducible (corpus unpublished); synthetic suite substituted"
                                                : "README does not state the non-reproducibility of the published figures")};
  });

  criterion("synthetic end-to-end (8 classes x 50, 2:1 split, defaults)", [&] {
    const auto start = std::chrono::steady_clock::now();
    if (run_cli({"synth", "--classes", "8", "--segments", "50", "--seed", std::to_string(seed), "-o", corpus.string()}))
      return std::pair{false, std::string("synth failed")};
    if (run_cli({"train", "--corpus", corpus.string(), "--seed", std::to_string(seed), "-o", model_a.string()}))
      return std::pair{false, std::string("train failed")};
    eight = load_model(model_a);
    const auto test = split_dataset(scan_corpus(corpus), 2.0 / 3.0, seed).subset(Split::test);
    const auto reports = evaluate_all(*eight, test, 0);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    double best_base = 0.0;
    std::string bases;
    for (std::size_t m = 1; m < reports.size(); ++m) {
      best_base = std::max(best_base, reports[m].accuracy);
      bases += fmt(" %s=%.3f", reports[m].model_name.c_str(), reports[m].accuracy);
    }
    const double stacked = reports[0].accuracy;
    const bool ok = stacked >= 0.90 && stacked >= best_base - 0.02 && seconds < 300.0;
    return std::pair{ok, fmt("stacked=%.3f (n=%llu) best base=%.3f;%s; %.1fs", stacked,
                             static_cast<unsigned long long>(reports[0].n_samples), best_base, bases.c_str(), seconds)};
  });

  std::optional<EnsembleModel> two;
  criterion("meta-feature width = 5 x |classes| for 2 and 8 classes", [&] {
    if (!eight) return std::pair{false, std::string("no 8-class model")};
    SyntheticSpec spec;
    spec.n_classes = 2;
    spec.segments_per_class = 30;
    spec.seed = seed;
    StackingConfig cfg;
    cfg.seed = seed;
    two = train_stack(generate_synthetic_corpus(spec), cfg, 0);
    const bool ok = eight->meta_input_width() == 40 && two->meta_input_width() == 10 &&
                    eight->meta().input_dim() == 5 * eight->labels().size() &&
                    two->meta().input_dim() == 5 * two->labels().size();
    return std::pair{ok, fmt("8 classes -> %zu, 2 classes -> %zu", eight->meta_input_width(), two->meta_input_width())};
  });

  criterion("MLP gradient oracle (12 random configurations, h=1e-5)", [] {
    Rng rng(2024);
    double worst = 0.0;
    std::size_t params = 0;
    for (int trial = 0; trial < 12; ++trial) {
      std::vector<LayerSpec> layers{LayerSpec::input()};
      const std::size_t depth = 1 + rng.below(3);
      for (std::size_t l = 0; l < depth; ++l) {
        layers.push_back(LayerSpec::dense(2 + rng.below(6)));
        if (rng.bernoulli(0.5)) layers.push_back(LayerSpec::dropout(0.25));
      }
      layers.push_back(LayerSpec::output());
      const std::size_t d = 2 + rng.below(5), k = 2 + rng.below(4);
      Mlp net(layers, d, k);
      test::randomize_parameters(net, rng);
      const auto x = random_matrix(rng, 10, d);
      std::vector<std::size_t> y(10);
      for (auto& v : y) v = rng.below(k);
      const auto check = test::check_gradient(net, x, y, std::uint64_t{900u + static_cast<unsigned>(trial)});
      worst = std::max(worst, check.max_relative_error);
      params += check.parameters;
    }
    return std::pair{worst < 1e-4, fmt("max relative error %.3g over %zu parameters", worst, params)};
  });

  criterion("probability contract (1000 random inputs per learner)", [&] {
    if (!eight) return std::pair{false, std::string("no 8-class model")};
    const std::size_t k = eight->labels().size(), d = eight->config().binning.dimension();
    Rng rng(31337);
    std::vector<std::size_t> bad(kBaseLearnerCount + 1, 0);
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<double> x(d);
      switch (trial % 4) {
        case 0:  // valid histograms: each 20-bin block sums to 1
          for (std::size_t b = 0; b < d; b += 20) {
            double s = 0.0;
            for (std::size_t i = b; i < b + 20; ++i) s += x[i] = rng.uniform() < 0.3 ? rng.uniform() : 0.0;
            for (std::size_t i = b; i < b + 20; ++i) x[i] = s > 0.0 ? x[i] / s : (i == b ? 1.0 : 0.0);
          }
          break;
        case 1:
          for (auto& v : x) v = rng.uniform();
          break;
        case 2:
          for (auto& v : x) v = rng.uniform(-50.0, 50.0);
          break;
        default:
          for (auto& v : x) v = rng.bernoulli(0.1) ? 1.0 : 0.0;
      }
      for (std::size_t m = 0; m < kBaseLearnerCount; ++m) bad[m] += !simplex(eight->bases()[m].predict_proba(x), k);
      bad[kBaseLearnerCount] += !simplex(eight->predict_proba_features(x), k);
    }
    std::string detail;
    for (std::size_t m = 0; m <= kBaseLearnerCount; ++m)
      detail += fmt("%s%s=%zu", m ? " " : "off-simplex: ",
                    m < kBaseLearnerCount ? std::string(learner_name(kLearnerOrder[m])).c_str() : "stacked", bad[m]);
    return std::pair{std::all_of(bad.begin(), bad.end(), [](auto n) { return n == 0; }), detail};
  });

  criterion("micro-F1 identity (all 3x3 matrices, entries 0..3)", [] {
    std::size_t mismatches = 0, n = 0;
    for (std::uint32_t code = 0; code < 262144; ++code, ++n) {
      ConfusionMatrix m(3);
      std::uint32_t c = code;
      std::uint64_t trace = 0, total = 0;
      for (std::size_t i = 0; i < 9; ++i, c >>= 2) {
        m.at(i / 3, i % 3) = c & 3u;
        total += c & 3u;
        if (i % 4 == 0) trace += c & 3u;
      }
      const double expected = total == 0 ? 0.0 : static_cast<double>(trace) / static_cast<double>(total);
      mismatches += micro_f1(m) != expected;
    }
    return std::pair{mismatches == 0, fmt("%zu matrices, %zu mismatches", n, mismatches)};
  });

  criterion("SMO vs QP oracle on 20 separable 2-D sets; KKT; nu=0.15 bounds", [] {
    double worst_normal = 0.0, worst_kkt = 0.0, worst_margin = 0.0, min_sv = 1.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto set = test::separable_2d(1000 + s);
      const KernelMatrix lin(set.x, KernelType::linear, 0.0);
      const auto sol = solve_c_svc(lin, set.y, 1.0, 1e-3);
      worst_kkt = std::max(worst_kkt, max_kkt_violation(lin, set.y, sol));
      std::vector<double> w(2, 0.0);
      for (std::size_t i = 0; i < set.x.rows(); ++i)
        for (std::size_t f = 0; f < 2; ++f) w[f] += sol.coef[i] * set.x(i, f);
      const auto oracle = test::qp_oracle_normal(set.x, set.y, 1.0, 20000);
      const double nw = std::hypot(w[0], w[1]), no = std::hypot(oracle[0], oracle[1]);
      worst_normal = std::max({worst_normal, std::abs(w[0] / nw - oracle[0] / no), std::abs(w[1] / nw - oracle[1] / no)});

      const KernelMatrix rbf(set.x, KernelType::rbf, 1.0);
      const auto nu = solve_nu_svc(rbf, set.y, 0.15, 1e-3);
      const double n = static_cast<double>(set.x.rows());
      std::size_t sv = 0, errors = 0;
      for (std::size_t i = 0; i < set.x.rows(); ++i) {
        sv += nu.alpha[i] > 0.0;
        double f = nu.bias;
        for (std::size_t j = 0; j < set.x.rows(); ++j) f += nu.coef[j] * rbf(i, j);
        errors += set.y[i] * f < 1.0 - 1e-3;
      }
      worst_margin = std::max(worst_margin, static_cast<double>(errors) / n);
      min_sv = std::min(min_sv, static_cast<double>(sv) / n);
    }
    const bool ok = worst_normal <= 1e-3 && worst_kkt <= 1e-3 && worst_margin <= 0.15 && min_sv >= 0.15;
    return std::pair{ok, fmt("max normal diff %.2g, max KKT violation %.2g, nu: max margin-error fraction %.3f, "
                             "min SV fraction %.3f",
                             worst_normal, worst_kkt, worst_margin, min_sv)};
  });

  criterion("tree consistency (unlimited depth, <=200 samples)", [] {
    Rng rng(77);
    std::size_t fitted = 0;
    const int trials = 40;
    for (int trial = 0; trial < trials; ++trial) {
      const std::size_t n = 10 + rng.below(191), d = 1 + rng.below(6), k = 2 + rng.below(5);
      FeatureMatrix x(n, d);
      std::vector<std::size_t> y(n), rows(n);
      std::iota(rows.begin(), rows.end(), 0);
      for (std::size_t i = 0; i < n; ++i) {
        for (auto& v : x.row(i)) v = trial % 2 ? rng.uniform() : static_cast<double>(rng.below(3));
        y[i] = rng.below(k);
        for (std::size_t j = 0; j < i; ++j)
          if (std::equal(x.row(i).begin(), x.row(i).end(), x.row(j).begin())) {
            y[i] = y[j];
            break;
          }
      }
      TreeConfig cfg;
      cfg.criterion = trial % 4 < 2 ? SplitCriterion::gini_impurity : SplitCriterion::gain_ratio;
      const auto t = train_decision_tree(x, y, k, rows, cfg, rng);
      std::size_t correct = 0;
      for (std::size_t i = 0; i < n; ++i) correct += argmax(t.leaf_distribution(x.row(i))) == y[i];
      fitted += correct == n;
    }
    using Counts = std::vector<std::size_t>;
    const bool pure = gini_impurity(Counts{7, 0, 0}) == 0.0 && gini_impurity(Counts{0, 3}) == 0.0;
    const std::vector<Counts> same{{2, 4}, {1, 2}};
    const bool uninformative = gain_ratio(Counts{3, 6}, same) == 0.0;
    return std::pair{fitted == trials && pure && uninformative,
                     fmt("%zu/%d datasets fitted 100%%; pure-node gini=0: %s; uninformative gain ratio=0: %s", fitted,
                         trials, pure ? "yes" : "no", uninformative ? "yes" : "no")};
  });

  criterion("determinism and persistence", [&] {
    if (!two || !fs::exists(model_a)) return std::pair{false, std::string("earlier criteria did not produce models")};
    if (run_cli({"train", "--corpus", corpus.string(), "--seed", std::to_string(seed), "-o", model_b.string()}))
      return std::pair{false, std::string("second train failed")};
    const auto la = nlohmann::json::parse(test::read_text(model_a.string() + ".ledger.json"));
    const auto lb = nlohmann::json::parse(test::read_text(model_b.string() + ".ledger.json"));
    const bool same_digest = la["digest"] == lb["digest"];
    const bool same_file = test::read_text(model_a) == test::read_text(model_b);

    SyntheticSpec spec;
    spec.n_classes = 2;
    spec.segments_per_class = 50;
    spec.seed = seed + 1000;
    const auto probe = generate_synthetic_corpus(spec);
    std::vector<std::vector<double>> before;
    for (const auto& r : probe.records) before.push_back(two->predict_proba(r.text));
    const auto saved = work / "two.model";
    save_model(*two, saved);
    const auto loaded = load_model(saved);
    std::size_t equal = 0;
    for (std::size_t i = 0; i < probe.size(); ++i) equal += same_bits(before[i], loaded.predict_proba(probe.records[i].text));
    const bool ok = same_digest && same_file && equal == probe.size();
    return std::pair{ok, fmt("ledger digests %s (%s), model files %s, %zu/%zu reloaded predictions bit-identical",
                             same_digest ? "equal" : "differ", la["digest"].get<std::string>().c_str(),
                             same_file ? "identical" : "differ", equal, probe.size())};
  });

  criterion("classifier defaults snapshot", [] {
    const StackingConfig c;
    const auto& b = c.base;
    const bool ok = b.c_svm.c == 1.0 && b.nu_svm.nu == 0.15 && b.mlp.optimizer.kind == OptimizerSpec::Kind::adam &&
                    b.mlp.optimizer.learning_rate == 0.01 && b.mlp.optimizer.beta1 == 0.9 &&
                    b.mlp.optimizer.beta2 == 0.999 && c.meta.optimizer.kind == OptimizerSpec::Kind::sgd &&
                    c.meta.optimizer.learning_rate == 0.001 && c.meta.optimizer.momentum == 0.0 &&
                    b.mlp.batch_size == 32 && c.meta.batch_size == 32 && b.forest_gini.n_trees == 100 &&
                    b.forest_gain_ratio.n_trees == 100;
    return std::pair{ok, fmt("C=%g nu=%g base lr=%g beta1=%g beta2=%g meta lr=%g momentum=%g batch=%zu/%zu trees=%zu/%zu",
                             b.c_svm.c, b.nu_svm.nu, b.mlp.optimizer.learning_rate, b.mlp.optimizer.beta1,
                             b.mlp.optimizer.beta2, c.meta.optimizer.learning_rate, c.meta.optimizer.momentum,
                             b.mlp.batch_size, c.meta.batch_size, b.forest_gini.n_trees, b.forest_gain_ratio.n_trees)};
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
