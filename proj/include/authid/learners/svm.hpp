#pragma once

// Support vector classifiers solved by sequential minimal optimization.
//
// Multiclass problems are decomposed one-vs-rest. Each binary machine gets a
// Platt sigmoid fitted on its training decision values, and the multiclass
// posterior is the vector of sigmoid outputs normalized to sum to one.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "authid/binary_io.hpp"
#include "authid/matrix.hpp"

namespace authid {

enum class SvmType : std::uint8_t { c_svc, nu_svc };
enum class KernelType : std::uint8_t { rbf, linear };

struct SvmConfig {
  SvmType type = SvmType::c_svc;
  double c = 1.0;
  double nu = 0.15;
  KernelType kernel = KernelType::rbf;
  double gamma = 0.0;       // rbf width; 0 = 1 / (d * variance of all feature values)
  double tolerance = 1e-3;  // SMO stopping tolerance on the maximal violating pair
  std::int64_t max_iterations = 0;  // 0 = max(10^7, 100 * n)

  static SvmConfig c_default() { return {}; }
  static SvmConfig nu_default() {
    SvmConfig c;
    c.type = SvmType::nu_svc;
    return c;
  }

  void validate() const;
  std::uint64_t digest() const;
  void encode(BinaryWriter& w) const;
  static SvmConfig decode(BinaryReader& r);
};

// Symmetric Gram matrix over a training set.
class KernelMatrix {
 public:
  KernelMatrix(const FeatureMatrix& x, KernelType kernel, double gamma);
  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return k_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const noexcept { return {k_.data() + i * n_, n_}; }

 private:
  std::size_t n_;
  std::vector<double> k_;
};

double kernel_value(KernelType kernel, double gamma, std::span<const double> a, std::span<const double> b);
// 1 / (d * variance of all entries); 1 when the variance is 0.
double scale_gamma(const FeatureMatrix& x);

// Dual solution of one binary problem with labels y in {-1, +1}. The decision
// function is f(x) = sum_i coef[i] K(x_i, x) + bias, where coef[i] = alpha[i] * y[i].
// For the nu form, alpha is rescaled to the equivalent C form with upper bound
// `upper_bound` = 1/r.
struct BinarySvmSolution {
  std::vector<double> alpha;
  std::vector<double> coef;
  double bias = 0.0;
  double upper_bound = 0.0;
  std::int64_t iterations = 0;
};

// Throws ConvergenceError past max_iterations.
BinarySvmSolution solve_c_svc(const KernelMatrix& k, std::span<const std::int8_t> y, double c, double tolerance,
                              std::int64_t max_iterations = 0);
// Throws ConfigError when nu exceeds 2 min(n+, n-) / n (infeasible).
BinarySvmSolution solve_nu_svc(const KernelMatrix& k, std::span<const std::int8_t> y, double nu, double tolerance,
                               std::int64_t max_iterations = 0);

// Largest KKT violation of a solution: |y f - 1| for free multipliers,
// max(0, 1 - y f) at the lower bound and max(0, y f - 1) at the upper bound.
double max_kkt_violation(const KernelMatrix& k, std::span<const std::int8_t> y, const BinarySvmSolution& s);

struct PlattSigmoid {
  double a = 0.0;
  double b = 0.0;
  // P(y = +1 | f) = 1 / (1 + exp(a f + b))
  double operator()(double decision) const noexcept;
};

// Newton fit with regularized targets (Lin, Lin & Weng variant of Platt).
PlattSigmoid fit_platt(std::span<const double> decisions, std::span<const std::int8_t> y);

class SvmModel {
 public:
  SvmModel() = default;

  std::size_t input_dim() const noexcept { return support_vectors_.cols(); }
  std::size_t n_classes() const noexcept { return bias_.size(); }
  std::size_t support_vector_count() const noexcept { return support_vectors_.rows(); }
  KernelType kernel() const noexcept { return kernel_; }
  double gamma() const noexcept { return gamma_; }

  // One decision value per one-vs-rest machine.
  std::vector<double> decision_values(std::span<const double> x) const;
  std::vector<double> predict_proba(std::span<const double> x) const;

  // Primal weight vector of machine `cls`; linear kernel only.
  std::vector<double> linear_weights(std::size_t cls) const;

  void encode(BinaryWriter& w) const;
  static SvmModel decode(BinaryReader& r);

  friend SvmModel train_svm(const FeatureMatrix&, std::span<const std::size_t>, std::size_t, const SvmConfig&);

 private:
  KernelType kernel_ = KernelType::rbf;
  double gamma_ = 1.0;
  FeatureMatrix support_vectors_;
  std::vector<double> coef_;  // n_classes x n_support
  std::vector<double> bias_;
  std::vector<PlattSigmoid> platt_;
};

// Requires >= 2 classes with >= 2 samples each.
SvmModel train_svm(const FeatureMatrix& x, std::span<const std::size_t> labels, std::size_t n_classes,
                   const SvmConfig& config);

}  // namespace authid
