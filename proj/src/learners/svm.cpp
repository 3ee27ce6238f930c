#include "authid/learners/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "authid/digest.hpp"
#include "authid/error.hpp"
#include "authid/simd/kernels.hpp"

namespace authid {

void SvmConfig::validate() const {
  if (type == SvmType::c_svc && !(c > 0.0)) throw ConfigError("svm: C must be > 0");
  if (type == SvmType::nu_svc && !(nu > 0.0 && nu <= 1.0)) throw ConfigError("svm: nu must be in (0,1]");
  if (!(gamma >= 0.0)) throw ConfigError("svm: gamma must be > 0 (or 0 for the scale heuristic)");
  if (!(tolerance > 0.0)) throw ConfigError("svm: tolerance must be > 0");
  if (max_iterations < 0) throw ConfigError("svm: max_iterations must be >= 0");
}

void SvmConfig::encode(BinaryWriter& w) const {
  w.u8(static_cast<std::uint8_t>(type));
  w.f64(c);
  w.f64(nu);
  w.u8(static_cast<std::uint8_t>(kernel));
  w.f64(gamma);
  w.f64(tolerance);
  w.i64(max_iterations);
}

SvmConfig SvmConfig::decode(BinaryReader& r) {
  SvmConfig s;
  s.type = static_cast<SvmType>(r.u8());
  s.c = r.f64();
  s.nu = r.f64();
  s.kernel = static_cast<KernelType>(r.u8());
  s.gamma = r.f64();
  s.tolerance = r.f64();
  s.max_iterations = r.i64();
  return s;
}

std::uint64_t SvmConfig::digest() const {
  BinaryWriter w;
  encode(w);
  return Digest{}.update(w.bytes()).value();
}

// --- kernels ---------------------------------------------------------------------

double kernel_value(KernelType kernel, double gamma, std::span<const double> a, std::span<const double> b) {
  if (kernel == KernelType::linear) return simd::dot(a, b);
  return std::exp(-gamma * simd::squared_distance(a, b));
}

double scale_gamma(const FeatureMatrix& x) {
  auto data = x.data();
  if (data.empty()) return 1.0;
  double mean = 0.0;
  for (double v : data) mean += v;
  mean /= static_cast<double>(data.size());
  double var = 0.0;
  for (double v : data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(data.size());
  if (!(var > 0.0)) return 1.0;
  return 1.0 / (static_cast<double>(x.cols()) * var);
}

KernelMatrix::KernelMatrix(const FeatureMatrix& x, KernelType kernel, double gamma) : n_(x.rows()), k_(n_ * n_) {
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j <= i; ++j) k_[i * n_ + j] = k_[j * n_ + i] = kernel_value(kernel, gamma, x.row(i), x.row(j));
}

// --- SMO ---------------------------------------------------------------------------

namespace {

constexpr double kTau = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Minimizes 0.5 a'Qa + p'a subject to y'a = const and 0 <= a <= upper, with
// Q_ij = y_i y_j K_ij, using maximal-violating-pair selection with
// second-order working-set choice. `nu_mode` restricts pairs to a single class
// so that the per-class sums of a are also preserved.
class SmoSolver {
 public:
  SmoSolver(const KernelMatrix& k, std::span<const std::int8_t> y, std::vector<double> p, std::vector<double> alpha,
            double upper, bool nu_mode)
      : k_(k), y_(y), p_(std::move(p)), alpha_(std::move(alpha)), upper_(upper), nu_(nu_mode), g_(p_) {
    const std::size_t n = y_.size();
    for (std::size_t j = 0; j < n; ++j) {
      if (alpha_[j] == 0.0) continue;
      for (std::size_t t = 0; t < n; ++t) g_[t] += q(t, j) * alpha_[j];
    }
  }

  std::int64_t run(double eps, std::int64_t max_iterations) {
    std::int64_t iter = 0;
    std::size_t i = 0, j = 0;
    while (select(eps, i, j)) {
      if (iter >= max_iterations) throw ConvergenceError(iter);
      ++iter;
      update(i, j);
    }
    return iter;
  }

  const std::vector<double>& alpha() const noexcept { return alpha_; }
  const std::vector<double>& gradient() const noexcept { return g_; }

  bool at_upper(std::size_t t) const noexcept { return alpha_[t] >= upper_; }
  bool at_lower(std::size_t t) const noexcept { return alpha_[t] <= 0.0; }

 private:
  double q(std::size_t a, std::size_t b) const noexcept {
    return static_cast<double>(y_[a] * y_[b]) * k_(a, b);
  }

  // Returns false once the violation gap is below eps.
  bool select(double eps, std::size_t& out_i, std::size_t& out_j) const {
    const std::size_t n = y_.size();
    if (!nu_) {
      double gmax = -kInf, gmax2 = -kInf;
      std::ptrdiff_t gmax_idx = -1, gmin_idx = -1;
      for (std::size_t t = 0; t < n; ++t) {
        if (y_[t] == +1) {
          if (!at_upper(t) && -g_[t] >= gmax) gmax = -g_[t], gmax_idx = static_cast<std::ptrdiff_t>(t);
        } else if (!at_lower(t) && g_[t] >= gmax) {
          gmax = g_[t], gmax_idx = static_cast<std::ptrdiff_t>(t);
        }
      }
      if (gmax_idx < 0) return false;
      const auto i = static_cast<std::size_t>(gmax_idx);
      double obj_min = kInf;
      for (std::size_t t = 0; t < n; ++t) {
        double grad_diff;
        if (y_[t] == +1) {
          if (at_lower(t)) continue;
          gmax2 = std::max(gmax2, g_[t]);
          grad_diff = gmax + g_[t];
        } else {
          if (at_upper(t)) continue;
          gmax2 = std::max(gmax2, -g_[t]);
          grad_diff = gmax - g_[t];
        }
        if (grad_diff <= 0.0) continue;
        double quad = k_(i, i) + k_(t, t) - 2.0 * y_[i] * y_[t] * k_(i, t);
        double obj = -(grad_diff * grad_diff) / (quad > 0.0 ? quad : kTau);
        if (obj <= obj_min) obj_min = obj, gmin_idx = static_cast<std::ptrdiff_t>(t);
      }
      if (gmax + gmax2 < eps || gmin_idx < 0) return false;
      out_i = i;
      out_j = static_cast<std::size_t>(gmin_idx);
      return true;
    }

    double gmaxp = -kInf, gmaxp2 = -kInf, gmaxn = -kInf, gmaxn2 = -kInf;
    std::ptrdiff_t ip = -1, in = -1, gmin_idx = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (y_[t] == +1) {
        if (!at_upper(t) && -g_[t] >= gmaxp) gmaxp = -g_[t], ip = static_cast<std::ptrdiff_t>(t);
      } else if (!at_lower(t) && g_[t] >= gmaxn) {
        gmaxn = g_[t], in = static_cast<std::ptrdiff_t>(t);
      }
    }
    double obj_min = kInf;
    for (std::size_t t = 0; t < n; ++t) {
      if (y_[t] == +1) {
        if (at_lower(t)) continue;
        gmaxp2 = std::max(gmaxp2, g_[t]);
        double grad_diff = gmaxp + g_[t];
        if (ip < 0 || grad_diff <= 0.0) continue;
        const auto a = static_cast<std::size_t>(ip);
        double quad = k_(a, a) + k_(t, t) - 2.0 * k_(a, t);
        double obj = -(grad_diff * grad_diff) / (quad > 0.0 ? quad : kTau);
        if (obj <= obj_min) obj_min = obj, gmin_idx = static_cast<std::ptrdiff_t>(t);
      } else {
        if (at_upper(t)) continue;
        gmaxn2 = std::max(gmaxn2, -g_[t]);
        double grad_diff = gmaxn - g_[t];
        if (in < 0 || grad_diff <= 0.0) continue;
        const auto a = static_cast<std::size_t>(in);
        double quad = k_(a, a) + k_(t, t) - 2.0 * k_(a, t);
        double obj = -(grad_diff * grad_diff) / (quad > 0.0 ? quad : kTau);
        if (obj <= obj_min) obj_min = obj, gmin_idx = static_cast<std::ptrdiff_t>(t);
      }
    }
    if (std::max(gmaxp + gmaxp2, gmaxn + gmaxn2) < eps || gmin_idx < 0) return false;
    out_j = static_cast<std::size_t>(gmin_idx);
    out_i = static_cast<std::size_t>(y_[out_j] == +1 ? ip : in);
    return true;
  }

  void update(std::size_t i, std::size_t j) {
    const double c = upper_;
    const double old_i = alpha_[i], old_j = alpha_[j];
    double& ai = alpha_[i];
    double& aj = alpha_[j];
    if (y_[i] != y_[j]) {
      double quad = k_(i, i) + k_(j, j) + 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (-g_[i] - g_[j]) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0.0) {
        if (aj < 0.0) aj = 0.0, ai = diff;
      } else if (ai < 0.0) {
        ai = 0.0, aj = -diff;
      }
      if (diff > 0.0) {
        if (ai > c) ai = c, aj = c - diff;
      } else if (aj > c) {
        aj = c, ai = c + diff;
      }
    } else {
      double quad = k_(i, i) + k_(j, j) - 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (g_[i] - g_[j]) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > c) {
        if (ai > c) ai = c, aj = sum - c;
      } else if (aj < 0.0) {
        aj = 0.0, ai = sum;
      }
      if (sum > c) {
        if (aj > c) aj = c, ai = sum - c;
      } else if (ai < 0.0) {
        ai = 0.0, aj = sum;
      }
    }
    const double di = ai - old_i, dj = aj - old_j;
    const double yi = y_[i], yj = y_[j];
    auto ki = k_.row(i), kj = k_.row(j);
    for (std::size_t t = 0; t < g_.size(); ++t) g_[t] += y_[t] * (yi * ki[t] * di + yj * kj[t] * dj);
  }

  const KernelMatrix& k_;
  std::span<const std::int8_t> y_;
  std::vector<double> p_;
  std::vector<double> alpha_;
  double upper_;
  bool nu_;
  std::vector<double> g_;
};

void check_binary_labels(const KernelMatrix& k, std::span<const std::int8_t> y) {
  if (k.size() != y.size()) throw Error("svm: kernel size does not match label count");
  bool pos = false, neg = false;
  for (auto v : y) {
    if (v == +1) {
      pos = true;
    } else if (v == -1) {
      neg = true;
    } else {
      throw Error("svm: binary labels must be -1 or +1");
    }
  }
  if (!pos || !neg) throw Error("svm: both classes must be present");
}

std::int64_t iteration_cap(std::int64_t requested, std::size_t n) {
  if (requested > 0) return requested;
  return std::max<std::int64_t>(10'000'000, 100 * static_cast<std::int64_t>(n));
}

}  // namespace

BinarySvmSolution solve_c_svc(const KernelMatrix& k, std::span<const std::int8_t> y, double c, double tolerance,
                              std::int64_t max_iterations) {
  check_binary_labels(k, y);
  const std::size_t n = y.size();
  SmoSolver solver(k, y, std::vector<double>(n, -1.0), std::vector<double>(n, 0.0), c, false);
  BinarySvmSolution s;
  s.iterations = solver.run(tolerance, iteration_cap(max_iterations, n));

  const auto& g = solver.gradient();
  double ub = kInf, lb = -kInf, sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double yg = y[i] * g[i];
    if (solver.at_upper(i)) {
      if (y[i] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (solver.at_lower(i)) {
      if (y[i] == +1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;

  s.alpha = solver.alpha();
  s.coef.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.coef[i] = s.alpha[i] * y[i];
  s.bias = -rho;
  s.upper_bound = c;
  return s;
}

BinarySvmSolution solve_nu_svc(const KernelMatrix& k, std::span<const std::int8_t> y, double nu, double tolerance,
                               std::int64_t max_iterations) {
  check_binary_labels(k, y);
  const std::size_t n = y.size();
  std::size_t n_pos = 0;
  for (auto v : y) n_pos += v == +1;
  const std::size_t n_neg = n - n_pos;
  const double bound = 2.0 * static_cast<double>(std::min(n_pos, n_neg)) / static_cast<double>(n);
  if (nu > bound)
    throw ConfigError("nu-svm: nu = " + std::to_string(nu) + " is infeasible for this class balance (must be <= " +
                      std::to_string(bound) + ")");

  std::vector<double> alpha(n, 0.0);
  double sum_pos = nu * static_cast<double>(n) / 2.0, sum_neg = sum_pos;
  for (std::size_t i = 0; i < n; ++i) {
    double& remaining = y[i] == +1 ? sum_pos : sum_neg;
    alpha[i] = std::min(1.0, remaining);
    remaining -= alpha[i];
  }
  SmoSolver solver(k, y, std::vector<double>(n, 0.0), std::move(alpha), 1.0, true);
  BinarySvmSolution s;
  s.iterations = solver.run(tolerance, iteration_cap(max_iterations, n));

  const auto& g = solver.gradient();
  double ub[2] = {kInf, kInf}, lb[2] = {-kInf, -kInf}, sum_free[2] = {0.0, 0.0};
  std::size_t n_free[2] = {0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    const int side = y[i] == +1 ? 0 : 1;
    if (solver.at_upper(i)) {
      lb[side] = std::max(lb[side], g[i]);
    } else if (solver.at_lower(i)) {
      ub[side] = std::min(ub[side], g[i]);
    } else {
      ++n_free[side];
      sum_free[side] += g[i];
    }
  }
  double r_side[2];
  for (int side = 0; side < 2; ++side)
    r_side[side] = n_free[side] > 0 ? sum_free[side] / static_cast<double>(n_free[side]) : (ub[side] + lb[side]) / 2.0;
  const double r = (r_side[0] + r_side[1]) / 2.0;
  const double rho = (r_side[0] - r_side[1]) / 2.0;
  if (!(r > 0.0)) throw Error("nu-svm: degenerate solution (non-positive margin scale)");

  s.alpha = solver.alpha();
  for (auto& a : s.alpha) a /= r;
  s.coef.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.coef[i] = s.alpha[i] * y[i];
  s.bias = -rho / r;
  s.upper_bound = 1.0 / r;
  return s;
}

double max_kkt_violation(const KernelMatrix& k, std::span<const std::int8_t> y, const BinarySvmSolution& s) {
  double worst = 0.0;
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < n; ++i) {
    double f = s.bias;
    auto row = k.row(i);
    for (std::size_t j = 0; j < n; ++j) f += s.coef[j] * row[j];
    const double margin = y[i] * f;
    double v;
    if (s.alpha[i] <= 0.0) {
      v = std::max(0.0, 1.0 - margin);
    } else if (s.alpha[i] >= s.upper_bound) {
      v = std::max(0.0, margin - 1.0);
    } else {
      v = std::abs(margin - 1.0);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

// --- Platt scaling ------------------------------------------------------------------

double PlattSigmoid::operator()(double decision) const noexcept {
  const double z = a * decision + b;
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

PlattSigmoid fit_platt(std::span<const double> decisions, std::span<const std::int8_t> y) {
  const std::size_t n = decisions.size();
  double prior1 = 0.0, prior0 = 0.0;
  for (auto v : y) (v > 0 ? prior1 : prior0) += 1.0;
  const double hi = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo = 1.0 / (prior0 + 2.0);
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = y[i] > 0 ? hi : lo;

  auto objective = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = decisions[i] * a + b;
      f += z >= 0.0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
    }
    return f;
  };

  constexpr int kMaxIter = 100;
  constexpr double kMinStep = 1e-10;
  constexpr double kSigma = 1e-12;
  constexpr double kEps = 1e-5;
  double a = 0.0, b = std::log((prior0 + 1.0) / (prior1 + 1.0));
  double fval = objective(a, b);

  for (int iter = 0; iter < kMaxIter; ++iter) {
    double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = decisions[i] * a + b;
      double p, q;
      if (z >= 0.0) {
        const double e = std::exp(-z);
        p = e / (1.0 + e);
        q = 1.0 / (1.0 + e);
      } else {
        const double e = std::exp(z);
        p = 1.0 / (1.0 + e);
        q = e / (1.0 + e);
      }
      const double d2 = p * q;
      h11 += decisions[i] * decisions[i] * d2;
      h22 += d2;
      h21 += decisions[i] * d2;
      const double d1 = t[i] - p;
      g1 += decisions[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < kEps && std::abs(g2) < kEps) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    while (step >= kMinStep) {
      const double na = a + step * da, nb = b + step * db;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        a = na, b = nb, fval = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < kMinStep) break;
  }
  return {a, b};
}

// --- multiclass model -----------------------------------------------------------------

std::vector<double> SvmModel::decision_values(std::span<const double> x) const {
  if (x.size() != input_dim()) throw DimensionError(input_dim(), x.size());
  const std::size_t n_sv = support_vectors_.rows();
  std::vector<double> kv(n_sv);
  for (std::size_t s = 0; s < n_sv; ++s) kv[s] = kernel_value(kernel_, gamma_, support_vectors_.row(s), x);
  std::vector<double> out(n_classes());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = simd::dot(coef_.data() + c * n_sv, kv.data(), n_sv) + bias_[c];
  return out;
}

std::vector<double> SvmModel::predict_proba(std::span<const double> x) const {
  auto dv = decision_values(x);
  double sum = 0.0;
  for (std::size_t c = 0; c < dv.size(); ++c) sum += dv[c] = platt_[c](dv[c]);
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    std::fill(dv.begin(), dv.end(), 1.0 / static_cast<double>(dv.size()));
    return dv;
  }
  for (auto& p : dv) p /= sum;
  return dv;
}

std::vector<double> SvmModel::linear_weights(std::size_t cls) const {
  if (kernel_ != KernelType::linear) throw Error("svm: primal weights exist only for the linear kernel");
  const std::size_t n_sv = support_vectors_.rows();
  std::vector<double> w(input_dim(), 0.0);
  for (std::size_t s = 0; s < n_sv; ++s) simd::axpy(coef_.at(cls * n_sv + s), support_vectors_.row(s), w);
  return w;
}

void SvmModel::encode(BinaryWriter& w) const {
  w.u8(static_cast<std::uint8_t>(kernel_));
  w.f64(gamma_);
  w.u64(support_vectors_.rows());
  w.u64(support_vectors_.cols());
  for (double v : support_vectors_.data()) w.f64(v);
  w.f64s(coef_);
  w.f64s(bias_);
  for (const auto& p : platt_) {
    w.f64(p.a);
    w.f64(p.b);
  }
}

SvmModel SvmModel::decode(BinaryReader& r) {
  SvmModel m;
  m.kernel_ = static_cast<KernelType>(r.u8());
  if (m.kernel_ != KernelType::rbf && m.kernel_ != KernelType::linear) throw FormatError("stored svm: unknown kernel");
  m.gamma_ = r.f64();
  const std::uint64_t rows = r.u64(), cols = r.u64();
  if (cols == 0 || rows > r.remaining() / 8 / cols) throw FormatError("stored svm: invalid support vector block");
  m.support_vectors_ = FeatureMatrix(rows, cols);
  for (std::uint64_t i = 0; i < rows; ++i)
    for (auto& v : m.support_vectors_.row(i)) v = r.f64();
  m.coef_ = r.f64s();
  m.bias_ = r.f64s();
  if (m.bias_.empty() || m.coef_.size() != m.bias_.size() * rows) throw FormatError("stored svm: coefficient shape");
  m.platt_.resize(m.bias_.size());
  for (auto& p : m.platt_) {
    p.a = r.f64();
    p.b = r.f64();
  }
  return m;
}

SvmModel train_svm(const FeatureMatrix& x, std::span<const std::size_t> labels, std::size_t n_classes,
                   const SvmConfig& config) {
  config.validate();
  const std::size_t n = x.rows();
  if (labels.size() != n) throw Error("svm: label count does not match sample count");
  if (n_classes < 2) throw Error("svm: at least 2 classes are required");
  std::vector<std::size_t> counts(n_classes, 0);
  for (auto l : labels) {
    if (l >= n_classes) throw Error("svm: label index out of range");
    ++counts[l];
  }
  for (std::size_t c = 0; c < n_classes; ++c)
    if (counts[c] < 2)
      throw Error("svm: class " + std::to_string(c) + " has " + std::to_string(counts[c]) +
                  " sample(s); at least 2 are required");

  SvmModel model;
  model.kernel_ = config.kernel;
  model.gamma_ = config.kernel == KernelType::rbf ? (config.gamma > 0.0 ? config.gamma : scale_gamma(x)) : 0.0;
  const KernelMatrix k(x, config.kernel, model.gamma_);

  std::vector<std::vector<double>> coefs(n_classes);
  model.bias_.resize(n_classes);
  model.platt_.resize(n_classes);
  std::vector<std::int8_t> y(n);
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t i = 0; i < n; ++i) y[i] = labels[i] == c ? +1 : -1;
    auto sol = config.type == SvmType::c_svc
                   ? solve_c_svc(k, y, config.c, config.tolerance, config.max_iterations)
                   : solve_nu_svc(k, y, config.nu, config.tolerance, config.max_iterations);
    std::vector<double> decisions(n);
    for (std::size_t i = 0; i < n; ++i) decisions[i] = simd::dot(sol.coef.data(), k.row(i).data(), n) + sol.bias;
    model.platt_[c] = fit_platt(decisions, y);
    model.bias_[c] = sol.bias;
    coefs[c] = std::move(sol.coef);
  }

  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < n; ++i)
    if (std::any_of(coefs.begin(), coefs.end(), [i](const auto& cf) { return cf[i] != 0.0; })) support.push_back(i);
  model.support_vectors_ = x.select(support);
  if (support.empty()) model.support_vectors_ = FeatureMatrix(0, x.cols());
  model.coef_.reserve(n_classes * support.size());
  for (std::size_t c = 0; c < n_classes; ++c)
    for (auto i : support) model.coef_.push_back(coefs[c][i]);
  return model;
}

}  // namespace authid
