#include "authid/learners/probability.hpp"

#include <algorithm>
#include <cmath>

namespace authid {

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double shift = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += p[i] = std::exp(logits[i] - shift);
  for (auto& x : p) x /= sum;
  return p;
}

double cross_entropy(std::span<const double> predicted, std::size_t true_index) {
  return -std::log(predicted[true_index] + kCrossEntropyFloor);
}

bool is_simplex(std::span<const double> p, double tolerance) noexcept {
  if (p.empty()) return false;
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0 && x <= 1.0)) return false;
    sum += x;
  }
  return std::abs(sum - 1.0) <= tolerance;
}

std::size_t argmax(std::span<const double> values) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

}  // namespace authid
