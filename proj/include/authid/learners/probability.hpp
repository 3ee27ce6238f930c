#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace authid {

inline constexpr double kCrossEntropyFloor = 1e-12;

// Max-shifted normalized exponential.
std::vector<double> softmax(std::span<const double> logits);

// -log(predicted[true_index] + kCrossEntropyFloor)
double cross_entropy(std::span<const double> predicted, std::size_t true_index);

// Entries in [0,1] summing to 1 within `tolerance`.
bool is_simplex(std::span<const double> p, double tolerance = 1e-9) noexcept;

// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values) noexcept;

}  // namespace authid
