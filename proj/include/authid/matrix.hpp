#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "authid/error.hpp"

namespace authid {

using FeatureVector = std::vector<double>;

// Row-major dense matrix; one row per sample.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<const double> data() const noexcept { return data_; }

  void append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_) throw DimensionError(cols_, values.size());
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  // Rows at the given indices, in that order.
  FeatureMatrix select(std::span<const std::size_t> indices) const {
    FeatureMatrix out(0, cols_);
    out.data_.reserve(indices.size() * cols_);
    for (auto i : indices) out.append_row(row(i));
    return out;
  }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace authid
