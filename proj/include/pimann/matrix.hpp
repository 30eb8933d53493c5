#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pimann/error.hpp"

namespace pimann {

/// Dense row-major matrix. Rows are the unit of access everywhere.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t dim)
      : rows_(rows), dim_(dim), data_(rows * dim) {}
  Matrix(std::size_t rows, std::size_t dim, std::vector<T> data)
      : rows_(rows), dim_(dim), data_(std::move(data)) {
    require(data_.size() == rows_ * dim_, errc::invalid_argument,
            "matrix buffer holds " + std::to_string(data_.size()) +
                " values, expected " + std::to_string(rows_ * dim_));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return rows_ == 0; }

  std::span<const T> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  std::span<T> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

  T operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }
  T& operator()(std::size_t i, std::size_t j) { return data_[i * dim_ + j]; }

  std::span<const T> values() const noexcept { return data_; }
  std::span<T> values() noexcept { return data_; }

  void append_row(std::span<const T> r) {
    if (rows_ == 0 && dim_ == 0) dim_ = r.size();
    require(r.size() == dim_, errc::invalid_argument,
            "row of length " + std::to_string(r.size()) +
                " appended to matrix of dim " + std::to_string(dim_));
    data_.insert(data_.end(), r.begin(), r.end());
    ++rows_;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<T> data_;
};

/// N points of dimension D with 32-bit real components.
using Dataset = Matrix<float>;

inline bool all_finite(std::span<const float> values) {
  for (float v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

/// Squared L2 distance, accumulated in double over four fixed lanes (the
/// summation order depends only on the length, so results are reproducible).
inline double l2_sqr(std::span<const float> a, std::span<const float> b) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    for (std::size_t l = 0; l < 4; ++l) {
      const double d = static_cast<double>(a[i + l]) - static_cast<double>(b[i + l]);
      acc[l] += d * d;
    }
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc[0] += d * d;
  }
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

template <typename T>
Dataset to_dataset(const Matrix<T>& m) {
  Dataset out(m.rows(), m.dim());
  auto src = m.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]);
  return out;
}

}  // namespace pimann
