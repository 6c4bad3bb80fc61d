// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdm/error.hpp"

namespace fdm {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major array of doubles. Every op in this library uses rank 2
/// (rows x cols); a batch of n samples in R^d is an n x d tensor.
class Tensor {
 public:
  Tensor() : shape_{0, 0} {}
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size())
      throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_str(shape_));
  }
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0) : Tensor(Shape{rows, cols}, fill) {}

  /// Row-major literal: Tensor::from_rows({{1, 2}, {3, 4}}).
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    Tensor t(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw ConfigError("ragged tensor literal");
      std::copy(row.begin(), row.end(), t.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
      ++i;
    }
    return t;
  }

  static Tensor scalar(double v) { return Tensor(Shape{1, 1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t rows() const { return rank() == 0 ? 1 : shape_[0]; }
  std::size_t cols() const { return rank() < 2 ? 1 : shape_[1]; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }
  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }

  double item() const {
    if (data_.size() != 1) throw ConfigError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  /// Throws NumericalDivergence naming `what` if any entry is NaN/Inf.
  void check_finite(const std::string& what) const {
    if (!all_finite()) throw NumericalDivergence("non-finite values in " + what);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  /// Copies the selected rows, in order.
  Tensor gather_rows(std::span<const std::size_t> idx) const {
    Tensor out(idx.size(), cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = row(idx[i]);
      std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const std::string& what) {
  if (a.shape() != b.shape())
    throw ConfigError(what + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Squared Euclidean norm of each row.
inline std::vector<double> row_sqnorms(const Tensor& a) {
  std::vector<double> out(a.rows(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (double v : a.row(r)) out[r] += v * v;
  return out;
}

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

}  // namespace fdm
