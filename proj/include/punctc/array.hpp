// punctc/array.hpp — dense row-major double arrays and matmul kernels.
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "punctc/common.hpp"

namespace punctc {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

class Array {
 public:
  Array() = default;

  explicit Array(std::vector<size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

  Array(std::vector<size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    ensure(count(shape_) == data_.size(), "array: shape holds ", count(shape_),
           " values but ", data_.size(), " were given");
  }

  static Array scalar(double v) { return Array({1}, {v}); }

  const std::vector<size_t>& shape() const { return shape_; }
  size_t ndim() const { return shape_.size(); }
  size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  size_t rows() const {
    ensure(ndim() == 2, "array: rows() needs a 2-d array, got ", ndim(), "-d");
    return shape_[0];
  }
  size_t cols() const {
    ensure(ndim() == 2, "array: cols() needs a 2-d array, got ", ndim(), "-d");
    return shape_[1];
  }

  double& at(size_t i) { return data_[i]; }
  double at(size_t i) const { return data_[i]; }
  double& at(size_t i, size_t j) { return data_[i * shape_[1] + j]; }
  double at(size_t i, size_t j) const { return data_[i * shape_[1] + j]; }

  std::span<double> row(size_t i) {
    return std::span<double>(data_.data() + i * shape_[1], shape_[1]);
  }
  std::span<const double> row(size_t i) const {
    return std::span<const double>(data_.data() + i * shape_[1], shape_[1]);
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool same_shape(const Array& other) const { return shape_ == other.shape_; }

 private:
  static size_t count(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

  std::vector<size_t> shape_;
  std::vector<double> data_;
};

// C (+)= A * B
inline void gemm(const Array& a, const Array& b, Array& c, bool accumulate) {
  size_t m = a.rows(), k = a.cols(), n = b.cols();
  ensure(b.rows() == k && c.rows() == m && c.cols() == n, "gemm: shape mismatch");
  if (!accumulate) c.fill(0.0);
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  double* cp = c.data().data();
  for (size_t i = 0; i < m; ++i) {
    for (size_t p = 0; p < k; ++p) {
      double av = ap[i * k + p];
      if (av == 0.0) continue;
      const double* brow = bp + p * n;
      double* crow = cp + i * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C (+)= A * B^T, with A [m x k], B [n x k]
inline void gemm_nt(const Array& a, const Array& b, Array& c, bool accumulate) {
  size_t m = a.rows(), k = a.cols(), n = b.rows();
  ensure(b.cols() == k && c.rows() == m && c.cols() == n, "gemm_nt: shape mismatch");
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  double* cp = c.data().data();
  for (size_t i = 0; i < m; ++i) {
    const double* arow = ap + i * k;
    for (size_t j = 0; j < n; ++j) {
      const double* brow = bp + j * k;
      double acc = 0.0;
      for (size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      if (accumulate) {
        cp[i * n + j] += acc;
      } else {
        cp[i * n + j] = acc;
      }
    }
  }
}

// C (+)= A^T * B, with A [m x k], B [m x n]
inline void gemm_tn(const Array& a, const Array& b, Array& c, bool accumulate) {
  size_t m = a.rows(), k = a.cols(), n = b.cols();
  ensure(b.rows() == m && c.rows() == k && c.cols() == n, "gemm_tn: shape mismatch");
  if (!accumulate) c.fill(0.0);
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  double* cp = c.data().data();
  for (size_t i = 0; i < m; ++i) {
    const double* brow = bp + i * n;
    for (size_t p = 0; p < k; ++p) {
      double av = ap[i * k + p];
      if (av == 0.0) continue;
      double* crow = cp + p * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double hi = a > b ? a : b;
  double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

inline double log_sum_exp(std::span<const double> xs) {
  double hi = kNegInf;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

}  // namespace punctc
