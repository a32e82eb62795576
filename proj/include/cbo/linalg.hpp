#pragma once

// Small dense vectors and row-major matrices. Sizes here are tiny (d, p <= a
// few hundred), so the value types own their storage and the heavy loops go
// through the kernel table.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cbo/kernels.hpp"

namespace cbo {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  // y = A x
  Vector apply(std::span<const double> x) const;
  // y = A^T x
  Vector apply_transposed(std::span<const double> x) const;

  Matrix transposed() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> x, std::span<const double> y) {
  return kernels::dot(x, y);
}

inline double norm(std::span<const double> x) { return std::sqrt(dot(x, x)); }

inline double norm_inf(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

// y += a x
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  kernels::axpy(a, x, y);
}

inline Vector add(std::span<const double> x, std::span<const double> y) {
  Vector out(y.begin(), y.end());
  axpy(1.0, x, out);
  return out;
}

inline Vector subtract(std::span<const double> x, std::span<const double> y) {
  Vector out(x.begin(), x.end());
  axpy(-1.0, y, out);
  return out;
}

inline Vector scaled(double a, std::span<const double> x) {
  Vector out(x.size());
  kernels::current().axpby(a, x.data(), 0.0, out.data(), x.size());
  return out;
}

bool all_finite(std::span<const double> x);

// max_k |a_k - b_k| / max(|b_k|, floor); the usual oracle-comparison metric.
double max_relative_error(std::span<const double> actual,
                          std::span<const double> expected, double floor = 1e-7);

// ||a - b|| / max(||b||, floor)
double relative_error(std::span<const double> actual,
                      std::span<const double> expected, double floor = 1e-12);

}  // namespace cbo
