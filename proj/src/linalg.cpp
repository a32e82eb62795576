#include "cbo/linalg.hpp"

#include <algorithm>

namespace cbo {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Vector Matrix::apply(std::span<const double> x) const {
  Vector y(rows_);
  kernels::current().gemv(data_.data(), rows_, cols_, x.data(), y.data());
  return y;
}

Vector Matrix::apply_transposed(std::span<const double> x) const {
  Vector y(cols_);
  kernels::current().gemv_t(data_.data(), rows_, cols_, x.data(), y.data());
  return y;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  }
  return t;
}

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

double max_relative_error(std::span<const double> actual,
                          std::span<const double> expected, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double scale = std::max(std::abs(expected[i]), floor);
    worst = std::max(worst, std::abs(actual[i] - expected[i]) / scale);
  }
  return worst;
}

double relative_error(std::span<const double> actual,
                      std::span<const double> expected, double floor) {
  double diff = 0.0;
  double ref = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    diff += (actual[i] - expected[i]) * (actual[i] - expected[i]);
    ref += expected[i] * expected[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), floor);
}

}  // namespace cbo
