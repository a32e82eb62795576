#include <algorithm>
#include <limits>

#include "cbo/kernels.hpp"

namespace cbo::kernels::detail {
namespace {

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void axpby(double a, const double* x, double b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i] + b * y[i];
}

void gemv(const double* a, std::size_t rows, std::size_t cols,
          const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(a + r * cols, x, cols);
}

void gemv_t(const double* a, std::size_t rows, std::size_t cols,
            const double* x, double* y) {
  std::fill(y, y + cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) axpy(x[r], a + r * cols, y, cols);
}

void ger(double alpha, const double* x, std::size_t rows, const double* y,
         std::size_t cols, double* a) {
  for (std::size_t r = 0; r < rows; ++r) axpy(alpha * x[r], y, a + r * cols, cols);
}

double barrier_terms(const double* delta, const double* upper,
                     const double* lower, double c, double* grad, double* curv,
                     std::size_t n) {
  double min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    const double mu = upper[k] - delta[k];
    const double ml = lower[k] + delta[k];
    min_margin = std::min(min_margin, std::min(mu, ml));
    const double iu = 1.0 / mu;
    const double il = 1.0 / ml;
    if (grad != nullptr) grad[k] = c * iu - c * il;
    if (curv != nullptr) curv[k] = c * (iu * iu) + c * (il * il);
  }
  return min_margin;
}

void project_box(double* x, const double* upper, const double* lower,
                 std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    x[k] = std::min(std::max(x[k], -lower[k]), upper[k]);
  }
}

void sign_step(double step, const double* g, double* x, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    if (g[k] > 0.0) {
      x[k] -= step;
    } else if (g[k] < 0.0) {
      x[k] += step;
    }
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{dot,           axpy,        axpby,
                             gemv,          gemv_t,      ger,
                             barrier_terms, project_box, sign_step};
  return t;
}

}  // namespace cbo::kernels::detail
