// Compiled with -mavx2 -mfma. Only reached when the CPU reports both.

#include <immintrin.h>

#include <algorithm>
#include <limits>

#include "cbo/kernels.hpp"

namespace cbo::kernels::detail {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

inline double hmin(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_min_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_min_sd(lo, swapped));
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4),
                           _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void axpby(double a, const double* x, double b, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d by = _mm256_mul_pd(vb, _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), by));
  }
  for (; i < n; ++i) y[i] = a * x[i] + b * y[i];
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
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d vc = _mm256_set1_pd(c);
  __m256d vmin = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d d = _mm256_loadu_pd(delta + k);
    const __m256d mu = _mm256_sub_pd(_mm256_loadu_pd(upper + k), d);
    const __m256d ml = _mm256_add_pd(_mm256_loadu_pd(lower + k), d);
    vmin = _mm256_min_pd(vmin, _mm256_min_pd(mu, ml));
    const __m256d iu = _mm256_div_pd(one, mu);
    const __m256d il = _mm256_div_pd(one, ml);
    if (grad != nullptr) {
      _mm256_storeu_pd(grad + k,
                       _mm256_sub_pd(_mm256_mul_pd(vc, iu), _mm256_mul_pd(vc, il)));
    }
    if (curv != nullptr) {
      const __m256d sq = _mm256_mul_pd(vc, _mm256_mul_pd(iu, iu));
      _mm256_storeu_pd(curv + k, _mm256_fmadd_pd(vc, _mm256_mul_pd(il, il), sq));
    }
  }
  double min_margin = hmin(vmin);
  for (; k < n; ++k) {
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
  const __m256d zero = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d lo = _mm256_sub_pd(zero, _mm256_loadu_pd(lower + k));
    __m256d v = _mm256_max_pd(_mm256_loadu_pd(x + k), lo);
    v = _mm256_min_pd(v, _mm256_loadu_pd(upper + k));
    _mm256_storeu_pd(x + k, v);
  }
  for (; k < n; ++k) x[k] = std::min(std::max(x[k], -lower[k]), upper[k]);
}

void sign_step(double step, const double* g, double* x, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d vs = _mm256_set1_pd(step);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d vg = _mm256_loadu_pd(g + k);
    const __m256d pos = _mm256_and_pd(_mm256_cmp_pd(vg, zero, _CMP_GT_OQ), vs);
    const __m256d neg = _mm256_and_pd(_mm256_cmp_pd(vg, zero, _CMP_LT_OQ), vs);
    __m256d vx = _mm256_loadu_pd(x + k);
    vx = _mm256_add_pd(_mm256_sub_pd(vx, pos), neg);
    _mm256_storeu_pd(x + k, vx);
  }
  for (; k < n; ++k) {
    if (g[k] > 0.0) {
      x[k] -= step;
    } else if (g[k] < 0.0) {
      x[k] += step;
    }
  }
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable t{dot,           axpy,        axpby,
                             gemv,          gemv_t,      ger,
                             barrier_terms, project_box, sign_step};
  return &t;
}

}  // namespace cbo::kernels::detail
