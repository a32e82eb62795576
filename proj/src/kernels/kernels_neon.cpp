// AArch64 variant. Advanced SIMD is mandatory on AArch64, so no runtime probe
// is needed beyond the architecture check at compile time.

#include "cbo/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

#include <algorithm>
#include <limits>

namespace cbo::kernels::detail {
namespace {

double dot(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void axpby(double a, const double* x, double b, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  const float64x2_t vb = vdupq_n_f64(b);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t by = vmulq_f64(vb, vld1q_f64(y + i));
    vst1q_f64(y + i, vfmaq_f64(by, va, vld1q_f64(x + i)));
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
  const float64x2_t one = vdupq_n_f64(1.0);
  const float64x2_t vc = vdupq_n_f64(c);
  float64x2_t vmin = vdupq_n_f64(std::numeric_limits<double>::infinity());
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    const float64x2_t d = vld1q_f64(delta + k);
    const float64x2_t mu = vsubq_f64(vld1q_f64(upper + k), d);
    const float64x2_t ml = vaddq_f64(vld1q_f64(lower + k), d);
    vmin = vminq_f64(vmin, vminq_f64(mu, ml));
    const float64x2_t iu = vdivq_f64(one, mu);
    const float64x2_t il = vdivq_f64(one, ml);
    if (grad != nullptr) {
      vst1q_f64(grad + k, vsubq_f64(vmulq_f64(vc, iu), vmulq_f64(vc, il)));
    }
    if (curv != nullptr) {
      const float64x2_t sq = vmulq_f64(vc, vmulq_f64(iu, iu));
      vst1q_f64(curv + k, vfmaq_f64(sq, vc, vmulq_f64(il, il)));
    }
  }
  double min_margin = vminvq_f64(vmin);
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
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    float64x2_t v = vmaxq_f64(vld1q_f64(x + k), vnegq_f64(vld1q_f64(lower + k)));
    vst1q_f64(x + k, vminq_f64(v, vld1q_f64(upper + k)));
  }
  for (; k < n; ++k) x[k] = std::min(std::max(x[k], -lower[k]), upper[k]);
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

const KernelTable* neon_table() {
  static const KernelTable t{dot,           axpy,        axpby,
                             gemv,          gemv_t,      ger,
                             barrier_terms, project_box, sign_step};
  return &t;
}

}  // namespace cbo::kernels::detail

#else

namespace cbo::kernels::detail {
const KernelTable* neon_table() { return nullptr; }
}  // namespace cbo::kernels::detail

#endif
