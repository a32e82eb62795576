#pragma once

// Data-parallel inner loops used by the solvers. Every kernel has a scalar
// reference implementation; vectorized variants (AVX2+FMA on x86-64, NEON on
// AArch64) are selected at runtime from CPU feature detection. The
// environment variable CBO_KERNELS=scalar|avx2|neon forces a backend.

#include <cstddef>
#include <span>
#include <string_view>

namespace cbo::kernels {

enum class Backend { kScalar, kAvx2, kNeon };

std::string_view backend_name(Backend backend);

struct KernelTable {
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y = a * x + b * y
  void (*axpby)(double a, const double* x, double b, double* y, std::size_t n);
  // y = A x for row-major A (rows x cols).
  void (*gemv)(const double* a, std::size_t rows, std::size_t cols,
               const double* x, double* y);
  // y = A^T x for row-major A (rows x cols); y has cols entries.
  void (*gemv_t)(const double* a, std::size_t rows, std::size_t cols,
                 const double* x, double* y);
  // A += alpha * x y^T for row-major A (rows x cols).
  void (*ger)(double alpha, const double* x, std::size_t rows,
              const double* y, std::size_t cols, double* a);
  // Box barrier with rows delta_k <= upper_k and -delta_k <= lower_k.
  // Writes c/(upper-delta) - c/(lower+delta) into grad and
  // c/(upper-delta)^2 + c/(lower+delta)^2 into curv when non-null.
  // Returns the smallest of the 2n margins.
  double (*barrier_terms)(const double* delta, const double* upper,
                          const double* lower, double c, double* grad,
                          double* curv, std::size_t n);
  // x_k = min(max(x_k, -lower_k), upper_k)
  void (*project_box)(double* x, const double* upper, const double* lower,
                      std::size_t n);
  // x_k -= step * sign(g_k), sign(0) = 0
  void (*sign_step)(double step, const double* g, double* x, std::size_t n);
};

const KernelTable& table(Backend backend);
bool available(Backend backend);

// Backend used by the span wrappers below. Chosen once from CPU features
// and CBO_KERNELS, then changeable through set_active (tests use this to
// compare variants).
Backend active();
void set_active(Backend backend);

// RAII override of the active backend.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend backend) : saved_(active()) {
    set_active(backend);
  }
  ~ScopedBackend() { set_active(saved_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend saved_;
};

const KernelTable& current();

double dot(std::span<const double> x, std::span<const double> y);
void axpy(double a, std::span<const double> x, std::span<double> y);
void axpby(double a, std::span<const double> x, double b, std::span<double> y);

namespace detail {
const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when not compiled in
const KernelTable* neon_table();
}  // namespace detail

}  // namespace cbo::kernels
