#include <atomic>
#include <cstdlib>
#include <string>

#include "cbo/errors.hpp"
#include "cbo/kernels.hpp"

namespace cbo::kernels {
namespace detail {
#if !defined(CBO_HAVE_AVX2)
const KernelTable* avx2_table() { return nullptr; }
#endif
}  // namespace detail

namespace {

bool cpu_has_avx2() {
#if defined(CBO_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported;
#else
  return false;
#endif
}

Backend detect() {
  if (const char* env = std::getenv("CBO_KERNELS")) {
    const std::string name(env);
    if (name == "scalar") return Backend::kScalar;
    if (name == "avx2" && available(Backend::kAvx2)) return Backend::kAvx2;
    if (name == "neon" && available(Backend::kNeon)) return Backend::kNeon;
  }
  if (available(Backend::kAvx2)) return Backend::kAvx2;
  if (available(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

struct ActiveSlot {
  std::atomic<Backend> backend;
  std::atomic<const KernelTable*> kernels;
};

ActiveSlot& active_slot() {
  static ActiveSlot slot = [] {
    const Backend b = detect();
    return ActiveSlot{b, &table(b)};
  }();
  return slot;
}

}  // namespace

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

bool available(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
      return detail::avx2_table() != nullptr && cpu_has_avx2();
    case Backend::kNeon:
      return detail::neon_table() != nullptr;
  }
  return false;
}

const KernelTable& table(Backend backend) {
  if (!available(backend)) {
    throw Error("kernel backend '" + std::string(backend_name(backend)) +
                "' is not available on this machine");
  }
  switch (backend) {
    case Backend::kAvx2:
      return *detail::avx2_table();
    case Backend::kNeon:
      return *detail::neon_table();
    case Backend::kScalar:
      break;
  }
  return detail::scalar_table();
}

Backend active() {
  return active_slot().backend.load(std::memory_order_relaxed);
}

void set_active(Backend backend) {
  if (!available(backend)) {
    throw Error("kernel backend '" + std::string(backend_name(backend)) +
                "' is not available on this machine");
  }
  active_slot().kernels.store(&table(backend), std::memory_order_relaxed);
  active_slot().backend.store(backend, std::memory_order_relaxed);
}

const KernelTable& current() {
  return *active_slot().kernels.load(std::memory_order_relaxed);
}

double dot(std::span<const double> x, std::span<const double> y) {
  return current().dot(x.data(), y.data(), x.size());
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  current().axpy(a, x.data(), y.data(), x.size());
}

void axpby(double a, std::span<const double> x, double b, std::span<double> y) {
  current().axpby(a, x.data(), b, y.data(), x.size());
}

}  // namespace cbo::kernels
