#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "cbo/kernels.hpp"
#include "support.hpp"

namespace cbo {
namespace {

using kernels::Backend;
using kernels::KernelTable;

std::vector<Backend> vector_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::kAvx2, Backend::kNeon}) {
    if (kernels::available(b)) out.push_back(b);
  }
  return out;
}

double abs_dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] * y[i]);
  return s;
}

// Sizes straddle every remainder of the 4- and 2-wide loops.
const std::size_t kSizes[] = {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 33, 64, 100, 257};

TEST(Kernels, ScalarAlwaysAvailable) {
  EXPECT_TRUE(kernels::available(Backend::kScalar));
  EXPECT_EQ(kernels::backend_name(Backend::kScalar), "scalar");
}

TEST(Kernels, ScopedBackendRestores) {
  const Backend before = kernels::active();
  {
    kernels::ScopedBackend scoped(Backend::kScalar);
    EXPECT_EQ(kernels::active(), Backend::kScalar);
  }
  EXPECT_EQ(kernels::active(), before);
}

TEST(Kernels, VectorVariantsMatchScalar) {
  const KernelTable& ref = kernels::table(Backend::kScalar);
  const auto backends = vector_backends();
  if (backends.empty()) GTEST_SKIP() << "no vector backend on this CPU";
  test::Gen gen(11);
  for (Backend b : backends) {
    const KernelTable& vec = kernels::table(b);
    SCOPED_TRACE(std::string(kernels::backend_name(b)));
    for (std::size_t n : kSizes) {
      SCOPED_TRACE(n);
      // Offset by one element so the vector loads are unaligned.
      Vector xs = gen.normal_vector(n + 1), ys = gen.normal_vector(n + 1);
      const double* x = xs.data() + 1;
      const double* y = ys.data() + 1;
      const double tol = 1e-14 * (1.0 + abs_dot({x, n}, {y, n}));
      EXPECT_NEAR(vec.dot(x, y, n), ref.dot(x, y, n), tol);

      Vector a1(ys.begin() + 1, ys.end()), a2 = a1;
      ref.axpy(0.7, x, a1.data(), n);
      vec.axpy(0.7, x, a2.data(), n);
      EXPECT_LE(test::max_abs_diff(a1, a2), 1e-15 * 8);

      Vector b1(ys.begin() + 1, ys.end()), b2 = b1;
      ref.axpby(-1.3, x, 0.4, b1.data(), n);
      vec.axpby(-1.3, x, 0.4, b2.data(), n);
      EXPECT_LE(test::max_abs_diff(b1, b2), 1e-14);

      Vector upper = gen.uniform_vector(n, 0.5, 2.0), lower = gen.uniform_vector(n, 0.5, 2.0);
      Vector delta(n);
      for (std::size_t k = 0; k < n; ++k) delta[k] = gen.uniform(-lower[k] * 0.99, upper[k] * 0.99);
      Vector g1(n), g2(n), c1(n), c2(n);
      const double m1 = ref.barrier_terms(delta.data(), upper.data(), lower.data(), 0.3,
                                          g1.data(), c1.data(), n);
      const double m2 = vec.barrier_terms(delta.data(), upper.data(), lower.data(), 0.3,
                                          g2.data(), c2.data(), n);
      EXPECT_EQ(m1, m2);
      for (std::size_t k = 0; k < n; ++k) {
        EXPECT_NEAR(g1[k], g2[k], 1e-13 * (1.0 + std::abs(g1[k])));
        EXPECT_NEAR(c1[k], c2[k], 1e-13 * (1.0 + std::abs(c1[k])));
      }
      // Null outputs only ask for the margin.
      EXPECT_EQ(vec.barrier_terms(delta.data(), upper.data(), lower.data(), 0.3, nullptr,
                                  nullptr, n),
                m1);

      Vector p1 = gen.normal_vector(n, 3.0), p2 = p1;
      ref.project_box(p1.data(), upper.data(), lower.data(), n);
      vec.project_box(p2.data(), upper.data(), lower.data(), n);
      EXPECT_EQ(p1, p2);

      Vector grad = gen.normal_vector(n);
      if (n > 2) grad[1] = 0.0;
      Vector s1(xs.begin() + 1, xs.end()), s2 = s1;
      ref.sign_step(0.25, grad.data(), s1.data(), n);
      vec.sign_step(0.25, grad.data(), s2.data(), n);
      EXPECT_EQ(s1, s2);
    }
  }
}

TEST(Kernels, MatrixVariantsMatchScalar) {
  const KernelTable& ref = kernels::table(Backend::kScalar);
  const auto backends = vector_backends();
  if (backends.empty()) GTEST_SKIP() << "no vector backend on this CPU";
  test::Gen gen(12);
  for (Backend b : backends) {
    const KernelTable& vec = kernels::table(b);
    for (std::size_t rows : {1, 3, 4, 7, 16}) {
      for (std::size_t cols : {1, 2, 5, 8, 13, 40}) {
        const Matrix a = gen.matrix(rows, cols);
        const Vector xc = gen.normal_vector(cols), xr = gen.normal_vector(rows);
        Vector y1(rows, 9.0), y2(rows, -9.0);
        ref.gemv(a.data().data(), rows, cols, xc.data(), y1.data());
        vec.gemv(a.data().data(), rows, cols, xc.data(), y2.data());
        EXPECT_LE(test::max_abs_diff(y1, y2), 1e-13 * cols);

        Vector t1(cols, 9.0), t2(cols, -9.0);
        ref.gemv_t(a.data().data(), rows, cols, xr.data(), t1.data());
        vec.gemv_t(a.data().data(), rows, cols, xr.data(), t2.data());
        EXPECT_LE(test::max_abs_diff(t1, t2), 1e-13 * rows);

        Matrix g1 = a, g2 = a;
        ref.ger(0.5, xr.data(), rows, xc.data(), cols, g1.data().data());
        vec.ger(0.5, xr.data(), rows, xc.data(), cols, g2.data().data());
        EXPECT_LE(test::max_abs_diff(g1.data(), g2.data()), 1e-14);
      }
    }
  }
}

TEST(Kernels, ScalarReferenceValues) {
  const KernelTable& ref = kernels::table(Backend::kScalar);
  const double x[] = {1, 2, 3};
  const double y[] = {4, -5, 6};
  EXPECT_EQ(ref.dot(x, y, 3), 12.0);
  const double a[] = {1, 2, 3, 4, 5, 6};  // 2 x 3
  double out2[2];
  ref.gemv(a, 2, 3, x, out2);
  EXPECT_EQ(out2[0], 14.0);
  EXPECT_EQ(out2[1], 32.0);
  double out3[3];
  const double w[] = {1, -1};
  ref.gemv_t(a, 2, 3, w, out3);
  EXPECT_EQ(out3[0], -3.0);
  EXPECT_EQ(out3[2], -3.0);
  double s[] = {0.0, 0.0, 0.0};
  const double g[] = {2.0, 0.0, -1e-300};
  ref.sign_step(0.5, g, s, 3);
  EXPECT_EQ(s[0], -0.5);
  EXPECT_EQ(s[1], 0.0);
  EXPECT_EQ(s[2], 0.5);
}

TEST(Kernels, SpanWrappersFollowActiveBackend) {
  test::Gen gen(13);
  const Vector x = gen.normal_vector(37), y = gen.normal_vector(37);
  double scalar_value;
  {
    kernels::ScopedBackend scoped(Backend::kScalar);
    scalar_value = kernels::dot(x, y);
  }
  for (Backend b : vector_backends()) {
    kernels::ScopedBackend scoped(b);
    EXPECT_NEAR(kernels::dot(x, y), scalar_value, 1e-13);
  }
}

}  // namespace
}  // namespace cbo
