#pragma once

// Hand-rolled generators for the property tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cbo/linalg.hpp"

namespace cbo::test {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng_); }
  std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  bool coin() { return index(0, 1) == 1; }

  Vector normal_vector(std::size_t n, double sd = 1.0) {
    Vector v(n);
    for (double& x : v) x = normal(sd);
    return v;
  }
  Vector uniform_vector(std::size_t n, double lo, double hi) {
    Vector v(n);
    for (double& x : v) x = uniform(lo, hi);
    return v;
  }
  // Mixed magnitudes with occasional ties and large spreads.
  Vector losses(std::size_t n) {
    const double scale = std::pow(10.0, uniform(-2.0, 2.0));
    Vector v(n);
    for (double& x : v) x = coin() ? scale * normal() : std::round(3.0 * normal());
    return v;
  }
  Vector simplex_point(std::size_t n) {
    Vector w(n);
    double sum = 0.0;
    for (double& x : w) sum += (x = -std::log(uniform(1e-12, 1.0)));
    for (double& x : w) x /= sum;
    return w;
  }
  Matrix matrix(std::size_t rows, std::size_t cols, double sd = 1.0) {
    Matrix a(rows, cols);
    for (double& x : a.data()) x = normal(sd);
    return a;
  }
  // Symmetric positive definite with spectrum in [lo, hi].
  Matrix spd(std::size_t n, double lo, double hi) {
    Matrix q = matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < j; ++k) {
        double proj = 0.0;
        for (std::size_t i = 0; i < n; ++i) proj += q(i, j) * q(i, k);
        for (std::size_t i = 0; i < n; ++i) q(i, j) -= proj * q(i, k);
      }
      double nrm = 0.0;
      for (std::size_t i = 0; i < n; ++i) nrm += q(i, j) * q(i, j);
      nrm = std::sqrt(nrm);
      for (std::size_t i = 0; i < n; ++i) q(i, j) /= nrm;
    }
    Vector eig(n);
    for (std::size_t k = 0; k < n; ++k) eig[k] = n == 1 ? lo : lo + (hi - lo) * k / (n - 1.0);
    Matrix s(n, n);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        double v = 0.0;
        for (std::size_t k = 0; k < n; ++k) v += q(a, k) * eig[k] * q(b, k);
        s(a, b) = v;
      }
    }
    return s;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace cbo::test
