#pragma once

// Iterative maximizer of sum w_i l_i - r sum w_i log(M w_i) over the
// probability simplex. Shares nothing with the
// closed form in the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace cbo::test {

// Euclidean projection onto {w >= 0, sum w = 1} by the sort-and-threshold rule.
inline std::vector<double> project_to_simplex(std::vector<double> v) {
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double tau = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) tau = t;
  }
  for (double& x : v) x = std::max(x - tau, 0.0);
  return v;
}

inline double kl_objective(const std::vector<double>& losses, const std::vector<double>& w,
                           double r) {
  const double m = static_cast<double>(losses.size());
  double value = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    value += w[i] * losses[i];
    if (w[i] > 0.0) value -= r * w[i] * std::log(m * w[i]);
  }
  return value;
}

// Damped mirror ascent in log space. Plain projected gradient ascent stalls
// once a weight underflows (the entropy curvature r / w blows up), so the
// iterate is kept as log-weights and renormalised every step.
inline std::vector<double> brute_force_weights(const std::vector<double>& losses, double r,
                                               std::size_t iterations = 2000) {
  const std::size_t n = losses.size();
  const double m = static_cast<double>(n);
  const double eta = 0.5 / r;
  std::vector<double> logw(n, -std::log(m));
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      logw[i] += eta * (losses[i] - r * (std::log(m) + logw[i] + 1.0));
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    double sum = 0.0;
    for (double v : logw) sum += std::exp(v - top);
    const double shift = top + std::log(sum);
    for (double& v : logw) v -= shift;
  }
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(logw[i]);
  return w;
}

}  // namespace cbo::test
