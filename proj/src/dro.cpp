#include "cbo/dro.hpp"

#include <algorithm>
#include <cmath>

#include "cbo/errors.hpp"

namespace cbo::dro {

void DroParams::validate() const {
  if (!(r > 0.0) || !std::isfinite(r)) {
    throw ConfigError("KL regularization r must be finite and > 0");
  }
}

namespace {

void require_finite(std::span<const double> losses) {
  if (losses.empty()) throw NumericError("empty loss vector");
  if (!all_finite(losses)) throw NumericError("non-finite loss");
}

}  // namespace

SimplexWeights optimal_weights(std::span<const double> losses, const DroParams& params) {
  params.validate();
  require_finite(losses);
  const double top = *std::max_element(losses.begin(), losses.end());
  SimplexWeights out;
  out.w.resize(losses.size());
  double total = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    out.w[i] = std::exp((losses[i] - top) / params.r);
    total += out.w[i];
  }
  for (double& w : out.w) w /= total;
  return out;
}

double regularized_inner_max_value(std::span<const double> losses,
                                   const SimplexWeights& weights,
                                   const DroParams& params) {
  params.validate();
  require_finite(losses);
  const double m = static_cast<double>(losses.size());
  double linear = 0.0;
  double kl = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const double w = weights.w[i];
    linear += w * losses[i];
    if (w > 0.0) kl += w * std::log(m * w);
  }
  return linear - params.r * kl;
}

double logsumexp_objective(std::span<const double> losses, const DroParams& params) {
  params.validate();
  require_finite(losses);
  const double top = *std::max_element(losses.begin(), losses.end());
  double total = 0.0;
  for (double l : losses) total += std::exp((l - top) / params.r);
  return top + params.r * std::log(total / static_cast<double>(losses.size()));
}

double RSchedule::at(std::size_t step, std::size_t total_steps) const {
  double r = values.front();
  for (std::size_t j = 0; j < values.size(); ++j) {
    const auto start =
        static_cast<std::size_t>(std::floor(fractions[j] * static_cast<double>(total_steps)));
    if (step >= start) r = values[j];
  }
  return r;
}

void RSchedule::validate() const {
  if (values.empty() || values.size() != fractions.size()) {
    throw ConfigError("r schedule needs one start fraction per value");
  }
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (!(values[j] > 0.0)) throw ConfigError("r schedule values must be > 0");
    if (!(fractions[j] >= 0.0 && fractions[j] <= 1.0)) {
      throw ConfigError("r schedule fractions must lie in [0, 1]");
    }
    if (j > 0 && fractions[j] < fractions[j - 1]) {
      throw ConfigError("r schedule fractions must be nondecreasing");
    }
  }
}

}  // namespace cbo::dro
