#pragma once

// KL-regularized worst-case instance weights:
//
//   max_{w in simplex}  sum_i w_i l_i - r sum_i w_i log(M w_i)
//
// whose maximizer is softmax(l / r) and whose optimal value is
// r log((1/M) sum_i exp(l_i / r)).

#include <cstddef>
#include <span>
#include <vector>

#include "cbo/linalg.hpp"

namespace cbo::dro {

struct DroParams {
  double r = 1.0;  // must be > 0

  void validate() const;
};

struct SimplexWeights {
  Vector w;
};

// Shifted softmax of losses / r. Throws NumericError on non-finite losses.
SimplexWeights optimal_weights(std::span<const double> losses, const DroParams& params);

// sum w_i l_i - r sum w_i log(M w_i), with 0 log 0 = 0.
double regularized_inner_max_value(std::span<const double> losses,
                                   const SimplexWeights& weights,
                                   const DroParams& params);

// r log mean exp(l / r), max-shifted.
double logsumexp_objective(std::span<const double> losses, const DroParams& params);

// Piecewise-constant r over outer steps: values[j] from step
// floor(fractions[j] * T) on. The default is 10 -> 1 -> 0.1 at 0, 2/3, 5/6.
struct RSchedule {
  std::vector<double> values{10.0, 1.0, 0.1};
  std::vector<double> fractions{0.0, 2.0 / 3.0, 5.0 / 6.0};

  static RSchedule constant(double r) { return RSchedule{{r}, {0.0}}; }

  double at(std::size_t step, std::size_t total_steps) const;
  void validate() const;
};

}  // namespace cbo::dro
