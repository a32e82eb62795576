#pragma once

// Log-barrier penalized inner objective
//
//   h_bar(theta, delta) = h(theta, delta) - c * sum_k log(b_k - a_k^T delta)
//
// over the stacked box, its first and second derivatives, and the inner
// solvers that produce delta^K.

#include <cstddef>
#include <span>
#include <vector>

#include "cbo/linalg.hpp"
#include "cbo/problem.hpp"

namespace cbo {

class BarrierObjective {
 public:
  BarrierObjective(const InnerProblem& base, const BoxConstraint& constraint, double c);
  BarrierObjective(const InnerProblem& base, double c)
      : BarrierObjective(base, base.constraint(), c) {}

  const InnerProblem& base() const { return *base_; }
  const BoxConstraint& constraint() const { return *constraint_; }
  double c() const { return c_; }

 private:
  const InnerProblem* base_;
  const BoxConstraint* constraint_;
  double c_;
};

// All three throw BoundaryViolation unless delta is strictly inside the box.
double barrier_value(const BarrierObjective& obj, std::span<const double> theta,
                     std::span<const double> delta);
Vector barrier_gradient(const BarrierObjective& obj, std::span<const double> theta,
                        std::span<const double> delta);
// (grad^2 h + C) v
Vector barrier_hess_vec(const BarrierObjective& obj, std::span<const double> theta,
                        std::span<const double> delta, std::span<const double> v);

// Diagonal of C = c * sum_k gamma_k a_k a_k^T, gamma_k = 1 / (b_k - a_k^T delta)^2.
// For the stacked box this is c * (gamma_k + gamma_{p+k}) per coordinate.
Vector barrier_curvature_diag(const BoxConstraint& constraint, double c,
                              std::span<const double> delta_hat);

enum class InnerStepRule {
  kGradient,  // projected gradient descent; the only rule with guarantees
  kSign,      // signed gradient steps (PGD-style), heuristic
  kAdam,      // adaptive moments, heuristic
};

struct InnerSolveOptions {
  double alpha = 0.1;
  std::size_t K = 10;
  InnerStepRule rule = InnerStepRule::kGradient;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Keep every iterate in the report (tests and diagnostics).
  bool record_trajectory = false;
};

// Smallest margin the barrier solver accepts for an iterate.
inline constexpr double kMinBarrierMargin = 1e-12;
// Halvings tried before the barrier solver keeps the previous iterate.
inline constexpr int kMaxStepHalvings = 60;

struct InnerSolveReport {
  Vector delta;  // delta^K
  std::size_t iterations = 0;
  // Barrier mode: ||grad h_bar(delta^K)||. Projected mode: norm of the
  // gradient mapping (delta - P(delta - alpha grad h)) / alpha.
  double final_grad_norm = 0.0;
  double min_margin = 0.0;
  // ||delta^k - delta^{k-1}|| for k = 1..K; successive ratios estimate the
  // contraction factor.
  std::vector<double> step_norms;
  std::size_t halvings = 0;
  std::vector<Vector> trajectory;  // delta^0..delta^K when recorded
};

// K safeguarded steps on the barrier objective from a strictly feasible
// delta0. Every iterate stays at margin >= kMinBarrierMargin; gradient-rule
// iterates never increase the barrier value (up to 1e-12).
InnerSolveReport inner_solve(const BarrierObjective& obj, std::span<const double> theta,
                             std::span<const double> delta0,
                             const InnerSolveOptions& options);

// K projected steps on the raw inner objective. Iterates may touch the box.
InnerSolveReport inner_solve(const InnerProblem& raw, std::span<const double> theta,
                             std::span<const double> delta0,
                             const InnerSolveOptions& options);

// 2 / (L + mu) for a declared curvature pair.
double default_inner_stepsize(const Curvature& curvature);

}  // namespace cbo
