#pragma once

// Implicit hypergradients. For an outer function q(theta, delta) evaluated at
// the inner solution,
//
//   d q / d theta = grad_theta q - grad_theta grad_delta h * v,
//   S v = grad_delta q,
//
// where S = grad_delta^2 h (+ C when the inner problem carries the log-barrier).
// S is only touched through Hessian-vector products.

#include <cstddef>
#include <functional>
#include <span>

#include "cbo/barrier.hpp"
#include "cbo/linalg.hpp"
#include "cbo/problem.hpp"

namespace cbo {

enum class LinearSolver { kExactDiagonal, kConjugateGradient };

struct HypergradConfig {
  LinearSolver linear_solver = LinearSolver::kConjugateGradient;
  double cg_tol = 1e-10;
  std::size_t cg_max_iters = 500;
  // Drop grad_delta^2 h from S, leaving the barrier diagonal C alone.
  bool neglect_inner_hessian = false;
  // Barrier coefficient of the inner objective. 0 means the inner problem is
  // raw h (S is the Hessian alone and delta_hat must not touch the box);
  // > 0 adds C evaluated at delta_hat.
  double barrier_c = 0.0;

  void validate() const;
};

struct LinearSolveReport {
  Vector solution;
  std::size_t iterations = 0;
  double residual_norm = 0.0;
};

// Conjugate gradients for an SPD operator. Throws SolverFailure on negative
// curvature or when ||r|| <= tol ||rhs|| is not reached within max_iters.
LinearSolveReport conjugate_gradient(
    const std::function<Vector(std::span<const double>)>& apply,
    std::span<const double> rhs, double tol, std::size_t max_iters);

// Solve S v = rhs at (theta, delta_hat) under cfg.
LinearSolveReport solve_inner_system(const InnerProblem& inner,
                                     std::span<const double> theta,
                                     std::span<const double> delta_hat,
                                     std::span<const double> rhs,
                                     const HypergradConfig& cfg);

// grad_theta q - grad_theta grad_delta h * S^{-1} grad_delta q
Vector implicit_gradient(const InnerProblem& inner, std::span<const double> theta,
                         std::span<const double> delta_hat,
                         std::span<const double> outer_grad_theta,
                         std::span<const double> outer_grad_delta,
                         const HypergradConfig& cfg);

// m x d; row j is d g_j(theta, delta*(theta)) / d theta.
Matrix instance_hypergrad(const ProblemInstance& inst, std::span<const double> theta,
                          std::span<const double> delta_hat, const HypergradConfig& cfg);

// d l(theta, delta*(theta)) / d theta for a scalar-loss instance.
Vector loss_hypergrad(const LossInstance& inst, std::span<const double> theta,
                      std::span<const double> delta_hat, const HypergradConfig& cfg);

// grad F = (1/M) sum_i (d g_i / d theta)^T grad f(gbar) over all instances.
Vector total_gradient(const CboProblem& problem, std::span<const double> theta,
                      std::span<const InnerSolveReport> inner_reports,
                      const HypergradConfig& cfg);

// Gradient of r log mean exp(l_i / r):
//   r sum_i d g_i / d theta / sum_i g_i,  g_i = exp(l_i / r),
// evaluated with the max-shifted weights softmax(l / r). Requires
// problem.done.
Vector done_total_gradient(const CboProblem& problem, std::span<const double> theta,
                           std::span<const InnerSolveReport> inner_reports,
                           const HypergradConfig& cfg);

}  // namespace cbo
