#include "cbo/hypergrad.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cbo/dro.hpp"
#include "cbo/errors.hpp"

namespace cbo {

void HypergradConfig::validate() const {
  if (!(cg_tol > 0.0)) throw ConfigError("hypergrad.cg_tol must be > 0");
  if (cg_max_iters < 1) throw ConfigError("hypergrad.cg_max_iters must be >= 1");
  if (!(barrier_c >= 0.0)) throw ConfigError("barrier coefficient must be >= 0");
  if (linear_solver == LinearSolver::kExactDiagonal && !neglect_inner_hessian) {
    throw ConfigError(
        "exact-diagonal solves need hypergrad.neglect_inner_hessian = true; the system "
        "is only diagonal without the inner Hessian");
  }
}

LinearSolveReport conjugate_gradient(
    const std::function<Vector(std::span<const double>)>& apply,
    std::span<const double> rhs, double tol, std::size_t max_iters) {
  const std::size_t n = rhs.size();
  LinearSolveReport out;
  out.solution.assign(n, 0.0);
  const double rhs_norm = norm(rhs);
  if (rhs_norm == 0.0) return out;

  Vector r(rhs.begin(), rhs.end());
  Vector p = r;
  double rr = dot(r, r);
  const double target = tol * rhs_norm;
  for (std::size_t it = 0; it < max_iters; ++it) {
    const Vector ap = apply(p);
    const double curvature = dot(p, ap);
    if (!(curvature > 0.0)) {
      std::ostringstream msg;
      msg << "conjugate gradient met non-positive curvature " << curvature
          << " at iteration " << it << "; the inner system is not positive definite";
      throw SolverFailure(msg.str(), std::sqrt(rr));
    }
    const double step = rr / curvature;
    axpy(step, p, out.solution);
    axpy(-step, ap, r);
    const double rr_next = dot(r, r);
    out.iterations = it + 1;
    if (std::sqrt(rr_next) <= target) {
      rr = rr_next;
      break;
    }
    kernels::axpby(1.0, r, rr_next / rr, p);
    rr = rr_next;
  }
  // Report the true residual rather than the recursively updated one.
  Vector residual = apply(out.solution);
  for (std::size_t k = 0; k < n; ++k) residual[k] = rhs[k] - residual[k];
  out.residual_norm = norm(residual);
  if (!(out.residual_norm <= target)) {
    std::ostringstream msg;
    msg << "conjugate gradient did not reach relative residual " << tol << " within "
        << max_iters << " iterations (residual " << out.residual_norm << ", rhs norm "
        << rhs_norm << ")";
    throw SolverFailure(msg.str(), out.residual_norm);
  }
  return out;
}

LinearSolveReport solve_inner_system(const InnerProblem& inner,
                                     std::span<const double> theta,
                                     std::span<const double> delta_hat,
                                     std::span<const double> rhs,
                                     const HypergradConfig& cfg) {
  cfg.validate();
  const BoxConstraint& box = inner.constraint();
  Vector diag(box.dim(), 0.0);
  if (cfg.barrier_c > 0.0) {
    diag = barrier_curvature_diag(box, cfg.barrier_c, delta_hat);
  } else if (!box.strictly_feasible(delta_hat)) {
    throw BoundaryViolation(
        "inner solution touches the box; the raw inner minimizer is not differentiable "
        "there (use the barrier inner objective)");
  }

  if (cfg.neglect_inner_hessian) {
    if (std::any_of(diag.begin(), diag.end(), [](double d) { return !(d > 0.0); })) {
      throw SolverFailure(
          "system matrix is singular: the inner Hessian is neglected and there is no "
          "barrier curvature",
          norm(rhs));
    }
    if (cfg.linear_solver == LinearSolver::kExactDiagonal) {
      LinearSolveReport out;
      out.solution.resize(rhs.size());
      for (std::size_t k = 0; k < rhs.size(); ++k) out.solution[k] = rhs[k] / diag[k];
      out.iterations = 1;
      return out;
    }
    return conjugate_gradient(
        [&](std::span<const double> v) {
          Vector out(v.size());
          for (std::size_t k = 0; k < v.size(); ++k) out[k] = diag[k] * v[k];
          return out;
        },
        rhs, cfg.cg_tol, cfg.cg_max_iters);
  }

  return conjugate_gradient(
      [&](std::span<const double> v) {
        Vector out = inner.h_hess_delta_vec(theta, delta_hat, v);
        for (std::size_t k = 0; k < v.size(); ++k) out[k] += diag[k] * v[k];
        return out;
      },
      rhs, cfg.cg_tol, cfg.cg_max_iters);
}

Vector implicit_gradient(const InnerProblem& inner, std::span<const double> theta,
                         std::span<const double> delta_hat,
                         std::span<const double> outer_grad_theta,
                         std::span<const double> outer_grad_delta,
                         const HypergradConfig& cfg) {
  Vector out(outer_grad_theta.begin(), outer_grad_theta.end());
  const LinearSolveReport v =
      solve_inner_system(inner, theta, delta_hat, outer_grad_delta, cfg);
  if (norm_inf(v.solution) == 0.0) return out;
  const Vector correction = inner.h_cross_jac_vec(theta, delta_hat, v.solution);
  axpy(-1.0, correction, out);
  if (!all_finite(out)) throw NumericError("non-finite hypergradient");
  return out;
}

Matrix instance_hypergrad(const ProblemInstance& inst, std::span<const double> theta,
                          std::span<const double> delta_hat, const HypergradConfig& cfg) {
  const Matrix jt = inst.g_jac_theta(theta, delta_hat);
  const Matrix jd = inst.g_jac_delta(theta, delta_hat);
  Matrix out(jt.rows(), jt.cols());
  for (std::size_t j = 0; j < jt.rows(); ++j) {
    const Vector row = implicit_gradient(inst, theta, delta_hat, jt.row(j), jd.row(j), cfg);
    std::copy(row.begin(), row.end(), out.row(j).begin());
  }
  return out;
}

Vector loss_hypergrad(const LossInstance& inst, std::span<const double> theta,
                      std::span<const double> delta_hat, const HypergradConfig& cfg) {
  return implicit_gradient(inst, theta, delta_hat, inst.loss_grad_theta(theta, delta_hat),
                           inst.loss_grad_delta(theta, delta_hat), cfg);
}

namespace {

void require_reports(std::size_t instances, std::size_t reports) {
  if (instances != reports) {
    throw Error("expected one inner report per instance (" + std::to_string(instances) +
                "), got " + std::to_string(reports));
  }
}

}  // namespace

Vector total_gradient(const CboProblem& problem, std::span<const double> theta,
                      std::span<const InnerSolveReport> inner_reports,
                      const HypergradConfig& cfg) {
  require_reports(problem.num_instances(), inner_reports.size());
  const std::size_t m = problem.value_dim();
  const std::size_t d = problem.theta_dim();
  const double inv_m = 1.0 / static_cast<double>(problem.num_instances());
  Vector gbar(m, 0.0);
  Matrix jbar(m, d);
  for (std::size_t i = 0; i < problem.num_instances(); ++i) {
    const auto& inst = *problem.instances[i];
    const Vector& delta = inner_reports[i].delta;
    axpy(inv_m, inst.g_value(theta, delta), gbar);
    const Matrix j = instance_hypergrad(inst, theta, delta, cfg);
    axpy(inv_m, j.data(), jbar.data());
  }
  for (double z : gbar) {
    if (z < problem.outer.domain_floor) {
      throw NumericError("mean inner value leaves the outer function's domain");
    }
  }
  return jbar.apply_transposed(problem.outer.gradient(gbar));
}

Vector done_total_gradient(const CboProblem& problem, std::span<const double> theta,
                           std::span<const InnerSolveReport> inner_reports,
                           const HypergradConfig& cfg) {
  if (!problem.done) {
    throw Error("done_total_gradient needs a problem built from scalar losses");
  }
  const auto& losses = problem.done->losses;
  require_reports(losses.size(), inner_reports.size());
  Vector values(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) {
    values[i] = losses[i]->loss_value(theta, inner_reports[i].delta);
  }
  const dro::SimplexWeights weights = dro::optimal_weights(values, {problem.done->r});
  Vector grad(theta.size(), 0.0);
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const Vector gi = loss_hypergrad(*losses[i], theta, inner_reports[i].delta, cfg);
    axpy(weights.w[i], gi, grad);
  }
  return grad;
}

}  // namespace cbo
