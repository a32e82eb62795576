#include "cbo/barrier.hpp"

#include <cmath>
#include <sstream>

#include "cbo/errors.hpp"

namespace cbo {
namespace {

void require_interior(const BoxConstraint& box, std::span<const double>,
                      double margin) {
  if (!(margin > 0.0)) {
    std::ostringstream msg;
    msg << "barrier evaluated at a point with margin " << margin
        << " (dimension " << box.dim() << "); the point must be strictly inside the box";
    throw BoundaryViolation(msg.str());
  }
}

double barrier_margin(const BoxConstraint& box, std::span<const double> delta) {
  const double margin = box.min_margin(delta);
  require_interior(box, delta, margin);
  return margin;
}

// Step direction for one inner update, before projection.
class StepRule {
 public:
  StepRule(const InnerSolveOptions& options, std::size_t p)
      : options_(options), m_(p, 0.0), v_(p, 0.0) {}

  Vector candidate(std::span<const double> delta, std::span<const double> grad) {
    Vector cand(delta.begin(), delta.end());
    switch (options_.rule) {
      case InnerStepRule::kGradient:
        axpy(-options_.alpha, grad, cand);
        break;
      case InnerStepRule::kSign:
        kernels::current().sign_step(options_.alpha, grad.data(), cand.data(), cand.size());
        break;
      case InnerStepRule::kAdam: {
        ++t_;
        const double b1 = options_.adam_beta1;
        const double b2 = options_.adam_beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        for (std::size_t k = 0; k < cand.size(); ++k) {
          m_[k] = b1 * m_[k] + (1.0 - b1) * grad[k];
          v_[k] = b2 * v_[k] + (1.0 - b2) * grad[k] * grad[k];
          cand[k] -= options_.alpha * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + options_.adam_eps);
        }
        break;
      }
    }
    return cand;
  }

 private:
  const InnerSolveOptions& options_;
  Vector m_;
  Vector v_;
  std::size_t t_ = 0;
};

void validate_options(const InnerSolveOptions& options) {
  if (!(options.alpha > 0.0)) throw ConfigError("inner stepsize alpha must be > 0");
}

}  // namespace

BarrierObjective::BarrierObjective(const InnerProblem& base, const BoxConstraint& constraint,
                                   double c)
    : base_(&base), constraint_(&constraint), c_(c) {
  if (!(c >= 0.0)) throw ConfigError("barrier coefficient c must be >= 0");
}

double barrier_value(const BarrierObjective& obj, std::span<const double> theta,
                     std::span<const double> delta) {
  const BoxConstraint& box = obj.constraint();
  barrier_margin(box, delta);
  const double base = obj.base().h_value(theta, delta);
  if (obj.c() == 0.0) return base;
  double log_sum = 0.0;
  for (std::size_t k = 0; k < box.dim(); ++k) {
    log_sum += std::log(box.upper()[k] - delta[k]) + std::log(box.lower()[k] + delta[k]);
  }
  return base - obj.c() * log_sum;
}

Vector barrier_gradient(const BarrierObjective& obj, std::span<const double> theta,
                        std::span<const double> delta) {
  const BoxConstraint& box = obj.constraint();
  Vector penalty(box.dim());
  const double margin = kernels::current().barrier_terms(
      delta.data(), box.upper().data(), box.lower().data(), obj.c(), penalty.data(),
      nullptr, box.dim());
  require_interior(box, delta, margin);
  Vector grad = obj.base().h_grad_delta(theta, delta);
  axpy(1.0, penalty, grad);
  return grad;
}

Vector barrier_hess_vec(const BarrierObjective& obj, std::span<const double> theta,
                        std::span<const double> delta, std::span<const double> v) {
  const Vector diag = barrier_curvature_diag(obj.constraint(), obj.c(), delta);
  Vector out = obj.base().h_hess_delta_vec(theta, delta, v);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += diag[k] * v[k];
  return out;
}

Vector barrier_curvature_diag(const BoxConstraint& constraint, double c,
                              std::span<const double> delta_hat) {
  Vector curv(constraint.dim());
  const double margin = kernels::current().barrier_terms(
      delta_hat.data(), constraint.upper().data(), constraint.lower().data(), c, nullptr,
      curv.data(), constraint.dim());
  require_interior(constraint, delta_hat, margin);
  return curv;
}

double default_inner_stepsize(const Curvature& curvature) {
  return 2.0 / (curvature.L + curvature.mu);
}

InnerSolveReport inner_solve(const BarrierObjective& obj, std::span<const double> theta,
                             std::span<const double> delta0,
                             const InnerSolveOptions& options) {
  validate_options(options);
  const BoxConstraint& box = obj.constraint();
  InnerSolveReport report;
  report.delta.assign(delta0.begin(), delta0.end());
  barrier_margin(box, report.delta);
  if (options.record_trajectory) report.trajectory.push_back(report.delta);

  StepRule rule(options, box.dim());
  double value = barrier_value(obj, theta, report.delta);
  for (std::size_t k = 0; k < options.K; ++k) {
    const Vector grad = barrier_gradient(obj, theta, report.delta);
    if (!all_finite(grad)) {
      throw NumericError("non-finite inner gradient at step " + std::to_string(k + 1));
    }
    Vector step = rule.candidate(report.delta, grad);
    box.project(step);
    axpy(-1.0, report.delta, step);

    double scale = 1.0;
    bool accepted = false;
    Vector trial(report.delta.size());
    double trial_value = value;
    for (int h = 0; h <= kMaxStepHalvings; ++h) {
      trial = report.delta;
      axpy(scale, step, trial);
      if (box.min_margin(trial) >= kMinBarrierMargin) {
        trial_value = barrier_value(obj, theta, trial);
        const bool descent_ok = options.rule != InnerStepRule::kGradient ||
                                trial_value <= value + 1e-12;
        if (std::isfinite(trial_value) && descent_ok) {
          accepted = true;
          break;
        }
      }
      scale *= 0.5;
      ++report.halvings;
    }
    if (accepted) {
      report.step_norms.push_back(scale * norm(step));
      report.delta = std::move(trial);
      value = trial_value;
    } else {
      report.step_norms.push_back(0.0);
    }
    if (options.record_trajectory) report.trajectory.push_back(report.delta);
  }
  report.iterations = options.K;
  const Vector grad = barrier_gradient(obj, theta, report.delta);
  report.final_grad_norm = norm(grad);
  report.min_margin = box.min_margin(report.delta);
  return report;
}

InnerSolveReport inner_solve(const InnerProblem& raw, std::span<const double> theta,
                             std::span<const double> delta0,
                             const InnerSolveOptions& options) {
  validate_options(options);
  const BoxConstraint& box = raw.constraint();
  InnerSolveReport report;
  report.delta.assign(delta0.begin(), delta0.end());
  if (options.record_trajectory) report.trajectory.push_back(report.delta);

  StepRule rule(options, box.dim());
  for (std::size_t k = 0; k < options.K; ++k) {
    const Vector grad = raw.h_grad_delta(theta, report.delta);
    if (!all_finite(grad)) {
      throw NumericError("non-finite inner gradient at step " + std::to_string(k + 1));
    }
    Vector next = rule.candidate(report.delta, grad);
    box.project(next);
    report.step_norms.push_back(norm(subtract(next, report.delta)));
    report.delta = std::move(next);
    if (options.record_trajectory) report.trajectory.push_back(report.delta);
  }
  report.iterations = options.K;

  const Vector grad = raw.h_grad_delta(theta, report.delta);
  Vector mapped = report.delta;
  axpy(-options.alpha, grad, mapped);
  box.project(mapped);
  report.final_grad_norm = norm(subtract(report.delta, mapped)) / options.alpha;
  report.min_margin = box.min_margin(report.delta);
  return report;
}

}  // namespace cbo
