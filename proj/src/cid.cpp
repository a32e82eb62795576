#include "cbo/cid.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "cbo/errors.hpp"

namespace cbo::cid {

double BetaSchedule::at(std::size_t step, std::size_t total_steps) const {
  const double steps = static_cast<double>(std::max<std::size_t>(total_steps, 1));
  const double b0 = base.value_or(1.0 / std::sqrt(steps));
  switch (kind) {
    case Kind::kConstant:
      return b0;
    case Kind::kCosine:
      return 0.5 * b0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / steps));
    case Kind::kStep: {
      const double period = std::max(1.0, std::floor(period_fraction * steps));
      return b0 * std::pow(decay, std::floor(static_cast<double>(step) / period));
    }
  }
  return b0;
}

void SolverConfig::validate(std::size_t num_instances) const {
  if (!(eta > 0.0 && eta <= 1.0)) {
    throw ConfigError("solver.eta = " + std::to_string(eta) + " must lie in (0, 1]");
  }
  if (beta.base && !(*beta.base >= 0.0)) throw ConfigError("solver.beta must be >= 0");
  if (alpha && !(*alpha > 0.0)) throw ConfigError("solver.alpha must be > 0");
  if (!(c >= 0.0)) throw ConfigError("solver.c must be >= 0");
  if (inner_mode == InnerMode::kBarrier && !(c > 0.0)) {
    throw ConfigError("solver.c must be > 0 for the barrier inner mode");
  }
  if (batch_size < 1) throw ConfigError("solver.batch_size must be >= 1");
  if (num_instances > 0 && !full_batch && batch_size > num_instances) {
    throw ConfigError("solver.batch_size = " + std::to_string(batch_size) +
                      " exceeds the number of instances " + std::to_string(num_instances));
  }
  if (beta.kind == BetaSchedule::Kind::kStep &&
      !(beta.period_fraction > 0.0 && beta.period_fraction <= 1.0)) {
    throw ConfigError("solver.beta_period must lie in (0, 1]");
  }
  r_schedule.validate();
  hypergrad.validate();
}

std::size_t SolverConfig::effective_batch(std::size_t num_instances) const {
  return full_batch ? num_instances : std::min(batch_size, num_instances);
}

CidState initial_state(const CboProblem& problem, Vector theta0,
                       const SolverConfig& config) {
  problem.validate();
  if (theta0.size() != problem.theta_dim()) {
    throw ConfigError("theta0 has " + std::to_string(theta0.size()) +
                      " entries, the problem expects " +
                      std::to_string(problem.theta_dim()));
  }
  CidState state;
  state.theta = std::move(theta0);
  state.u.assign(problem.value_dim(), 0.0);
  state.rng.seed(config.seed);
  state.per_instance_delta.reserve(problem.num_instances());
  for (const auto& inst : problem.instances) {
    state.per_instance_delta.push_back(inst->constraint().interior_point());
  }
  return state;
}

namespace {

std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t n) {
  // Rejection sampling keeps the draw uniform and independent of the
  // standard library's distribution implementation.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % n;
  }
}

double inner_alpha(const SolverConfig& config, const InnerProblem& inst) {
  if (config.alpha) return *config.alpha;
  if (const auto curv = inst.curvature()) return default_inner_stepsize(*curv);
  throw ConfigError("solver.alpha is required: the instance declares no (mu, L)");
}

}  // namespace

std::vector<std::size_t> draw_batch(std::size_t num_instances, std::size_t batch_size,
                                    std::mt19937_64& rng) {
  std::vector<std::size_t> idx(num_instances);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (batch_size >= num_instances) return idx;
  for (std::size_t k = 0; k < batch_size; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(bounded_draw(rng, num_instances - k));
    std::swap(idx[k], idx[j]);
  }
  idx.resize(batch_size);
  std::sort(idx.begin(), idx.end());
  return idx;
}

StepRecord cid_step(const CboProblem& problem, CidState& state, const SolverConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t m = problem.value_dim();
  const std::size_t d = problem.theta_dim();
  const std::size_t total = problem.num_instances();
  const std::vector<std::size_t> batch =
      draw_batch(total, config.effective_batch(total), state.rng);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  HypergradConfig hcfg = config.hypergrad;
  hcfg.barrier_c = config.inner_mode == InnerMode::kBarrier ? config.c : 0.0;

  InnerSolveOptions inner_opts;
  inner_opts.K = config.K;
  inner_opts.rule = config.inner_rule;

  StepRecord record;
  record.step = state.step;
  record.min_margin = std::numeric_limits<double>::infinity();
  Vector gbar(m, 0.0);
  Matrix jbar(m, d);
  for (std::size_t i : batch) {
    const ProblemInstance& inst = *problem.instances[i];
    inner_opts.alpha = inner_alpha(config, inst);
    const Vector& start = config.warm_start ? state.per_instance_delta[i]
                                            : inst.constraint().interior_point();
    InnerSolveReport report =
        config.inner_mode == InnerMode::kBarrier
            ? inner_solve(BarrierObjective(inst, config.c), state.theta, start, inner_opts)
            : inner_solve(static_cast<const InnerProblem&>(inst), state.theta, start,
                          inner_opts);
    axpy(inv_b, inst.g_value(state.theta, report.delta), gbar);
    const Matrix jac = instance_hypergrad(inst, state.theta, report.delta, hcfg);
    axpy(inv_b, jac.data(), jbar.data());
    record.inner_grad_norm += inv_b * report.final_grad_norm;
    record.min_margin = std::min(record.min_margin, report.min_margin);
    state.per_instance_delta[i] = std::move(report.delta);
  }
  if (!all_finite(gbar) || !all_finite(jbar.data())) {
    throw NumericError("non-finite batch estimate");
  }

  const double eta = state.u_initialized ? config.eta : 1.0;
  kernels::axpby(eta, gbar, 1.0 - eta, state.u);
  state.u_initialized = true;
  const double floor = problem.outer.domain_floor;
  bool clamped = false;
  for (double& z : state.u) {
    if (z < floor) {
      z = floor;
      clamped = true;
    }
  }
  if (clamped) ++state.clamp_activations;

  const Vector direction = jbar.apply_transposed(problem.outer.gradient(state.u));
  const double beta = config.beta.at(state.step, config.T);
  axpy(-beta, direction, state.theta);
  if (!all_finite(state.theta)) throw NumericError("theta became non-finite");

  Vector gclamped = gbar;
  for (double& z : gclamped) z = std::max(z, floor);
  record.objective = problem.outer.evaluate(gclamped);
  record.grad_norm = norm(direction);
  record.tracking_error = norm(subtract(state.u, gbar));
  record.r = problem.done ? problem.done->r : 0.0;
  record.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - started)
                       .count();
  ++state.step;
  return record;
}

namespace {

template <typename Fn>
StepRecord step_with_context(std::size_t step, Fn&& fn) {
  const std::string where = "outer step " + std::to_string(step) + ": ";
  try {
    return fn();
  } catch (const SolverFailure& e) {
    throw SolverFailure(where + e.what(), e.residual_norm());
  } catch (const BoundaryViolation& e) {
    throw BoundaryViolation(where + e.what());
  } catch (const NumericError& e) {
    throw NumericError(where + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(where + e.what());
  }
}

}  // namespace

RunResult run(const CboProblem& problem, Vector theta0, const SolverConfig& config,
              const StepObserver& observer) {
  config.validate(problem.num_instances());
  RunResult result{initial_state(problem, std::move(theta0), config), {}};
  result.metrics.records.reserve(config.T);
  for (std::size_t t = 0; t < config.T; ++t) {
    const StepRecord rec =
        step_with_context(t, [&] { return cid_step(problem, result.state, config); });
    result.metrics.records.push_back(rec);
    if (observer) observer(result.state, rec);
  }
  return result;
}

RunResult run_done(const std::vector<std::shared_ptr<const LossInstance>>& losses,
                   Vector theta0, const SolverConfig& config, const StepObserver& observer) {
  config.validate(losses.size());
  double r = config.r_schedule.at(0, config.T);
  CboProblem problem = compose_done(losses, r);
  RunResult result{initial_state(problem, std::move(theta0), config), {}};
  result.metrics.records.reserve(config.T);
  for (std::size_t t = 0; t < config.T; ++t) {
    const double r_t = config.r_schedule.at(t, config.T);
    if (r_t != r) {
      r = r_t;
      problem = compose_done(losses, r);
      // u tracked exp(l / r_old); restart it from the next batch mean.
      result.state.u_initialized = false;
    }
    const StepRecord rec =
        step_with_context(t, [&] { return cid_step(problem, result.state, config); });
    result.metrics.records.push_back(rec);
    if (observer) observer(result.state, rec);
  }
  return result;
}

}  // namespace cbo::cid
