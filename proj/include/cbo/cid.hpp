#pragma once

// Compositional implicit differentiation: stochastic outer steps that keep a
// running estimate u of the mean inner value g and move theta along
// (batch hypergradient)^T grad f(u).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "cbo/barrier.hpp"
#include "cbo/dro.hpp"
#include "cbo/hypergrad.hpp"
#include "cbo/problem.hpp"

namespace cbo::cid {

enum class InnerMode {
  kBarrier,    // safeguarded steps on h - c sum log(margins)
  kProjected,  // projected steps on raw h
};

struct BetaSchedule {
  enum class Kind { kConstant, kCosine, kStep };
  Kind kind = Kind::kConstant;
  // Defaults to 1 / sqrt(T).
  std::optional<double> base;
  // Step schedule: multiply by `decay` every `period_fraction * T` steps.
  double decay = 0.1;
  double period_fraction = 0.5;

  double at(std::size_t step, std::size_t total_steps) const;
};

struct SolverConfig {
  std::size_t T = 100;
  std::size_t K = 10;
  std::size_t batch_size = 64;
  // Use every instance each step (the batch-grows-with-T regime of the
  // convergence analysis); overrides batch_size.
  bool full_batch = false;
  // Inner stepsize; defaults per instance to 2 / (L + mu) when declared.
  std::optional<double> alpha;
  BetaSchedule beta;
  double eta = 0.5;
  // Only consulted by run_done.
  dro::RSchedule r_schedule;
  double c = 1e-3;
  InnerMode inner_mode = InnerMode::kBarrier;
  InnerStepRule inner_rule = InnerStepRule::kGradient;
  std::uint64_t seed = 0;
  bool warm_start = true;
  HypergradConfig hypergrad;

  // Throws ConfigError. num_instances = 0 skips the batch-size check.
  void validate(std::size_t num_instances = 0) const;
  std::size_t effective_batch(std::size_t num_instances) const;
};

struct CidState {
  Vector theta;
  Vector u;
  bool u_initialized = false;
  std::size_t step = 0;
  std::vector<Vector> per_instance_delta;
  std::mt19937_64 rng;
  // Number of times u was lifted to the outer function's domain floor.
  std::size_t clamp_activations = 0;
};

struct StepRecord {
  std::size_t step = 0;
  double objective = 0.0;       // f(batch mean of g)
  double grad_norm = 0.0;       // ||batch hypergradient^T grad f(u_{t+1})||
  double tracking_error = 0.0;  // ||u_{t+1} - batch mean of g||
  double inner_grad_norm = 0.0;  // mean final_grad_norm over the batch
  double min_margin = 0.0;       // smallest inner margin in the batch
  double r = 0.0;                // temperature in effect (reweighted runs)
  double wall_ms = 0.0;
};

struct RunMetrics {
  std::vector<StepRecord> records;
};

struct RunResult {
  CidState state;
  RunMetrics metrics;
};

using StepObserver = std::function<void(const CidState&, const StepRecord&)>;

CidState initial_state(const CboProblem& problem, Vector theta0,
                       const SolverConfig& config);

// Draw batch_size distinct instance indices (all of them, in order, under
// full batch), returned sorted so reductions run in a fixed order.
std::vector<std::size_t> draw_batch(std::size_t num_instances, std::size_t batch_size,
                                    std::mt19937_64& rng);

// One outer iteration: inner solves for a sampled batch, batch means of g and
// its hypergradient, u_{t+1} = (1 - eta) u_t + eta gbar, then
// theta_{t+1} = theta_t - beta_t Jbar^T grad f(u_{t+1}). Mutates state.
StepRecord cid_step(const CboProblem& problem, CidState& state, const SolverConfig& config);

// T steps from theta0. The observer sees each state after its step.
RunResult run(const CboProblem& problem, Vector theta0, const SolverConfig& config,
              const StepObserver& observer = {});

// Reweighted-loss run: the problem is rebuilt as r log mean exp(l_i / r)
// whenever r_schedule changes r; u restarts from the next batch mean then.
RunResult run_done(const std::vector<std::shared_ptr<const LossInstance>>& losses,
                   Vector theta0, const SolverConfig& config,
                   const StepObserver& observer = {});

}  // namespace cbo::cid
