#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cbo/cid.hpp"
#include "cbo/cli/config.hpp"
#include "cbo/testbed/quadratic.hpp"

namespace cbo::cli {

// A run on a quadratic problem together with ||grad F(theta_t)||^2 for
// t = 0..T-1 from the analytic gradient.
struct QuadraticTrace {
  cid::RunResult result;
  std::vector<double> sq_grad;
};

QuadraticTrace run_quadratic_trace(const testbed::QuadraticCbo& problem,
                                   const cid::SolverConfig& config);

// Mean of the last ceil(fraction * n) entries.
double tail_mean(std::span<const double> values, double fraction = 0.1);

struct ScalingCell {
  std::size_t T = 0;
  std::size_t K = 0;
  double mean_sq_grad = 0.0;  // mean over t of ||grad F(theta_t)||^2
  double tail_sq_grad = 0.0;  // same over the last 10% of steps
  double final_grad_norm = 0.0;
  std::string status = "ok";  // or the error that stopped the cell
};

// One run per (T, K) pair, T varying fastest within each K. A failing cell
// records its error and the grid continues.
std::vector<ScalingCell> scaling_study(const testbed::QuadraticCbo& problem,
                                       const cid::SolverConfig& base,
                                       std::span<const std::size_t> T_list,
                                       std::span<const std::size_t> K_list);

std::string scaling_csv(const std::vector<ScalingCell>& cells);

// Runs a validated command, writing its outputs under cfg.output_dir.
void execute(const RunConfig& cfg, std::ostream& log);

// Full command-line entry point. Returns the process exit code: 0 success,
// 2 configuration error, 3 numeric failure, 4 I/O failure.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace cbo::cli
