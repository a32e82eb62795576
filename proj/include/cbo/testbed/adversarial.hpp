#pragma once

// Adversarial training on the toy classifiers: per-example attack problems,
// the reweighted training objective, PGD evaluation and a uniform-weight
// adversarial training baseline.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "cbo/cid.hpp"
#include "cbo/problem.hpp"
#include "cbo/testbed/classifier.hpp"
#include "cbo/testbed/dataset.hpp"

namespace cbo::testbed {

// One training example (x, y) with perturbation delta in the l_inf attack
// box. The outer loss is cross-entropy at x + delta. The inner objective is
// -CE (kCrossEntropy) or the logit margin z_y - logsumexp_{j != y} z_j
// (kMargin), both of which the attacker minimizes.
class AdversarialInstance final : public LossInstance {
 public:
  AdversarialInstance(std::shared_ptr<const ToyClassifier> model, Vector x, std::size_t y,
                      BoxConstraint box, LogitLossKind attack = LogitLossKind::kCrossEntropy);

  const Vector& x() const { return x_; }
  std::size_t label() const { return y_; }

  std::size_t theta_dim() const override { return model_->param_dim(); }
  std::size_t delta_dim() const override { return x_.size(); }

  double h_value(std::span<const double> theta,
                 std::span<const double> delta) const override;
  Vector h_grad_delta(std::span<const double> theta,
                      std::span<const double> delta) const override;
  Vector h_hess_delta_vec(std::span<const double> theta, std::span<const double> delta,
                          std::span<const double> v) const override;
  Vector h_cross_jac_vec(std::span<const double> theta, std::span<const double> delta,
                         std::span<const double> v) const override;
  const BoxConstraint& constraint() const override { return box_; }

  double loss_value(std::span<const double> theta,
                    std::span<const double> delta) const override;
  Vector loss_grad_theta(std::span<const double> theta,
                         std::span<const double> delta) const override;
  Vector loss_grad_delta(std::span<const double> theta,
                         std::span<const double> delta) const override;

 private:
  Vector input(std::span<const double> delta) const;
  double attack_sign() const { return attack_ == LogitLossKind::kCrossEntropy ? -1.0 : 1.0; }

  std::shared_ptr<const ToyClassifier> model_;
  Vector x_;
  std::size_t y_;
  BoxConstraint box_;
  LogitLossKind attack_;
};

// Features are clamped into [1e-3, 1 - 1e-3] before the attack boxes are
// built so that no box side has zero width.
inline constexpr double kFeatureClipMargin = 1e-3;

// r log mean exp(CE_i / r) over one attack problem per example.
CboProblem build_done_problem(const SyntheticDataset& data,
                              std::shared_ptr<const ToyClassifier> model, double epsilon,
                              double r, LogitLossKind attack = LogitLossKind::kCrossEntropy);

// Sign-gradient ascent on cross-entropy from x, each step projected onto
// {||x' - x||_inf <= epsilon} intersected with [0, 1]^p.
Vector pgd_attack(const ToyClassifier& model, std::span<const double> theta,
                  std::span<const double> x, std::size_t y, double epsilon,
                  std::size_t steps, double step_size);

struct RobustnessReport {
  double clean_accuracy = 0.0;   // percent
  double robust_accuracy = 0.0;  // percent
  std::vector<double> per_class_clean;
  std::vector<double> per_class_robust;
  double tail_fraction = 0.3;
  double ra_tail = 0.0;
};

// Mean of the ceil(fraction * C) smallest entries.
double ra_tail(std::span<const double> per_class, double fraction);

struct EvalOptions {
  double epsilon = 0.1;
  std::size_t pgd_steps = 20;
  // Defaults to 2.5 epsilon / pgd_steps.
  std::optional<double> step_size;
  double tail_fraction = 0.3;
};

RobustnessReport evaluate_robustness(const ToyClassifier& model, std::span<const double> theta,
                                     const SyntheticDataset& data, const EvalOptions& options);

struct UniformAtOptions {
  std::size_t T = 100;
  std::size_t batch_size = 64;
  cid::BetaSchedule beta;
  double epsilon = 0.1;
  std::size_t attack_steps = 10;
  // Defaults to 2.5 epsilon / attack_steps.
  std::optional<double> attack_step_size;
  std::uint64_t seed = 0;
};

// Minibatch gradient descent on the mean cross-entropy at PGD examples.
Vector train_uniform_at(const ToyClassifier& model, Vector theta0, const SyntheticDataset& data,
                        const UniformAtOptions& options);

// The reweighted objective trained with the compositional solver.
cid::RunResult train_done(const SyntheticDataset& data,
                          std::shared_ptr<const ToyClassifier> model, Vector theta0,
                          double epsilon, const cid::SolverConfig& config,
                          LogitLossKind attack = LogitLossKind::kCrossEntropy,
                          const cid::StepObserver& observer = {});

}  // namespace cbo::testbed
