#pragma once

// The compositional bilevel problem
//
//   min_theta  f( (1/M) sum_i g_i(theta, delta_i*(theta)) )
//   s.t.       delta_i*(theta) = argmin_{delta in box_i} h_i(theta, delta)
//
// and the oracle interfaces concrete instances implement. Oracles are
// explicit callables; nothing here differentiates automatically.

#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbo/linalg.hpp"

namespace cbo {

// f: R^m -> R. evaluate/gradient are only called on inputs whose coordinates
// are all >= domain_floor.
struct OuterScalarFn {
  std::string name;
  std::function<double(std::span<const double>)> evaluate;
  std::function<Vector(std::span<const double>)> gradient;
  double domain_floor = -std::numeric_limits<double>::infinity();
  bool is_linear = false;

  // f(z) = w^T z
  static OuterScalarFn linear(Vector weights);
  // f(z) = scale * sum_j log z_j, admissible for z_j >= floor > 0.
  static OuterScalarFn log(double scale, std::size_t m, double floor);
};

// Stacked box constraint A delta <= b with A = (I, -I)^T, stored as the two
// halves of b: delta_k <= upper_k and -delta_k <= lower_k.
class BoxConstraint {
 public:
  // Throws DegenerateBoxError unless every entry of upper and lower is > 0.
  BoxConstraint(Vector upper, Vector lower);

  static BoxConstraint symmetric(std::size_t p, double half_width);

  std::size_t dim() const { return upper_.size(); }
  const Vector& upper() const { return upper_; }
  const Vector& lower() const { return lower_; }

  // Box center; strictly feasible because both widths are positive.
  const Vector& interior_point() const { return interior_; }

  Matrix matrix() const;  // A, 2p x p
  Vector offsets() const;  // b, 2p
  Vector residuals(std::span<const double> delta) const;  // b - A delta
  double min_margin(std::span<const double> delta) const;
  bool strictly_feasible(std::span<const double> delta) const {
    return min_margin(delta) > 0.0;
  }
  // Euclidean projection onto the closed box.
  void project(std::span<double> delta) const;

 private:
  Vector upper_;
  Vector lower_;
  Vector interior_;
};

// The l_inf attack set {||delta||_inf <= eps, x + delta in [0,1]^p}:
// upper_k = min(eps, 1 - x_k), lower_k = min(eps, x_k).
BoxConstraint build_box_constraints(std::span<const double> x, double epsilon);

struct Curvature {
  double mu;  // strong convexity of h(theta, .)
  double L;   // smoothness of h(theta, .)
};

// Inner-level oracles for one instance.
class InnerProblem {
 public:
  virtual ~InnerProblem() = default;

  virtual std::size_t theta_dim() const = 0;
  virtual std::size_t delta_dim() const = 0;

  virtual double h_value(std::span<const double> theta,
                         std::span<const double> delta) const = 0;
  virtual Vector h_grad_delta(std::span<const double> theta,
                              std::span<const double> delta) const = 0;
  // grad_delta^2 h(theta, delta) v
  virtual Vector h_hess_delta_vec(std::span<const double> theta,
                                  std::span<const double> delta,
                                  std::span<const double> v) const = 0;
  // grad_theta grad_delta h(theta, delta) v, a d-vector
  virtual Vector h_cross_jac_vec(std::span<const double> theta,
                                 std::span<const double> delta,
                                 std::span<const double> v) const = 0;

  virtual const BoxConstraint& constraint() const = 0;

  // Declared (mu, L) when the instance certifies them.
  virtual std::optional<Curvature> curvature() const { return std::nullopt; }
};

// A (g_i, h_i) pair with vector-valued g_i: R^d x R^p -> R^m.
class ProblemInstance : public InnerProblem {
 public:
  virtual std::size_t value_dim() const = 0;

  virtual Vector g_value(std::span<const double> theta,
                         std::span<const double> delta) const = 0;
  // m x d; row j is grad_theta g_j.
  virtual Matrix g_jac_theta(std::span<const double> theta,
                             std::span<const double> delta) const = 0;
  // m x p; row j is grad_delta g_j.
  virtual Matrix g_jac_delta(std::span<const double> theta,
                             std::span<const double> delta) const = 0;
};

// An instance whose outer side is a scalar loss l_i(theta, delta). The
// reweighted objective r log mean exp(l_i / r) is built from these.
class LossInstance : public InnerProblem {
 public:
  virtual double loss_value(std::span<const double> theta,
                            std::span<const double> delta) const = 0;
  virtual Vector loss_grad_theta(std::span<const double> theta,
                                 std::span<const double> delta) const = 0;
  virtual Vector loss_grad_delta(std::span<const double> theta,
                                 std::span<const double> delta) const = 0;
};

// g = exp(l / r) over a LossInstance, m = 1. Throws NumericError when the
// exponential overflows.
class ExpLossInstance final : public ProblemInstance {
 public:
  ExpLossInstance(std::shared_ptr<const LossInstance> base, double r);

  const LossInstance& base() const { return *base_; }
  double r() const { return r_; }

  std::size_t theta_dim() const override { return base_->theta_dim(); }
  std::size_t delta_dim() const override { return base_->delta_dim(); }
  std::size_t value_dim() const override { return 1; }

  double h_value(std::span<const double> theta,
                 std::span<const double> delta) const override {
    return base_->h_value(theta, delta);
  }
  Vector h_grad_delta(std::span<const double> theta,
                      std::span<const double> delta) const override {
    return base_->h_grad_delta(theta, delta);
  }
  Vector h_hess_delta_vec(std::span<const double> theta,
                          std::span<const double> delta,
                          std::span<const double> v) const override {
    return base_->h_hess_delta_vec(theta, delta, v);
  }
  Vector h_cross_jac_vec(std::span<const double> theta,
                         std::span<const double> delta,
                         std::span<const double> v) const override {
    return base_->h_cross_jac_vec(theta, delta, v);
  }
  const BoxConstraint& constraint() const override { return base_->constraint(); }
  std::optional<Curvature> curvature() const override { return base_->curvature(); }

  Vector g_value(std::span<const double> theta,
                 std::span<const double> delta) const override;
  Matrix g_jac_theta(std::span<const double> theta,
                     std::span<const double> delta) const override;
  Matrix g_jac_delta(std::span<const double> theta,
                     std::span<const double> delta) const override;

 private:
  double exp_loss(std::span<const double> theta, std::span<const double> delta) const;

  std::shared_ptr<const LossInstance> base_;
  double r_;
};

// Exposes output j of a ProblemInstance as a scalar loss.
class ComponentLossInstance final : public LossInstance {
 public:
  ComponentLossInstance(std::shared_ptr<const ProblemInstance> inst, std::size_t component)
      : inst_(std::move(inst)), component_(component) {}

  std::size_t theta_dim() const override { return inst_->theta_dim(); }
  std::size_t delta_dim() const override { return inst_->delta_dim(); }
  double h_value(std::span<const double> theta,
                 std::span<const double> delta) const override {
    return inst_->h_value(theta, delta);
  }
  Vector h_grad_delta(std::span<const double> theta,
                      std::span<const double> delta) const override {
    return inst_->h_grad_delta(theta, delta);
  }
  Vector h_hess_delta_vec(std::span<const double> theta, std::span<const double> delta,
                          std::span<const double> v) const override {
    return inst_->h_hess_delta_vec(theta, delta, v);
  }
  Vector h_cross_jac_vec(std::span<const double> theta, std::span<const double> delta,
                         std::span<const double> v) const override {
    return inst_->h_cross_jac_vec(theta, delta, v);
  }
  const BoxConstraint& constraint() const override { return inst_->constraint(); }
  std::optional<Curvature> curvature() const override { return inst_->curvature(); }

  double loss_value(std::span<const double> theta,
                    std::span<const double> delta) const override {
    return inst_->g_value(theta, delta)[component_];
  }
  Vector loss_grad_theta(std::span<const double> theta,
                         std::span<const double> delta) const override {
    const Matrix j = inst_->g_jac_theta(theta, delta);
    return {j.row(component_).begin(), j.row(component_).end()};
  }
  Vector loss_grad_delta(std::span<const double> theta,
                         std::span<const double> delta) const override {
    const Matrix j = inst_->g_jac_delta(theta, delta);
    return {j.row(component_).begin(), j.row(component_).end()};
  }

 private:
  std::shared_ptr<const ProblemInstance> inst_;
  std::size_t component_;
};

struct DoneForm {
  std::vector<std::shared_ptr<const LossInstance>> losses;
  double r = 1.0;
};

struct CboProblem {
  std::vector<std::shared_ptr<const ProblemInstance>> instances;
  OuterScalarFn outer;
  // Present when the problem is r log mean exp(l_i / r) over scalar losses.
  std::optional<DoneForm> done;

  std::size_t num_instances() const { return instances.size(); }
  std::size_t theta_dim() const { return instances.front()->theta_dim(); }
  std::size_t delta_dim() const { return instances.front()->delta_dim(); }
  std::size_t value_dim() const { return instances.front()->value_dim(); }

  // Throws ConfigError on an empty problem or mismatched dimensions.
  void validate() const;
};

// f(z) = r log z with domain floor 1 and g_i = exp(l_i / r).
CboProblem compose_done(std::vector<std::shared_ptr<const LossInstance>> losses,
                        double r);

// Central differences, (fn(x + h e_k) - fn(x - h e_k)) / 2h per coordinate.
// Throws NumericError if any evaluation is non-finite.
Vector finite_difference_gradient(const std::function<double(std::span<const double>)>& fn,
                                  std::span<const double> point, double step);

// Largest |a - n| / max(|n|, abs_tol / rel_tol) over coordinates, so a value
// <= rel_tol means every coordinate agrees to rel_tol, or to abs_tol near 0.
double gradient_discrepancy(std::span<const double> analytic,
                            std::span<const double> numeric, double rel_tol,
                            double abs_tol);

struct OracleAudit {
  std::string oracle;
  double discrepancy;
  bool passed;
};

// Checks every gradient-type oracle of an instance against finite
// differences at (theta, delta).
std::vector<OracleAudit> audit_inner(const InnerProblem& inst,
                                     std::span<const double> theta,
                                     std::span<const double> delta,
                                     std::span<const double> direction,
                                     double step = 1e-5, double rel_tol = 1e-5,
                                     double abs_tol = 1e-7);
std::vector<OracleAudit> audit_instance(const ProblemInstance& inst,
                                        std::span<const double> theta,
                                        std::span<const double> delta,
                                        std::span<const double> direction,
                                        double step = 1e-5, double rel_tol = 1e-5,
                                        double abs_tol = 1e-7);
std::vector<OracleAudit> audit_loss(const LossInstance& inst,
                                    std::span<const double> theta,
                                    std::span<const double> delta,
                                    std::span<const double> direction,
                                    double step = 1e-5, double rel_tol = 1e-5,
                                    double abs_tol = 1e-7);

}  // namespace cbo
