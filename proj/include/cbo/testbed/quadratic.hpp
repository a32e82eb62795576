#pragma once

// Quadratic compositional bilevel problems with closed-form inner solutions.
//
//   h_i(theta, delta) = 1/2 (delta - P_i theta - m_i)^T D_i (delta - P_i theta - m_i)
//   g_ij(theta, delta) = Q_ij delta + R_ij theta + s_ij
//                        + gamma/2 ||delta||^2 + lambda/2 ||theta||^2
//
// so delta_i*(theta) = P_i theta + m_i and F, grad F follow by the chain rule.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "cbo/problem.hpp"

namespace cbo::testbed {

struct QuadraticTerms {
  Matrix P;  // p x d
  Vector m;  // p
  Matrix D;  // p x p, SPD
  Matrix Q;  // out x p
  Matrix R;  // out x d
  Vector s;  // out
  double mu = 1.0;
  double L = 1.0;
};

class QuadraticInstance final : public ProblemInstance {
 public:
  QuadraticInstance(QuadraticTerms terms, double delta_curvature, double theta_curvature,
                    BoxConstraint box);

  const QuadraticTerms& terms() const { return terms_; }
  Vector delta_star(std::span<const double> theta) const;

  std::size_t theta_dim() const override { return terms_.P.cols(); }
  std::size_t delta_dim() const override { return terms_.P.rows(); }
  std::size_t value_dim() const override { return terms_.Q.rows(); }

  double h_value(std::span<const double> theta,
                 std::span<const double> delta) const override;
  Vector h_grad_delta(std::span<const double> theta,
                      std::span<const double> delta) const override;
  Vector h_hess_delta_vec(std::span<const double> theta, std::span<const double> delta,
                          std::span<const double> v) const override;
  Vector h_cross_jac_vec(std::span<const double> theta, std::span<const double> delta,
                         std::span<const double> v) const override;
  const BoxConstraint& constraint() const override { return box_; }
  std::optional<Curvature> curvature() const override {
    return Curvature{terms_.mu, terms_.L};
  }

  Vector g_value(std::span<const double> theta,
                 std::span<const double> delta) const override;
  Matrix g_jac_theta(std::span<const double> theta,
                     std::span<const double> delta) const override;
  Matrix g_jac_delta(std::span<const double> theta,
                     std::span<const double> delta) const override;

 private:
  Vector residual(std::span<const double> theta, std::span<const double> delta) const;

  QuadraticTerms terms_;
  double gamma_;
  double lambda_;
  BoxConstraint box_;
};

enum class OuterKind { kLog, kLinear };

struct QuadraticOptions {
  std::size_t d = 3;
  std::size_t p = 2;
  std::size_t m = 1;
  std::size_t M = 5;
  OuterKind outer = OuterKind::kLog;
  // Eigenvalues of D_i are drawn from [mu, L]; isotropic uses D_i = mu I.
  double mu = 1.0;
  double L = 4.0;
  bool isotropic = false;
  double delta_curvature = 1.0;  // gamma
  double theta_curvature = 0.5;  // lambda
  double coupling_scale = 0.5;   // entries of P_i ~ N(0, scale^2 / d)
  double box_half_width = 50.0;
  // Offsets s are set so min_theta of each mean g_j equals this value.
  double value_floor = 1.0;
};

// A generated problem plus its closed-form oracles.
class QuadraticCbo {
 public:
  const CboProblem& problem() const { return problem_; }
  const QuadraticOptions& options() const { return options_; }
  const QuadraticInstance& instance(std::size_t i) const { return *instances_[i]; }
  std::size_t num_instances() const { return instances_.size(); }

  Vector delta_star(std::size_t i, std::span<const double> theta) const;
  // mean_i g_i(theta, delta_i*(theta))
  Vector mean_value(std::span<const double> theta) const;
  double objective(std::span<const double> theta) const;
  Vector gradient(std::span<const double> theta) const;

  // Reweighted form over the first output: r log mean exp(g_i1* / r).
  CboProblem done_problem(double r) const;
  double done_objective(std::span<const double> theta, double r) const;
  Vector done_gradient(std::span<const double> theta, double r) const;

  // A starting point at unit distance from the minimizer of the first mean
  // output (deterministic per seed).
  const Vector& theta0() const { return theta0_; }

 private:
  friend QuadraticCbo make_quadratic_cbo(std::uint64_t seed, const QuadraticOptions& options);

  // d/dtheta of g_ij(theta, delta_i*(theta)).
  Vector composed_gradient(std::size_t i, std::size_t j, std::span<const double> theta) const;

  QuadraticOptions options_;
  std::vector<std::shared_ptr<const QuadraticInstance>> instances_;
  CboProblem problem_;
  Vector theta0_;
};

QuadraticCbo make_quadratic_cbo(std::uint64_t seed, const QuadraticOptions& options);

// Same as above with the three dimensions given directly.
inline QuadraticCbo make_quadratic_cbo(std::uint64_t seed, std::size_t d, std::size_t p,
                                       std::size_t M, QuadraticOptions options = {}) {
  options.d = d;
  options.p = p;
  options.M = M;
  return make_quadratic_cbo(seed, options);
}

}  // namespace cbo::testbed
