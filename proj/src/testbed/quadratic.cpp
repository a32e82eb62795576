#include "cbo/testbed/quadratic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cbo/dro.hpp"
#include "cbo/errors.hpp"
#include "cbo/hypergrad.hpp"

namespace cbo::testbed {

QuadraticInstance::QuadraticInstance(QuadraticTerms terms, double delta_curvature,
                                     double theta_curvature, BoxConstraint box)
    : terms_(std::move(terms)),
      gamma_(delta_curvature),
      lambda_(theta_curvature),
      box_(std::move(box)) {}

Vector QuadraticInstance::delta_star(std::span<const double> theta) const {
  return add(terms_.P.apply(theta), terms_.m);
}

// delta - P theta - m
Vector QuadraticInstance::residual(std::span<const double> theta,
                                   std::span<const double> delta) const {
  return subtract(delta, delta_star(theta));
}

double QuadraticInstance::h_value(std::span<const double> theta,
                                  std::span<const double> delta) const {
  const Vector e = residual(theta, delta);
  return 0.5 * dot(e, terms_.D.apply(e));
}

Vector QuadraticInstance::h_grad_delta(std::span<const double> theta,
                                       std::span<const double> delta) const {
  return terms_.D.apply(residual(theta, delta));
}

Vector QuadraticInstance::h_hess_delta_vec(std::span<const double>, std::span<const double>,
                                           std::span<const double> v) const {
  return terms_.D.apply(v);
}

Vector QuadraticInstance::h_cross_jac_vec(std::span<const double>, std::span<const double>,
                                          std::span<const double> v) const {
  return scaled(-1.0, terms_.P.apply_transposed(terms_.D.apply(v)));
}

Vector QuadraticInstance::g_value(std::span<const double> theta,
                                  std::span<const double> delta) const {
  Vector out = terms_.Q.apply(delta);
  axpy(1.0, terms_.R.apply(theta), out);
  axpy(1.0, terms_.s, out);
  const double extra = 0.5 * gamma_ * dot(delta, delta) + 0.5 * lambda_ * dot(theta, theta);
  for (double& v : out) v += extra;
  return out;
}

Matrix QuadraticInstance::g_jac_theta(std::span<const double> theta,
                                      std::span<const double>) const {
  Matrix jac = terms_.R;
  for (std::size_t j = 0; j < jac.rows(); ++j) axpy(lambda_, theta, jac.row(j));
  return jac;
}

Matrix QuadraticInstance::g_jac_delta(std::span<const double>,
                                      std::span<const double> delta) const {
  Matrix jac = terms_.Q;
  for (std::size_t j = 0; j < jac.rows(); ++j) axpy(gamma_, delta, jac.row(j));
  return jac;
}

Vector QuadraticCbo::delta_star(std::size_t i, std::span<const double> theta) const {
  return instances_[i]->delta_star(theta);
}

Vector QuadraticCbo::mean_value(std::span<const double> theta) const {
  Vector mean(problem_.value_dim(), 0.0);
  const double inv = 1.0 / static_cast<double>(instances_.size());
  for (const auto& inst : instances_) {
    axpy(inv, inst->g_value(theta, inst->delta_star(theta)), mean);
  }
  return mean;
}

double QuadraticCbo::objective(std::span<const double> theta) const {
  return problem_.outer.evaluate(mean_value(theta));
}

Vector QuadraticCbo::composed_gradient(std::size_t i, std::size_t j,
                                       std::span<const double> theta) const {
  const QuadraticInstance& inst = *instances_[i];
  const QuadraticTerms& t = inst.terms();
  const Vector dstar = inst.delta_star(theta);
  Vector through_delta(t.Q.row(j).begin(), t.Q.row(j).end());
  axpy(options_.delta_curvature, dstar, through_delta);
  Vector grad = t.P.apply_transposed(through_delta);
  axpy(1.0, t.R.row(j), grad);
  axpy(options_.theta_curvature, theta, grad);
  return grad;
}

Vector QuadraticCbo::gradient(std::span<const double> theta) const {
  const Vector outer_grad = problem_.outer.gradient(mean_value(theta));
  const double inv = 1.0 / static_cast<double>(instances_.size());
  Vector grad(theta.size(), 0.0);
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    for (std::size_t j = 0; j < outer_grad.size(); ++j) {
      axpy(inv * outer_grad[j], composed_gradient(i, j, theta), grad);
    }
  }
  return grad;
}

CboProblem QuadraticCbo::done_problem(double r) const {
  std::vector<std::shared_ptr<const LossInstance>> losses;
  losses.reserve(instances_.size());
  for (const auto& inst : instances_) {
    losses.push_back(std::make_shared<ComponentLossInstance>(inst, 0));
  }
  return compose_done(std::move(losses), r);
}

double QuadraticCbo::done_objective(std::span<const double> theta, double r) const {
  Vector losses(instances_.size());
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    losses[i] = instances_[i]->g_value(theta, instances_[i]->delta_star(theta))[0];
  }
  return dro::logsumexp_objective(losses, {r});
}

Vector QuadraticCbo::done_gradient(std::span<const double> theta, double r) const {
  Vector losses(instances_.size());
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    losses[i] = instances_[i]->g_value(theta, instances_[i]->delta_star(theta))[0];
  }
  const dro::SimplexWeights w = dro::optimal_weights(losses, {r});
  Vector grad(theta.size(), 0.0);
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    axpy(w.w[i], composed_gradient(i, 0, theta), grad);
  }
  return grad;
}

namespace {

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sd);
  Matrix out(rows, cols);
  for (double& v : out.data()) v = normal(rng);
  return out;
}

// Rows form an orthonormal basis (Gram-Schmidt on a Gaussian matrix).
Matrix random_orthogonal(std::size_t n, std::mt19937_64& rng) {
  Matrix q = gaussian_matrix(n, n, 1.0, rng);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < r; ++k) {
      const double proj = dot(q.row(r), q.row(k));
      axpy(-proj, q.row(k), q.row(r));
    }
    const double len = norm(q.row(r));
    for (double& v : q.row(r)) v /= len;
  }
  return q;
}

Matrix spd_with_spectrum(const Vector& eigenvalues, std::mt19937_64& rng) {
  const std::size_t n = eigenvalues.size();
  const Matrix u = random_orthogonal(n, rng);
  Matrix d(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) d(a, b) += eigenvalues[k] * u(k, a) * u(k, b);
    }
  }
  return d;
}

}  // namespace

QuadraticCbo make_quadratic_cbo(std::uint64_t seed, const QuadraticOptions& options) {
  if (options.d == 0 || options.p == 0 || options.m == 0 || options.M == 0) {
    throw ConfigError("quadratic problem dimensions must be positive");
  }
  if (!(options.mu > 0.0) || options.L < options.mu) {
    throw ConfigError("quadratic problem needs 0 < mu <= L");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::size_t d = options.d;
  const std::size_t p = options.p;
  const std::size_t m = options.m;
  const double gamma = options.delta_curvature;
  const double lambda = options.theta_curvature;

  std::vector<QuadraticTerms> all_terms(options.M);
  for (QuadraticTerms& t : all_terms) {
    t.P = gaussian_matrix(p, d, options.coupling_scale / std::sqrt(static_cast<double>(d)), rng);
    const Matrix offset = gaussian_matrix(1, p, 0.5, rng);
    t.m.assign(offset.row(0).begin(), offset.row(0).end());
    Vector eig(p, options.mu);
    if (!options.isotropic && p > 1) {
      eig.back() = options.L;
      for (std::size_t k = 1; k + 1 < p; ++k) {
        eig[k] = options.mu + (options.L - options.mu) * unif(rng);
      }
    }
    t.D = spd_with_spectrum(eig, rng);
    t.mu = *std::min_element(eig.begin(), eig.end());
    t.L = *std::max_element(eig.begin(), eig.end());
    t.Q = gaussian_matrix(m, p, 1.0, rng);
    t.R = gaussian_matrix(m, d, 0.5, rng);
    t.s.assign(m, 0.0);
  }

  // mean_i g_ij(theta, delta_i*(theta)) = 1/2 theta^T H theta + b_j^T theta + c_j + s_j
  Matrix hess = Matrix::identity(d);
  for (double& v : hess.data()) v *= lambda;
  const double inv_m = 1.0 / static_cast<double>(options.M);
  for (const QuadraticTerms& t : all_terms) {
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) {
        double acc = 0.0;
        for (std::size_t k = 0; k < p; ++k) acc += t.P(k, a) * t.P(k, b);
        hess(a, b) += inv_m * gamma * acc;
      }
    }
  }
  const bool bounded_below = lambda > 0.0;
  Vector theta_min(d, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    Vector lin(d, 0.0);
    double constant = 0.0;
    for (const QuadraticTerms& t : all_terms) {
      Vector through_delta(t.Q.row(j).begin(), t.Q.row(j).end());
      axpy(gamma, t.m, through_delta);
      axpy(inv_m, add(t.R.row(j), t.P.apply_transposed(through_delta)), lin);
      constant += inv_m * (dot(t.Q.row(j), t.m) + 0.5 * gamma * dot(t.m, t.m));
    }
    double shift = options.value_floor;
    if (bounded_below) {
      const Vector minimizer =
          scaled(-1.0, conjugate_gradient([&](std::span<const double> v) { return hess.apply(v); },
                                          lin, 1e-12, 10 * d + 10)
                           .solution);
      const double min_value = constant + 0.5 * dot(minimizer, lin);
      shift = options.value_floor - min_value;
      if (j == 0) theta_min = minimizer;
    }
    for (QuadraticTerms& t : all_terms) t.s[j] = shift;
  }

  QuadraticCbo out;
  out.options_ = options;
  out.problem_.outer = options.outer == OuterKind::kLog
                           ? OuterScalarFn::log(1.0, m, 1e-6)
                           : OuterScalarFn::linear(Vector(m, 1.0));
  for (QuadraticTerms& t : all_terms) {
    auto inst = std::make_shared<const QuadraticInstance>(
        std::move(t), gamma, lambda, BoxConstraint::symmetric(p, options.box_half_width));
    out.instances_.push_back(inst);
    out.problem_.instances.push_back(inst);
  }

  const Matrix dir = gaussian_matrix(1, d, 1.0, rng);
  const double len = norm(dir.row(0));
  out.theta0_ = theta_min;
  axpy(1.0 / len, dir.row(0), out.theta0_);
  return out;
}

}  // namespace cbo::testbed
