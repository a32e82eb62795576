#include "cbo/problem.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cbo/errors.hpp"

namespace cbo {

OuterScalarFn OuterScalarFn::linear(Vector weights) {
  OuterScalarFn f;
  f.name = "linear";
  f.is_linear = true;
  f.evaluate = [w = weights](std::span<const double> z) { return dot(w, z); };
  f.gradient = [w = std::move(weights)](std::span<const double>) { return w; };
  return f;
}

OuterScalarFn OuterScalarFn::log(double scale, std::size_t m, double floor) {
  if (!(floor > 0.0)) throw ConfigError("log outer function needs a positive domain floor");
  OuterScalarFn f;
  f.name = "log";
  f.domain_floor = floor;
  f.evaluate = [scale](std::span<const double> z) {
    double s = 0.0;
    for (double v : z) s += std::log(v);
    return scale * s;
  };
  f.gradient = [scale, m](std::span<const double> z) {
    Vector g(m);
    for (std::size_t j = 0; j < m; ++j) g[j] = scale / z[j];
    return g;
  };
  return f;
}

BoxConstraint::BoxConstraint(Vector upper, Vector lower)
    : upper_(std::move(upper)), lower_(std::move(lower)) {
  if (upper_.size() != lower_.size()) {
    throw Error("box constraint halves differ in length");
  }
  for (std::size_t k = 0; k < upper_.size(); ++k) {
    if (!(upper_[k] > 0.0) || !(lower_[k] > 0.0)) {
      std::ostringstream msg;
      msg << "degenerate box: coordinate " << k << " has side widths (" << upper_[k]
          << ", " << lower_[k] << "); the log-barrier needs both > 0";
      throw DegenerateBoxError(msg.str());
    }
  }
  interior_.resize(upper_.size());
  for (std::size_t k = 0; k < upper_.size(); ++k) {
    interior_[k] = 0.5 * (upper_[k] - lower_[k]);
  }
}

BoxConstraint BoxConstraint::symmetric(std::size_t p, double half_width) {
  return BoxConstraint(Vector(p, half_width), Vector(p, half_width));
}

Matrix BoxConstraint::matrix() const {
  const std::size_t p = dim();
  Matrix a(2 * p, p);
  for (std::size_t k = 0; k < p; ++k) {
    a(k, k) = 1.0;
    a(p + k, k) = -1.0;
  }
  return a;
}

Vector BoxConstraint::offsets() const {
  Vector b(upper_);
  b.insert(b.end(), lower_.begin(), lower_.end());
  return b;
}

Vector BoxConstraint::residuals(std::span<const double> delta) const {
  const std::size_t p = dim();
  Vector res(2 * p);
  for (std::size_t k = 0; k < p; ++k) {
    res[k] = upper_[k] - delta[k];
    res[p + k] = lower_[k] + delta[k];
  }
  return res;
}

double BoxConstraint::min_margin(std::span<const double> delta) const {
  return kernels::current().barrier_terms(delta.data(), upper_.data(), lower_.data(),
                                          0.0, nullptr, nullptr, dim());
}

void BoxConstraint::project(std::span<double> delta) const {
  kernels::current().project_box(delta.data(), upper_.data(), lower_.data(), dim());
}

BoxConstraint build_box_constraints(std::span<const double> x, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("attack radius epsilon must be > 0");
  Vector upper(x.size());
  Vector lower(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] >= 0.0 && x[k] <= 1.0)) {
      std::ostringstream msg;
      msg << "input coordinate " << k << " = " << x[k] << " lies outside [0, 1]";
      throw Error(msg.str());
    }
    upper[k] = std::min(epsilon, 1.0 - x[k]);
    lower[k] = std::min(epsilon, x[k]);
  }
  return BoxConstraint(std::move(upper), std::move(lower));
}

ExpLossInstance::ExpLossInstance(std::shared_ptr<const LossInstance> base, double r)
    : base_(std::move(base)), r_(r) {
  if (!(r_ > 0.0)) throw ConfigError("temperature r must be > 0");
}

double ExpLossInstance::exp_loss(std::span<const double> theta,
                                 std::span<const double> delta) const {
  const double value = std::exp(base_->loss_value(theta, delta) / r_);
  if (!std::isfinite(value)) {
    throw NumericError("exp(loss / r) overflowed; loss too large for r = " +
                       std::to_string(r_));
  }
  return value;
}

Vector ExpLossInstance::g_value(std::span<const double> theta,
                                std::span<const double> delta) const {
  return {exp_loss(theta, delta)};
}

Matrix ExpLossInstance::g_jac_theta(std::span<const double> theta,
                                    std::span<const double> delta) const {
  const double scale = exp_loss(theta, delta) / r_;
  const Vector grad = base_->loss_grad_theta(theta, delta);
  Matrix jac(1, grad.size());
  for (std::size_t k = 0; k < grad.size(); ++k) jac(0, k) = scale * grad[k];
  return jac;
}

Matrix ExpLossInstance::g_jac_delta(std::span<const double> theta,
                                    std::span<const double> delta) const {
  const double scale = exp_loss(theta, delta) / r_;
  const Vector grad = base_->loss_grad_delta(theta, delta);
  Matrix jac(1, grad.size());
  for (std::size_t k = 0; k < grad.size(); ++k) jac(0, k) = scale * grad[k];
  return jac;
}

void CboProblem::validate() const {
  if (instances.empty()) throw ConfigError("problem has no instances");
  const auto& first = *instances.front();
  for (std::size_t i = 1; i < instances.size(); ++i) {
    const auto& inst = *instances[i];
    if (inst.theta_dim() != first.theta_dim() || inst.delta_dim() != first.delta_dim() ||
        inst.value_dim() != first.value_dim()) {
      throw ConfigError("instance " + std::to_string(i) +
                        " dimensions differ from instance 0");
    }
  }
  if (!outer.evaluate || !outer.gradient) {
    throw ConfigError("problem has no outer function");
  }
}

CboProblem compose_done(std::vector<std::shared_ptr<const LossInstance>> losses,
                        double r) {
  CboProblem problem;
  problem.instances.reserve(losses.size());
  for (const auto& loss : losses) {
    problem.instances.push_back(std::make_shared<ExpLossInstance>(loss, r));
  }
  problem.outer = OuterScalarFn::log(r, 1, 1.0);
  problem.done = DoneForm{std::move(losses), r};
  return problem;
}

Vector finite_difference_gradient(const std::function<double(std::span<const double>)>& fn,
                                  std::span<const double> point, double step) {
  if (!(step > 0.0)) throw Error("finite-difference step must be > 0");
  Vector x(point.begin(), point.end());
  Vector grad(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + step;
    const double plus = fn(x);
    x[k] = saved - step;
    const double minus = fn(x);
    x[k] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NumericError("non-finite function value in finite differences at coordinate " +
                         std::to_string(k));
    }
    grad[k] = (plus - minus) / (2.0 * step);
  }
  return grad;
}

double gradient_discrepancy(std::span<const double> analytic,
                            std::span<const double> numeric, double rel_tol,
                            double abs_tol) {
  const double floor = abs_tol / rel_tol;
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double scale = std::max(std::abs(numeric[k]), floor);
    worst = std::max(worst, std::abs(analytic[k] - numeric[k]) / scale);
  }
  return worst;
}

namespace {

using ScalarFn = std::function<double(std::span<const double>)>;

OracleAudit make_audit(std::string name, std::span<const double> analytic,
                       std::span<const double> numeric, double rel_tol, double abs_tol) {
  const double d = gradient_discrepancy(analytic, numeric, rel_tol, abs_tol);
  return {std::move(name), d, d <= rel_tol};
}

// Directional derivative of a vector-valued map along `direction`.
Vector directional_fd(const std::function<Vector(std::span<const double>)>& fn,
                      std::span<const double> point, std::span<const double> direction,
                      double step) {
  Vector plus(point.begin(), point.end());
  Vector minus(point.begin(), point.end());
  axpy(step, direction, plus);
  axpy(-step, direction, minus);
  const Vector fp = fn(plus);
  const Vector fm = fn(minus);
  Vector out(fp.size());
  for (std::size_t k = 0; k < fp.size(); ++k) out[k] = (fp[k] - fm[k]) / (2.0 * step);
  if (!all_finite(out)) throw NumericError("non-finite directional difference");
  return out;
}

}  // namespace

std::vector<OracleAudit> audit_inner(const InnerProblem& inst,
                                     std::span<const double> theta,
                                     std::span<const double> delta,
                                     std::span<const double> direction, double step,
                                     double rel_tol, double abs_tol) {
  std::vector<OracleAudit> out;
  const Vector th(theta.begin(), theta.end());
  const Vector de(delta.begin(), delta.end());
  const Vector dir(direction.begin(), direction.end());

  const ScalarFn h_of_delta = [&](std::span<const double> d) { return inst.h_value(th, d); };
  out.push_back(make_audit("h_grad_delta", inst.h_grad_delta(th, de),
                           finite_difference_gradient(h_of_delta, de, step), rel_tol,
                           abs_tol));

  const auto grad_of_delta = [&](std::span<const double> d) {
    return inst.h_grad_delta(th, d);
  };
  out.push_back(make_audit("h_hess_delta_vec", inst.h_hess_delta_vec(th, de, dir),
                           directional_fd(grad_of_delta, de, dir, step), rel_tol,
                           abs_tol));

  const ScalarFn directional = [&](std::span<const double> t) {
    return dot(inst.h_grad_delta(t, de), dir);
  };
  out.push_back(make_audit("h_cross_jac_vec", inst.h_cross_jac_vec(th, de, dir),
                           finite_difference_gradient(directional, th, step), rel_tol,
                           abs_tol));
  return out;
}

std::vector<OracleAudit> audit_instance(const ProblemInstance& inst,
                                        std::span<const double> theta,
                                        std::span<const double> delta,
                                        std::span<const double> direction, double step,
                                        double rel_tol, double abs_tol) {
  std::vector<OracleAudit> out =
      audit_inner(inst, theta, delta, direction, step, rel_tol, abs_tol);
  const Vector th(theta.begin(), theta.end());
  const Vector de(delta.begin(), delta.end());
  const Matrix jt = inst.g_jac_theta(th, de);
  const Matrix jd = inst.g_jac_delta(th, de);
  for (std::size_t j = 0; j < inst.value_dim(); ++j) {
    const ScalarFn g_theta = [&](std::span<const double> t) { return inst.g_value(t, de)[j]; };
    const ScalarFn g_delta = [&](std::span<const double> d) { return inst.g_value(th, d)[j]; };
    out.push_back(make_audit("g_jac_theta[" + std::to_string(j) + "]", jt.row(j),
                             finite_difference_gradient(g_theta, th, step), rel_tol,
                             abs_tol));
    out.push_back(make_audit("g_jac_delta[" + std::to_string(j) + "]", jd.row(j),
                             finite_difference_gradient(g_delta, de, step), rel_tol,
                             abs_tol));
  }
  return out;
}

std::vector<OracleAudit> audit_loss(const LossInstance& inst,
                                    std::span<const double> theta,
                                    std::span<const double> delta,
                                    std::span<const double> direction, double step,
                                    double rel_tol, double abs_tol) {
  std::vector<OracleAudit> out =
      audit_inner(inst, theta, delta, direction, step, rel_tol, abs_tol);
  const Vector th(theta.begin(), theta.end());
  const Vector de(delta.begin(), delta.end());
  const ScalarFn l_theta = [&](std::span<const double> t) { return inst.loss_value(t, de); };
  const ScalarFn l_delta = [&](std::span<const double> d) { return inst.loss_value(th, d); };
  out.push_back(make_audit("loss_grad_theta", inst.loss_grad_theta(th, de),
                           finite_difference_gradient(l_theta, th, step), rel_tol,
                           abs_tol));
  out.push_back(make_audit("loss_grad_delta", inst.loss_grad_delta(th, de),
                           finite_difference_gradient(l_delta, de, step), rel_tol,
                           abs_tol));
  return out;
}

}  // namespace cbo
