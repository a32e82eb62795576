#include "cbo/testbed/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cbo/errors.hpp"

namespace cbo::testbed {

AdversarialInstance::AdversarialInstance(std::shared_ptr<const ToyClassifier> model, Vector x,
                                         std::size_t y, BoxConstraint box,
                                         LogitLossKind attack)
    : model_(std::move(model)), x_(std::move(x)), y_(y), box_(std::move(box)), attack_(attack) {
  if (x_.size() != model_->input_dim() || box_.dim() != x_.size()) {
    throw ConfigError("attack instance dimensions do not match the model input");
  }
  if (y_ >= model_->num_classes()) {
    throw ConfigError("label " + std::to_string(y_) + " exceeds the model's classes");
  }
}

Vector AdversarialInstance::input(std::span<const double> delta) const {
  return add(x_, delta);
}

double AdversarialInstance::h_value(std::span<const double> theta,
                                    std::span<const double> delta) const {
  return attack_sign() * logit_loss(attack_, model_->logits(theta, input(delta)), y_);
}

Vector AdversarialInstance::h_grad_delta(std::span<const double> theta,
                                         std::span<const double> delta) const {
  const Vector xin = input(delta);
  const Vector z = model_->logits(theta, xin);
  return scaled(attack_sign(), model_->input_vjp(theta, xin, logit_loss_grad(attack_, z, y_)));
}

Vector AdversarialInstance::h_hess_delta_vec(std::span<const double> theta,
                                             std::span<const double> delta,
                                             std::span<const double> v) const {
  const Vector xin = input(delta);
  const Vector z = model_->logits(theta, xin);
  const Vector jv = model_->input_jvp(theta, xin, v);
  return scaled(attack_sign(),
                model_->input_vjp(theta, xin, logit_loss_hvp(attack_, z, y_, jv)));
}

// d/dx [J_theta^T grad phi(z)] v = J_theta^T (H_phi J_x v) + (dJ_theta^T[v]) grad phi
Vector AdversarialInstance::h_cross_jac_vec(std::span<const double> theta,
                                            std::span<const double> delta,
                                            std::span<const double> v) const {
  const Vector xin = input(delta);
  const Vector z = model_->logits(theta, xin);
  const Vector jv = model_->input_jvp(theta, xin, v);
  Vector out = model_->param_vjp(theta, xin, logit_loss_hvp(attack_, z, y_, jv));
  axpy(1.0, model_->param_vjp_input_derivative(theta, xin, logit_loss_grad(attack_, z, y_), v),
       out);
  for (double& e : out) e *= attack_sign();
  return out;
}

double AdversarialInstance::loss_value(std::span<const double> theta,
                                       std::span<const double> delta) const {
  return logit_loss(LogitLossKind::kCrossEntropy, model_->logits(theta, input(delta)), y_);
}

Vector AdversarialInstance::loss_grad_theta(std::span<const double> theta,
                                            std::span<const double> delta) const {
  const Vector xin = input(delta);
  const Vector z = model_->logits(theta, xin);
  return model_->param_vjp(theta, xin, logit_loss_grad(LogitLossKind::kCrossEntropy, z, y_));
}

Vector AdversarialInstance::loss_grad_delta(std::span<const double> theta,
                                            std::span<const double> delta) const {
  const Vector xin = input(delta);
  const Vector z = model_->logits(theta, xin);
  return model_->input_vjp(theta, xin, logit_loss_grad(LogitLossKind::kCrossEntropy, z, y_));
}

namespace {

std::vector<std::shared_ptr<const LossInstance>> attack_instances(
    const SyntheticDataset& data, const std::shared_ptr<const ToyClassifier>& model,
    double epsilon, LogitLossKind attack) {
  if (data.size() == 0) throw ConfigError("training set is empty");
  if (data.dim() != model->input_dim()) {
    throw ConfigError("dataset has " + std::to_string(data.dim()) +
                      " features, the model expects " + std::to_string(model->input_dim()));
  }
  const SyntheticDataset clipped = clip_features(data, kFeatureClipMargin);
  std::vector<std::shared_ptr<const LossInstance>> out;
  out.reserve(clipped.size());
  for (std::size_t i = 0; i < clipped.size(); ++i) {
    Vector x(clipped.x(i).begin(), clipped.x(i).end());
    BoxConstraint box = build_box_constraints(x, epsilon);
    out.push_back(std::make_shared<AdversarialInstance>(model, std::move(x), clipped.labels[i],
                                                        std::move(box), attack));
  }
  return out;
}

}  // namespace

CboProblem build_done_problem(const SyntheticDataset& data,
                              std::shared_ptr<const ToyClassifier> model, double epsilon,
                              double r, LogitLossKind attack) {
  return compose_done(attack_instances(data, model, epsilon, attack), r);
}

Vector pgd_attack(const ToyClassifier& model, std::span<const double> theta,
                  std::span<const double> x, std::size_t y, double epsilon,
                  std::size_t steps, double step_size) {
  if (!(epsilon > 0.0)) throw ConfigError("attack epsilon must be > 0");
  const std::size_t p = x.size();
  Vector upper(p);
  Vector lower(p);
  for (std::size_t k = 0; k < p; ++k) {
    upper[k] = std::min(x[k] + epsilon, 1.0);
    lower[k] = std::max(x[k] - epsilon, 0.0);
  }
  Vector adv(x.begin(), x.end());
  for (std::size_t s = 0; s < steps; ++s) {
    const Vector z = model.logits(theta, adv);
    const Vector grad =
        model.input_vjp(theta, adv, logit_loss_grad(LogitLossKind::kCrossEntropy, z, y));
    if (!all_finite(grad)) throw NumericError("non-finite gradient during PGD");
    // Ascent: x -= (-step) sign(g).
    kernels::current().sign_step(-step_size, grad.data(), adv.data(), p);
    for (std::size_t k = 0; k < p; ++k) adv[k] = std::clamp(adv[k], lower[k], upper[k]);
  }
  return adv;
}

double ra_tail(std::span<const double> per_class, double fraction) {
  if (per_class.empty()) throw Error("ra_tail needs at least one class");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("tail fraction must lie in (0, 1]");
  Vector sorted(per_class.begin(), per_class.end());
  std::sort(sorted.begin(), sorted.end());
  // The 1e-9 keeps 0.3 * 10 from rounding up to 4.
  const double want = std::ceil(fraction * static_cast<double>(sorted.size()) - 1e-9);
  const std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, sorted.size());
  return std::accumulate(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), 0.0) /
         static_cast<double>(k);
}

RobustnessReport evaluate_robustness(const ToyClassifier& model, std::span<const double> theta,
                                     const SyntheticDataset& data, const EvalOptions& options) {
  if (data.size() == 0) throw ConfigError("evaluation set is empty");
  const std::size_t C = std::max(data.num_classes, model.num_classes());
  const double step = options.step_size.value_or(
      options.pgd_steps == 0 ? 0.0 : 2.5 * options.epsilon / static_cast<double>(options.pgd_steps));
  std::vector<std::size_t> total(C, 0);
  std::vector<std::size_t> clean(C, 0);
  std::vector<std::size_t> robust(C, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t y = data.labels[i];
    ++total[y];
    if (model.predict(theta, data.x(i)) == y) ++clean[y];
    const Vector adv =
        pgd_attack(model, theta, data.x(i), y, options.epsilon, options.pgd_steps, step);
    if (model.predict(theta, adv) == y) ++robust[y];
  }
  RobustnessReport report;
  report.tail_fraction = options.tail_fraction;
  std::size_t n_clean = 0;
  std::size_t n_robust = 0;
  std::vector<double> present_robust;
  for (std::size_t c = 0; c < C; ++c) {
    n_clean += clean[c];
    n_robust += robust[c];
    const double denom = static_cast<double>(std::max<std::size_t>(total[c], 1));
    report.per_class_clean.push_back(100.0 * static_cast<double>(clean[c]) / denom);
    report.per_class_robust.push_back(100.0 * static_cast<double>(robust[c]) / denom);
    if (total[c] > 0) present_robust.push_back(report.per_class_robust.back());
  }
  const double n = static_cast<double>(data.size());
  report.clean_accuracy = 100.0 * static_cast<double>(n_clean) / n;
  report.robust_accuracy = 100.0 * static_cast<double>(n_robust) / n;
  report.ra_tail = ra_tail(present_robust, options.tail_fraction);
  return report;
}

Vector train_uniform_at(const ToyClassifier& model, Vector theta0, const SyntheticDataset& data,
                        const UniformAtOptions& options) {
  if (theta0.size() != model.param_dim()) throw ConfigError("theta0 does not match the model");
  if (data.size() == 0) throw ConfigError("training set is empty");
  if (options.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const double step =
      options.attack_step_size.value_or(options.attack_steps == 0
                                            ? 0.0
                                            : 2.5 * options.epsilon /
                                                  static_cast<double>(options.attack_steps));
  std::mt19937_64 rng(options.seed);
  Vector theta = std::move(theta0);
  const std::size_t batch = std::min(options.batch_size, data.size());
  for (std::size_t t = 0; t < options.T; ++t) {
    const std::vector<std::size_t> idx = cid::draw_batch(data.size(), batch, rng);
    Vector grad(theta.size(), 0.0);
    for (std::size_t i : idx) {
      const std::size_t y = data.labels[i];
      const Vector adv =
          pgd_attack(model, theta, data.x(i), y, options.epsilon, options.attack_steps, step);
      const Vector z = model.logits(theta, adv);
      axpy(1.0 / static_cast<double>(idx.size()),
           model.param_vjp(theta, adv, logit_loss_grad(LogitLossKind::kCrossEntropy, z, y)),
           grad);
    }
    axpy(-options.beta.at(t, options.T), grad, theta);
    if (!all_finite(theta)) throw NumericError("uniform AT diverged at step " + std::to_string(t));
  }
  return theta;
}

cid::RunResult train_done(const SyntheticDataset& data,
                          std::shared_ptr<const ToyClassifier> model, Vector theta0,
                          double epsilon, const cid::SolverConfig& config,
                          LogitLossKind attack, const cid::StepObserver& observer) {
  return cid::run_done(attack_instances(data, model, epsilon, attack), std::move(theta0), config,
                       observer);
}

}  // namespace cbo::testbed
