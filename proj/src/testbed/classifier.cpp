#include "cbo/testbed/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "cbo/errors.hpp"

namespace cbo::testbed {

ToyClassifier ToyClassifier::softmax_regression(std::size_t input_dim,
                                                std::size_t num_classes) {
  if (input_dim == 0 || num_classes < 2) {
    throw ConfigError("softmax regression needs input_dim >= 1 and at least 2 classes");
  }
  return {ModelKind::kSoftmaxRegression, input_dim, 0, num_classes};
}

ToyClassifier ToyClassifier::relu_mlp(std::size_t input_dim, std::size_t hidden_width,
                                      std::size_t num_classes) {
  if (input_dim == 0 || hidden_width == 0 || num_classes < 2) {
    throw ConfigError("ReLU MLP needs positive input and hidden widths and >= 2 classes");
  }
  return {ModelKind::kReluMlp, input_dim, hidden_width, num_classes};
}

std::size_t ToyClassifier::param_dim() const {
  if (kind_ == ModelKind::kSoftmaxRegression) return classes_ * (p_ + 1);
  return hidden_ * (p_ + 1) + classes_ * (hidden_ + 1);
}

Vector ToyClassifier::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  Vector theta(param_dim(), 0.0);
  if (kind_ == ModelKind::kSoftmaxRegression) {
    std::normal_distribution<double> w(0.0, 0.1 / std::sqrt(static_cast<double>(p_)));
    for (std::size_t k = 0; k < classes_ * p_; ++k) theta[k] = w(rng);
    return theta;
  }
  std::normal_distribution<double> w1(0.0, std::sqrt(2.0 / static_cast<double>(p_)));
  std::normal_distribution<double> b1(0.0, 0.1);
  std::normal_distribution<double> w2(0.0, std::sqrt(1.0 / static_cast<double>(hidden_)));
  std::size_t k = 0;
  for (; k < hidden_ * p_; ++k) theta[k] = w1(rng);
  for (std::size_t j = 0; j < hidden_; ++j, ++k) theta[k] = b1(rng);
  for (std::size_t j = 0; j < classes_ * hidden_; ++j, ++k) theta[k] = w2(rng);
  return theta;
}

namespace {

// Row-major views into theta.
struct Layer {
  const double* w;
  const double* b;
  std::size_t out;
  std::size_t in;

  Vector apply(std::span<const double> x) const {
    Vector y = apply_linear(x);
    for (std::size_t k = 0; k < out; ++k) y[k] += b[k];
    return y;
  }
  Vector apply_linear(std::span<const double> x) const {
    Vector y(out);
    kernels::current().gemv(w, out, in, x.data(), y.data());
    return y;
  }
  Vector apply_transposed(std::span<const double> v) const {
    Vector y(in);
    kernels::current().gemv_t(w, out, in, v.data(), y.data());
    return y;
  }
};

void check_sizes(std::size_t expected_theta, std::size_t theta, std::size_t expected_x,
                 std::size_t x) {
  if (theta != expected_theta || x != expected_x) {
    throw Error("classifier called with theta of size " + std::to_string(theta) +
                " (expects " + std::to_string(expected_theta) + ") and input of size " +
                std::to_string(x) + " (expects " + std::to_string(expected_x) + ")");
  }
}

}  // namespace

ToyClassifier::Tape ToyClassifier::forward(std::span<const double> theta,
                                           std::span<const double> x) const {
  check_sizes(param_dim(), theta.size(), p_, x.size());
  Tape tape;
  if (kind_ == ModelKind::kSoftmaxRegression) {
    const Layer out{theta.data(), theta.data() + classes_ * p_, classes_, p_};
    tape.logits = out.apply(x);
    return tape;
  }
  const Layer first{theta.data(), theta.data() + hidden_ * p_, hidden_, p_};
  const double* second_w = theta.data() + hidden_ * (p_ + 1);
  const Layer second{second_w, second_w + classes_ * hidden_, classes_, hidden_};
  tape.pre = first.apply(x);
  tape.hidden = tape.pre;
  for (double& a : tape.hidden) a = std::max(a, 0.0);
  tape.logits = second.apply(tape.hidden);
  return tape;
}

Vector ToyClassifier::logits(std::span<const double> theta, std::span<const double> x) const {
  return forward(theta, x).logits;
}

std::size_t ToyClassifier::predict(std::span<const double> theta,
                                   std::span<const double> x) const {
  const Vector z = logits(theta, x);
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

Vector ToyClassifier::input_jvp(std::span<const double> theta, std::span<const double> x,
                                std::span<const double> v) const {
  if (kind_ == ModelKind::kSoftmaxRegression) {
    check_sizes(param_dim(), theta.size(), p_, x.size());
    return Layer{theta.data(), nullptr, classes_, p_}.apply_linear(v);
  }
  const Tape tape = forward(theta, x);
  Vector a = Layer{theta.data(), nullptr, hidden_, p_}.apply_linear(v);
  for (std::size_t j = 0; j < hidden_; ++j) {
    if (!(tape.pre[j] > 0.0)) a[j] = 0.0;
  }
  return Layer{theta.data() + hidden_ * (p_ + 1), nullptr, classes_, hidden_}.apply_linear(a);
}

Vector ToyClassifier::input_vjp(std::span<const double> theta, std::span<const double> x,
                                std::span<const double> w) const {
  if (kind_ == ModelKind::kSoftmaxRegression) {
    check_sizes(param_dim(), theta.size(), p_, x.size());
    return Layer{theta.data(), nullptr, classes_, p_}.apply_transposed(w);
  }
  const Tape tape = forward(theta, x);
  Vector a =
      Layer{theta.data() + hidden_ * (p_ + 1), nullptr, classes_, hidden_}.apply_transposed(w);
  for (std::size_t j = 0; j < hidden_; ++j) {
    if (!(tape.pre[j] > 0.0)) a[j] = 0.0;
  }
  return Layer{theta.data(), nullptr, hidden_, p_}.apply_transposed(a);
}

Vector ToyClassifier::param_vjp(std::span<const double> theta, std::span<const double> x,
                                std::span<const double> w) const {
  Vector grad(param_dim(), 0.0);
  if (kind_ == ModelKind::kSoftmaxRegression) {
    check_sizes(param_dim(), theta.size(), p_, x.size());
    kernels::current().ger(1.0, w.data(), classes_, x.data(), p_, grad.data());
    std::copy(w.begin(), w.end(), grad.begin() + static_cast<std::ptrdiff_t>(classes_ * p_));
    return grad;
  }
  const Tape tape = forward(theta, x);
  const std::size_t off2 = hidden_ * (p_ + 1);
  double* g = grad.data();
  kernels::current().ger(1.0, w.data(), classes_, tape.hidden.data(), hidden_, g + off2);
  std::copy(w.begin(), w.end(), grad.begin() + static_cast<std::ptrdiff_t>(off2 + classes_ * hidden_));
  Vector ga = Layer{theta.data() + off2, nullptr, classes_, hidden_}.apply_transposed(w);
  for (std::size_t j = 0; j < hidden_; ++j) {
    if (!(tape.pre[j] > 0.0)) ga[j] = 0.0;
  }
  kernels::current().ger(1.0, ga.data(), hidden_, x.data(), p_, g);
  std::copy(ga.begin(), ga.end(), grad.begin() + static_cast<std::ptrdiff_t>(hidden_ * p_));
  return grad;
}

Vector ToyClassifier::param_vjp_input_derivative(std::span<const double> theta,
                                                 std::span<const double> x,
                                                 std::span<const double> w,
                                                 std::span<const double> v) const {
  Vector grad(param_dim(), 0.0);
  if (kind_ == ModelKind::kSoftmaxRegression) {
    check_sizes(param_dim(), theta.size(), p_, x.size());
    kernels::current().ger(1.0, w.data(), classes_, v.data(), p_, grad.data());
    return grad;
  }
  const Tape tape = forward(theta, x);
  const std::size_t off2 = hidden_ * (p_ + 1);
  // d hidden = mask * (W1 v); d ga = 0 with the mask frozen.
  Vector dh = Layer{theta.data(), nullptr, hidden_, p_}.apply_linear(v);
  Vector ga = Layer{theta.data() + off2, nullptr, classes_, hidden_}.apply_transposed(w);
  for (std::size_t j = 0; j < hidden_; ++j) {
    if (!(tape.pre[j] > 0.0)) {
      dh[j] = 0.0;
      ga[j] = 0.0;
    }
  }
  kernels::current().ger(1.0, w.data(), classes_, dh.data(), hidden_, grad.data() + off2);
  kernels::current().ger(1.0, ga.data(), hidden_, v.data(), p_, grad.data());
  return grad;
}

Vector softmax(std::span<const double> z) {
  const double top = *std::max_element(z.begin(), z.end());
  Vector s(z.size());
  double total = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    s[j] = std::exp(z[j] - top);
    total += s[j];
  }
  for (double& v : s) v /= total;
  return s;
}

namespace {

// Softmax over every class except y, with a zero in slot y.
Vector rival_softmax(std::span<const double> z, std::size_t y) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (j != y) top = std::max(top, z[j]);
  }
  Vector s(z.size(), 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (j == y) continue;
    s[j] = std::exp(z[j] - top);
    total += s[j];
  }
  for (double& v : s) v /= total;
  return s;
}

double logsumexp_except(std::span<const double> z, std::size_t y) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (j != y) top = std::max(top, z[j]);
  }
  double total = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (j != y) total += std::exp(z[j] - top);
  }
  return top + std::log(total);
}

void check_label(std::span<const double> z, std::size_t y) {
  if (y >= z.size()) {
    throw Error("label " + std::to_string(y) + " out of range for " +
                std::to_string(z.size()) + " classes");
  }
}

}  // namespace

double logit_loss(LogitLossKind kind, std::span<const double> z, std::size_t y) {
  check_label(z, y);
  if (kind == LogitLossKind::kCrossEntropy) {
    const double top = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double v : z) total += std::exp(v - top);
    return top + std::log(total) - z[y];
  }
  return z[y] - logsumexp_except(z, y);
}

Vector logit_loss_grad(LogitLossKind kind, std::span<const double> z, std::size_t y) {
  check_label(z, y);
  if (kind == LogitLossKind::kCrossEntropy) {
    Vector g = softmax(z);
    g[y] -= 1.0;
    return g;
  }
  Vector g = rival_softmax(z, y);
  for (double& v : g) v = -v;
  g[y] = 1.0;
  return g;
}

Vector logit_loss_hvp(LogitLossKind kind, std::span<const double> z, std::size_t y,
                      std::span<const double> w) {
  check_label(z, y);
  const Vector s = kind == LogitLossKind::kCrossEntropy ? softmax(z) : rival_softmax(z, y);
  const double sw = dot(s, w);
  Vector out(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) out[j] = s[j] * (w[j] - sw);
  if (kind == LogitLossKind::kMargin) {
    for (double& v : out) v = -v;
  }
  return out;
}

}  // namespace cbo::testbed
