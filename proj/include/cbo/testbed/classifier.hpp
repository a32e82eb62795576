#pragma once

// Small classifiers with hand-written derivative products. Parameters live in
// a flat vector theta that the model interprets:
//   softmax regression: W (C x p) row-major, then b (C)
//   ReLU MLP:           W1 (H x p), b1 (H), W2 (C x H), b2 (C)

#include <cstddef>
#include <cstdint>
#include <span>

#include "cbo/linalg.hpp"

namespace cbo::testbed {

enum class ModelKind { kSoftmaxRegression, kReluMlp };

class ToyClassifier {
 public:
  static ToyClassifier softmax_regression(std::size_t input_dim, std::size_t num_classes);
  static ToyClassifier relu_mlp(std::size_t input_dim, std::size_t hidden_width,
                                std::size_t num_classes);

  ModelKind kind() const { return kind_; }
  std::size_t input_dim() const { return p_; }
  std::size_t num_classes() const { return classes_; }
  std::size_t hidden_width() const { return hidden_; }
  std::size_t param_dim() const;

  // Small random weights, deterministic per seed.
  Vector init_params(std::uint64_t seed) const;

  Vector logits(std::span<const double> theta, std::span<const double> x) const;
  std::size_t predict(std::span<const double> theta, std::span<const double> x) const;

  // Products with the Jacobians of the logits z(theta, x). For the MLP the
  // ReLU pattern is taken at (theta, x) and held fixed, so z is treated as
  // locally linear in x.
  Vector input_jvp(std::span<const double> theta, std::span<const double> x,
                   std::span<const double> v) const;  // dz/dx v, C
  Vector input_vjp(std::span<const double> theta, std::span<const double> x,
                   std::span<const double> w) const;  // (dz/dx)^T w, p
  Vector param_vjp(std::span<const double> theta, std::span<const double> x,
                   std::span<const double> w) const;  // (dz/dtheta)^T w, d
  // Directional derivative in x along v of (dz/dtheta)^T w with w held fixed.
  Vector param_vjp_input_derivative(std::span<const double> theta,
                                    std::span<const double> x,
                                    std::span<const double> w,
                                    std::span<const double> v) const;

 private:
  ToyClassifier(ModelKind kind, std::size_t p, std::size_t hidden, std::size_t classes)
      : kind_(kind), p_(p), hidden_(hidden), classes_(classes) {}

  struct Tape {
    Vector pre;     // W1 x + b1
    Vector hidden;  // relu(pre)
    Vector logits;
  };
  Tape forward(std::span<const double> theta, std::span<const double> x) const;

  ModelKind kind_;
  std::size_t p_;
  std::size_t hidden_;
  std::size_t classes_;
};

// Losses of a logit vector z with label y.
enum class LogitLossKind {
  kCrossEntropy,  // -log softmax(z)_y
  kMargin,        // z_y - logsumexp_{j != y} z_j
};

double logit_loss(LogitLossKind kind, std::span<const double> z, std::size_t y);
Vector logit_loss_grad(LogitLossKind kind, std::span<const double> z, std::size_t y);
// Hessian of the loss in z applied to w.
Vector logit_loss_hvp(LogitLossKind kind, std::span<const double> z, std::size_t y,
                      std::span<const double> w);

Vector softmax(std::span<const double> z);

}  // namespace cbo::testbed
