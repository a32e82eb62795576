#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "cbo/errors.hpp"
#include "cbo/hypergrad.hpp"
#include "cbo/testbed/quadratic.hpp"
#include "support.hpp"

namespace cbo {
namespace {

// h(theta, delta) = theta_0 * w^T delta: linear in delta, zero Hessian.
class LinearInner final : public InnerProblem {
 public:
  LinearInner(Vector w, BoxConstraint box) : w_(std::move(w)), box_(std::move(box)) {}
  std::size_t theta_dim() const override { return 2; }
  std::size_t delta_dim() const override { return w_.size(); }
  double h_value(std::span<const double> theta, std::span<const double> delta) const override {
    return theta[0] * dot(w_, delta);
  }
  Vector h_grad_delta(std::span<const double> theta, std::span<const double>) const override {
    return scaled(theta[0], w_);
  }
  Vector h_hess_delta_vec(std::span<const double>, std::span<const double>,
                          std::span<const double> v) const override {
    return Vector(v.size(), 0.0);
  }
  Vector h_cross_jac_vec(std::span<const double>, std::span<const double>,
                         std::span<const double> v) const override {
    return {dot(w_, v), 0.0};
  }
  const BoxConstraint& constraint() const override { return box_; }

 private:
  Vector w_;
  BoxConstraint box_;
};

// Adds a constant to the outer loss of another instance.
class ShiftedLoss final : public LossInstance {
 public:
  ShiftedLoss(std::shared_ptr<const LossInstance> base, double shift)
      : base_(std::move(base)), shift_(shift) {}
  std::size_t theta_dim() const override { return base_->theta_dim(); }
  std::size_t delta_dim() const override { return base_->delta_dim(); }
  double h_value(std::span<const double> t, std::span<const double> d) const override {
    return base_->h_value(t, d);
  }
  Vector h_grad_delta(std::span<const double> t, std::span<const double> d) const override {
    return base_->h_grad_delta(t, d);
  }
  Vector h_hess_delta_vec(std::span<const double> t, std::span<const double> d,
                          std::span<const double> v) const override {
    return base_->h_hess_delta_vec(t, d, v);
  }
  Vector h_cross_jac_vec(std::span<const double> t, std::span<const double> d,
                         std::span<const double> v) const override {
    return base_->h_cross_jac_vec(t, d, v);
  }
  const BoxConstraint& constraint() const override { return base_->constraint(); }
  double loss_value(std::span<const double> t, std::span<const double> d) const override {
    return base_->loss_value(t, d) + shift_;
  }
  Vector loss_grad_theta(std::span<const double> t, std::span<const double> d) const override {
    return base_->loss_grad_theta(t, d);
  }
  Vector loss_grad_delta(std::span<const double> t, std::span<const double> d) const override {
    return base_->loss_grad_delta(t, d);
  }

 private:
  std::shared_ptr<const LossInstance> base_;
  double shift_;
};

HypergradConfig raw_cfg() {
  HypergradConfig cfg;
  cfg.cg_tol = 1e-13;
  return cfg;
}

std::vector<InnerSolveReport> exact_reports(const testbed::QuadraticCbo& q,
                                            std::span<const double> theta) {
  std::vector<InnerSolveReport> reps(q.num_instances());
  for (std::size_t i = 0; i < reps.size(); ++i) reps[i].delta = q.delta_star(i, theta);
  return reps;
}

TEST(ConjugateGradient, ResidualWithinToleranceProperty) {
  test::Gen gen(41);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = gen.index(1, 25);
    const Matrix s = gen.spd(n, gen.uniform(0.01, 1.0), gen.uniform(1.0, 100.0));
    const Vector rhs = gen.normal_vector(n);
    const double tol = std::pow(10.0, -gen.uniform(4.0, 12.0));
    const auto rep = conjugate_gradient([&](std::span<const double> v) { return s.apply(v); },
                                        rhs, tol, 10 * n + 50);
    const Vector r = subtract(rhs, s.apply(rep.solution));
    EXPECT_LE(norm(r), tol * norm(rhs));
    EXPECT_NEAR(rep.residual_norm, norm(r), 1e-12 * norm(rhs));
  }
}

TEST(ConjugateGradient, ZeroRhsAndFailures) {
  const Matrix eye = Matrix::identity(3);
  const auto apply = [&](std::span<const double> v) { return eye.apply(v); };
  EXPECT_EQ(conjugate_gradient(apply, Vector(3, 0.0), 1e-10, 5).solution, Vector(3, 0.0));
  const auto negative = [](std::span<const double> v) { return scaled(-1.0, v); };
  EXPECT_THROW(conjugate_gradient(negative, Vector{1.0, 2.0}, 1e-10, 5), SolverFailure);
  test::Gen gen(42);
  const Matrix s = gen.spd(30, 1e-3, 1e3);
  try {
    conjugate_gradient([&](std::span<const double> v) { return s.apply(v); },
                       gen.normal_vector(30), 1e-14, 2);
    FAIL() << "expected a SolverFailure";
  } catch (const SolverFailure& e) {
    EXPECT_GT(e.residual_norm(), 0.0);
  }
}

TEST(ImplicitGradient, NoDeltaDependenceGivesDirectGradient) {
  test::Gen gen(43);
  testbed::QuadraticTerms t;
  t.P = gen.matrix(2, 3);
  t.m = gen.normal_vector(2);
  t.D = gen.spd(2, 1.0, 3.0);
  t.Q = Matrix(1, 2);  // grad_delta g = 0 with gamma = 0
  t.R = gen.matrix(1, 3);
  t.s = {0.5};
  t.mu = 1.0;
  t.L = 3.0;
  const testbed::QuadraticInstance inst(t, 0.0, 0.7, BoxConstraint::symmetric(2, 10.0));
  const Vector theta = gen.normal_vector(3);
  const Vector delta = inst.delta_star(theta);
  const Matrix hg = instance_hypergrad(inst, theta, delta, raw_cfg());
  const Matrix direct = inst.g_jac_theta(theta, delta);
  EXPECT_EQ(hg, direct);
}

TEST(ImplicitGradient, DiagonalAndCgAgreeWithoutInnerHessian) {
  test::Gen gen(44);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t p = gen.index(1, 8);
    const LinearInner inner(gen.normal_vector(p),
                            BoxConstraint(gen.uniform_vector(p, 0.05, 1.0),
                                          gen.uniform_vector(p, 0.05, 1.0)));
    Vector delta(p);
    for (std::size_t k = 0; k < p; ++k) {
      const auto& box = inner.constraint();
      delta[k] = -box.lower()[k] + gen.uniform(0.05, 0.95) * (box.upper()[k] + box.lower()[k]);
    }
    const Vector theta = gen.normal_vector(2);
    const Vector gt = gen.normal_vector(2), gd = gen.normal_vector(p);
    HypergradConfig diag_cfg;
    diag_cfg.barrier_c = gen.uniform(1e-4, 1.0);
    diag_cfg.neglect_inner_hessian = true;
    diag_cfg.linear_solver = LinearSolver::kExactDiagonal;
    HypergradConfig cg_cfg = diag_cfg;
    cg_cfg.neglect_inner_hessian = false;
    cg_cfg.linear_solver = LinearSolver::kConjugateGradient;
    cg_cfg.cg_tol = 1e-12;
    const Vector a = implicit_gradient(inner, theta, delta, gt, gd, diag_cfg);
    const Vector b = implicit_gradient(inner, theta, delta, gt, gd, cg_cfg);
    EXPECT_LE(test::max_abs_diff(a, b), 1e-8 * (1.0 + norm_inf(a)));
  }
}

TEST(ImplicitGradient, ExactDiagonalNeedsNeglect) {
  HypergradConfig cfg;
  cfg.linear_solver = LinearSolver::kExactDiagonal;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(ImplicitGradient, RawModeRejectsBoundary) {
  const auto q = testbed::make_quadratic_cbo(1, 2, 2, 1);
  const auto& inst = q.instance(0);
  const Vector theta{0.0, 0.0};
  const Vector on_face{50.0, 0.0};
  EXPECT_THROW(instance_hypergrad(inst, theta, on_face, raw_cfg()), BoundaryViolation);
}

TEST(ImplicitGradient, NeglectWithoutBarrierIsSingular) {
  const auto q = testbed::make_quadratic_cbo(1, 2, 2, 1);
  HypergradConfig cfg;
  cfg.neglect_inner_hessian = true;
  const Vector theta{0.1, 0.2};
  EXPECT_THROW(instance_hypergrad(q.instance(0), theta, q.delta_star(0, theta), cfg),
               SolverFailure);
}

TEST(TotalGradient, RawModeMatchesAnalyticProperty) {
  test::Gen gen(45);
  for (int trial = 0; trial < 20; ++trial) {
    testbed::QuadraticOptions o;
    o.d = gen.index(1, 10);
    o.p = gen.index(1, 10);
    o.m = gen.index(1, 3);
    o.M = gen.index(1, 10);
    o.outer = gen.coin() ? testbed::OuterKind::kLog : testbed::OuterKind::kLinear;
    const auto q = testbed::make_quadratic_cbo(500 + trial, o);
    const Vector theta = add(q.theta0(), gen.normal_vector(o.d, 0.1));
    const auto reps = exact_reports(q, theta);
    const Vector got = total_gradient(q.problem(), theta, reps, raw_cfg());
    EXPECT_LE(relative_error(got, q.gradient(theta)), 1e-9);
  }
}

TEST(TotalGradient, BarrierModeMatchesFiniteDifferences) {
  // Tight box so the barrier moves the inner solution visibly.
  test::Gen gen(46);
  for (int trial = 0; trial < 5; ++trial) {
    testbed::QuadraticOptions o;
    o.d = 2;
    o.p = gen.index(1, 3);
    o.M = 2;
    o.outer = testbed::OuterKind::kLinear;
    o.box_half_width = 0.3;
    const auto q = testbed::make_quadratic_cbo(600 + trial, o);
    const double c = 0.05;
    InnerSolveOptions opts;
    opts.alpha = 0.002;  // below 2 / (L + 2c / margin^2) for margins down to 0.01
    opts.K = 30000;
    const auto solve = [&](std::span<const double> theta) {
      std::vector<InnerSolveReport> reps;
      for (std::size_t i = 0; i < q.num_instances(); ++i) {
        const BarrierObjective obj(q.instance(i), c);
        reps.push_back(inner_solve(obj, theta, q.instance(i).constraint().interior_point(), opts));
      }
      return reps;
    };
    const Vector theta = gen.normal_vector(o.d, 0.3);
    const auto reps = solve(theta);
    for (const auto& r : reps) ASSERT_LT(r.final_grad_norm, 1e-11);
    HypergradConfig cfg = raw_cfg();
    cfg.barrier_c = c;
    const Vector analytic = total_gradient(q.problem(), theta, reps, cfg);
    const Vector fd = finite_difference_gradient(
        [&](std::span<const double> t) {
          const auto r = solve(t);
          Vector g(o.m, 0.0);
          for (std::size_t i = 0; i < q.num_instances(); ++i) {
            axpy(0.5, q.instance(i).g_value(t, r[i].delta), g);
          }
          return q.problem().outer.evaluate(g);
        },
        theta, 1e-5);
    EXPECT_LE(relative_error(analytic, fd), 1e-4);
  }
}

TEST(DoneTotalGradient, MatchesAnalyticProperty) {
  test::Gen gen(47);
  for (int trial = 0; trial < 20; ++trial) {
    testbed::QuadraticOptions o;
    o.d = gen.index(1, 8);
    o.p = gen.index(1, 8);
    o.M = gen.index(1, 12);
    const auto q = testbed::make_quadratic_cbo(700 + trial, o);
    const double r = std::array<double, 3>{0.1, 1.0, 10.0}[trial % 3];
    const Vector theta = add(q.theta0(), gen.normal_vector(o.d, 0.2));
    const Vector got =
        done_total_gradient(q.done_problem(r), theta, exact_reports(q, theta), raw_cfg());
    EXPECT_LE(relative_error(got, q.done_gradient(theta, r)), 1e-9);
  }
}

TEST(DoneTotalGradient, InvariantToLossShiftProperty) {
  test::Gen gen(48);
  for (int trial = 0; trial < 50; ++trial) {
    const auto q = testbed::make_quadratic_cbo(800 + trial, gen.index(1, 5), gen.index(1, 5),
                                               gen.index(1, 8));
    const double r = gen.uniform(0.05, 5.0);
    const double shift = gen.uniform(-50.0, 50.0);
    const CboProblem base = q.done_problem(r);
    std::vector<std::shared_ptr<const LossInstance>> shifted;
    for (const auto& l : base.done->losses) shifted.push_back(std::make_shared<ShiftedLoss>(l, shift));
    const CboProblem moved = compose_done(shifted, r);
    const Vector theta = q.theta0();
    const auto reps = exact_reports(q, theta);
    const Vector a = done_total_gradient(base, theta, reps, raw_cfg());
    const Vector b = done_total_gradient(moved, theta, reps, raw_cfg());
    EXPECT_LE(test::max_abs_diff(a, b), 1e-10 * (1.0 + norm_inf(a)));
  }
}

TEST(DoneTotalGradient, IdenticalInstancesCollapseToOne) {
  const auto q = testbed::make_quadratic_cbo(9, 3, 2, 1);
  const CboProblem single = q.done_problem(0.7);
  const std::vector<std::shared_ptr<const LossInstance>> copies(4, single.done->losses[0]);
  const CboProblem many = compose_done(copies, 0.7);
  const Vector theta{0.2, -0.1, 0.4};
  std::vector<InnerSolveReport> reps(4);
  for (auto& r : reps) r.delta = q.delta_star(0, theta);
  const Vector one = loss_hypergrad(*single.done->losses[0], theta, reps[0].delta, raw_cfg());
  const Vector all = done_total_gradient(many, theta, reps, raw_cfg());
  EXPECT_LE(test::max_abs_diff(one, all), 1e-14);
}

TEST(DoneTotalGradient, RequiresDoneForm) {
  const auto q = testbed::make_quadratic_cbo(9, 3, 2, 2);
  const Vector theta{0.2, -0.1, 0.4};
  EXPECT_THROW(done_total_gradient(q.problem(), theta, exact_reports(q, theta), raw_cfg()), Error);
}

}  // namespace
}  // namespace cbo
