#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "cbo/cid.hpp"
#include "cbo/errors.hpp"
#include "cbo/testbed/quadratic.hpp"
#include "support.hpp"

namespace cbo {
namespace {

using cid::SolverConfig;

// Straight-line transcription of the update for quadratic problems: full
// batch, projected gradient inner steps on raw h, closed-form hypergradient
// rows R_j + lambda theta + P^T (Q_j + gamma delta), f = sum log z.
struct ReferenceCid {
  const testbed::QuadraticCbo& q;
  SolverConfig cfg;
  Vector theta;
  std::vector<Vector> delta;
  Vector u;
  bool started = false;

  ReferenceCid(const testbed::QuadraticCbo& problem, const SolverConfig& config)
      : q(problem), cfg(config), theta(problem.theta0()) {
    for (std::size_t i = 0; i < q.num_instances(); ++i) {
      delta.push_back(Vector(q.options().p, 0.0));  // symmetric box center
    }
  }

  void step() {
    const auto& o = q.options();
    const double gamma = o.delta_curvature, lambda = o.theta_curvature;
    const std::size_t M = q.num_instances();
    Vector gbar(o.m, 0.0);
    Matrix jbar(o.m, o.d);
    for (std::size_t i = 0; i < M; ++i) {
      const auto& tr = q.instance(i).terms();
      Vector& dl = delta[i];
      if (!cfg.warm_start) dl.assign(o.p, 0.0);
      for (std::size_t k = 0; k < cfg.K; ++k) {
        Vector e(o.p);
        for (std::size_t a = 0; a < o.p; ++a) {
          double pt = 0.0;
          for (std::size_t b = 0; b < o.d; ++b) pt += tr.P(a, b) * theta[b];
          e[a] = dl[a] - pt - tr.m[a];
        }
        for (std::size_t a = 0; a < o.p; ++a) {
          double de = 0.0;
          for (std::size_t b = 0; b < o.p; ++b) de += tr.D(a, b) * e[b];
          dl[a] = std::clamp(dl[a] - *cfg.alpha * de, -o.box_half_width, o.box_half_width);
        }
      }
      const double dd = [&] { double s = 0; for (double v : dl) s += v * v; return s; }();
      const double tt = [&] { double s = 0; for (double v : theta) s += v * v; return s; }();
      for (std::size_t j = 0; j < o.m; ++j) {
        double g = tr.s[j] + 0.5 * gamma * dd + 0.5 * lambda * tt;
        for (std::size_t a = 0; a < o.p; ++a) g += tr.Q(j, a) * dl[a];
        for (std::size_t b = 0; b < o.d; ++b) g += tr.R(j, b) * theta[b];
        gbar[j] += g / M;
        for (std::size_t b = 0; b < o.d; ++b) {
          double row = tr.R(j, b) + lambda * theta[b];
          for (std::size_t a = 0; a < o.p; ++a) row += tr.P(a, b) * (tr.Q(j, a) + gamma * dl[a]);
          jbar(j, b) += row / M;
        }
      }
    }
    if (!started) {
      u = gbar;
      started = true;
    } else {
      for (std::size_t j = 0; j < o.m; ++j) u[j] = (1.0 - cfg.eta) * u[j] + cfg.eta * gbar[j];
    }
    for (double& z : u) z = std::max(z, 1e-6);
    const double beta = *cfg.beta.base;
    for (std::size_t b = 0; b < o.d; ++b) {
      double dir = 0.0;
      for (std::size_t j = 0; j < o.m; ++j) dir += jbar(j, b) / u[j];
      theta[b] -= beta * dir;
    }
  }
};

SolverConfig quadratic_cfg() {
  SolverConfig cfg;
  cfg.T = 25;
  cfg.K = 7;
  cfg.full_batch = true;
  cfg.alpha = 0.2;
  cfg.beta.base = 0.05;
  cfg.eta = 0.6;
  cfg.inner_mode = cid::InnerMode::kProjected;
  cfg.c = 0.0;
  cfg.hypergrad.cg_tol = 1e-14;
  return cfg;
}

TEST(Cid, MatchesReferenceTranscription) {
  test::Gen gen(61);
  for (int trial = 0; trial < 10; ++trial) {
    testbed::QuadraticOptions o;
    o.d = gen.index(1, 6);
    o.p = gen.index(1, 6);
    o.m = gen.index(1, 3);
    o.M = gen.index(1, 8);
    const auto q = testbed::make_quadratic_cbo(900 + trial, o);
    SolverConfig cfg = quadratic_cfg();
    cfg.warm_start = trial % 2 == 0;
    const cid::RunResult run = cid::run(q.problem(), q.theta0(), cfg);
    ReferenceCid ref(q, cfg);
    for (std::size_t t = 0; t < cfg.T; ++t) ref.step();
    EXPECT_LE(relative_error(run.state.theta, ref.theta), 1e-10);
    EXPECT_LE(relative_error(run.state.u, ref.u), 1e-10);
    for (std::size_t i = 0; i < q.num_instances(); ++i) {
      EXPECT_LE(test::max_abs_diff(run.state.per_instance_delta[i], ref.delta[i]), 1e-10);
    }
  }
}

TEST(Cid, LinearOuterExactInnerIsGradientDescent) {
  testbed::QuadraticOptions o;
  o.d = 4;
  o.p = 3;
  o.m = 2;
  o.M = 6;
  o.isotropic = true;
  o.mu = 2.0;
  o.outer = testbed::OuterKind::kLinear;
  const auto q = testbed::make_quadratic_cbo(62, o);
  SolverConfig cfg = quadratic_cfg();
  cfg.eta = 1.0;
  cfg.alpha = 1.0 / o.mu;  // one step lands on delta*
  cfg.K = 1;
  cfg.T = 40;
  Vector theta = q.theta0();
  const cid::RunResult run = cid::run(q.problem(), q.theta0(), cfg,
                                      [&](const cid::CidState& s, const cid::StepRecord&) {
                                        axpy(-*cfg.beta.base, q.gradient(theta), theta);
                                        EXPECT_LE(test::max_abs_diff(s.theta, theta), 1e-10);
                                      });
  EXPECT_EQ(run.metrics.records.size(), 40u);
}

TEST(Cid, UnitEtaFullBatchHasNoMemory) {
  const auto q = testbed::make_quadratic_cbo(63, 3, 2, 5);
  SolverConfig cfg = quadratic_cfg();
  cfg.eta = 1.0;
  const cid::RunResult run = cid::run(q.problem(), q.theta0(), cfg);
  for (const auto& r : run.metrics.records) EXPECT_EQ(r.tracking_error, 0.0);
}

TEST(Cid, ZeroStepsLeavesStateUnchanged) {
  const auto q = testbed::make_quadratic_cbo(64, 3, 2, 5);
  SolverConfig cfg = quadratic_cfg();
  cfg.T = 0;
  const cid::RunResult run = cid::run(q.problem(), q.theta0(), cfg);
  EXPECT_EQ(run.state.theta, q.theta0());
  EXPECT_FALSE(run.state.u_initialized);
  EXPECT_TRUE(run.metrics.records.empty());
}

TEST(Cid, SameSeedSameTrajectory) {
  const auto q = testbed::make_quadratic_cbo(65, 4, 3, 20);
  SolverConfig cfg;
  cfg.T = 30;
  cfg.batch_size = 4;
  cfg.seed = 99;
  const cid::RunResult a = cid::run(q.problem(), q.theta0(), cfg);
  const cid::RunResult b = cid::run(q.problem(), q.theta0(), cfg);
  EXPECT_EQ(a.state.theta, b.state.theta);
  ASSERT_EQ(a.metrics.records.size(), b.metrics.records.size());
  for (std::size_t t = 0; t < a.metrics.records.size(); ++t) {
    EXPECT_EQ(a.metrics.records[t].objective, b.metrics.records[t].objective);
    EXPECT_EQ(a.metrics.records[t].grad_norm, b.metrics.records[t].grad_norm);
  }
  cfg.seed = 100;
  const cid::RunResult c = cid::run(q.problem(), q.theta0(), cfg);
  EXPECT_NE(a.state.theta, c.state.theta);
}

TEST(Cid, FrozenThetaTrackingErrorMatchesMinibatchVariance) {
  // With beta = 0 and exact inner solves, u is an exponential average of
  // i.i.d. minibatch means, so E||u - g||^2 = eta / (2 - eta) * Var(gbar_B).
  testbed::QuadraticOptions o;
  o.d = 2;
  o.p = 2;
  o.m = 1;
  o.M = 12;
  o.isotropic = true;
  o.outer = testbed::OuterKind::kLinear;
  const auto q = testbed::make_quadratic_cbo(66, o);
  const std::size_t b = 3;
  const double eta = 0.3;
  SolverConfig cfg = quadratic_cfg();
  cfg.full_batch = false;
  cfg.batch_size = b;
  cfg.K = 1;
  cfg.alpha = 1.0;
  cfg.eta = eta;
  cfg.beta.base = 0.0;
  cfg.T = 20000;
  cfg.seed = 5;

  const Vector& theta = q.theta0();
  Vector gi(o.M);
  double full = 0.0;
  for (std::size_t i = 0; i < o.M; ++i) {
    gi[i] = q.instance(i).g_value(theta, q.delta_star(i, theta))[0];
    full += gi[i] / o.M;
  }
  double var = 0.0;
  for (double g : gi) var += (g - full) * (g - full) / (o.M - 1.0);
  const double batch_var = var / b * (o.M - b) / static_cast<double>(o.M);
  const double predicted = eta / (2.0 - eta) * batch_var;

  double sum = 0.0;
  std::size_t count = 0;
  cid::run(q.problem(), theta, cfg, [&](const cid::CidState& s, const cid::StepRecord& r) {
    if (r.step >= 200) {
      sum += (s.u[0] - full) * (s.u[0] - full);
      ++count;
    }
  });
  EXPECT_NEAR(sum / count / predicted, 1.0, 0.15);
}

TEST(DrawBatch, DistinctSortedUniform) {
  std::mt19937_64 rng(67);
  std::map<std::size_t, std::size_t> hits;
  const std::size_t n = 10, b = 4, rounds = 20000;
  for (std::size_t r = 0; r < rounds; ++r) {
    const auto batch = cid::draw_batch(n, b, rng);
    ASSERT_EQ(batch.size(), b);
    for (std::size_t k = 0; k < b; ++k) {
      ASSERT_LT(batch[k], n);
      if (k > 0) {
        ASSERT_LT(batch[k - 1], batch[k]);
      }
      ++hits[batch[k]];
    }
  }
  const double expected = static_cast<double>(rounds * b) / n;
  for (const auto& [i, h] : hits) EXPECT_NEAR(h / expected, 1.0, 0.05) << i;
  const auto all = cid::draw_batch(5, 9, rng);
  EXPECT_EQ(all, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(SolverConfig, Validation) {
  SolverConfig cfg;
  EXPECT_NO_THROW(cfg.validate(100));
  cfg.eta = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.eta = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SolverConfig{};
  EXPECT_THROW(cfg.validate(10), ConfigError);  // batch 64 > 10
  cfg.full_batch = true;
  EXPECT_NO_THROW(cfg.validate(10));
  cfg = SolverConfig{};
  cfg.c = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.inner_mode = cid::InnerMode::kProjected;
  EXPECT_NO_THROW(cfg.validate());
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(BetaSchedule, Shapes) {
  cid::BetaSchedule s;
  EXPECT_DOUBLE_EQ(s.at(0, 400), 0.05);
  EXPECT_DOUBLE_EQ(s.at(399, 400), 0.05);
  s.kind = cid::BetaSchedule::Kind::kCosine;
  s.base = 2.0;
  EXPECT_DOUBLE_EQ(s.at(0, 100), 2.0);
  EXPECT_NEAR(s.at(50, 100), 1.0, 1e-15);
  s.kind = cid::BetaSchedule::Kind::kStep;
  s.decay = 0.5;
  s.period_fraction = 0.25;
  EXPECT_DOUBLE_EQ(s.at(24, 100), 2.0);
  EXPECT_DOUBLE_EQ(s.at(25, 100), 1.0);
  EXPECT_DOUBLE_EQ(s.at(99, 100), 0.25);
}

TEST(RunDone, TemperatureFollowsScheduleAndResetsU) {
  const auto q = testbed::make_quadratic_cbo(68, 3, 2, 6);
  const CboProblem done = q.done_problem(1.0);
  SolverConfig cfg = quadratic_cfg();
  cfg.T = 12;
  cfg.alpha.reset();
  cfg.r_schedule = dro::RSchedule{{10.0, 1.0, 0.1}, {0.0, 0.5, 0.75}};
  std::vector<double> rs;
  std::vector<double> tracking;
  cid::run_done(done.done->losses, q.theta0(), cfg,
                [&](const cid::CidState&, const cid::StepRecord& r) {
                  rs.push_back(r.r);
                  tracking.push_back(r.tracking_error);
                });
  const std::vector<double> expected_r{10, 10, 10, 10, 10, 10, 1, 1, 1, 0.1, 0.1, 0.1};
  EXPECT_EQ(rs, expected_r);
  // Each change of r restarts u from the batch mean.
  EXPECT_EQ(tracking[0], 0.0);
  EXPECT_EQ(tracking[6], 0.0);
  EXPECT_EQ(tracking[9], 0.0);
  EXPECT_GT(tracking[7], 0.0);
}

}  // namespace
}  // namespace cbo
