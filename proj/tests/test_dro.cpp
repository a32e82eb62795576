#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "cbo/dro.hpp"
#include "cbo/errors.hpp"
#include "simplex_oracle.hpp"
#include "support.hpp"

namespace cbo {
namespace {

using dro::DroParams;
using dro::SimplexWeights;

TEST(SimplexOracle, ProjectionLandsOnSimplex) {
  test::Gen gen(51);
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<double> w = test::project_to_simplex(gen.normal_vector(gen.index(1, 10), 3.0));
    double sum = 0.0;
    for (double x : w) {
      EXPECT_GE(x, 0.0);
      sum += x;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  EXPECT_EQ(test::project_to_simplex({0.2, 0.8}), (std::vector<double>{0.2, 0.8}));
}

TEST(OptimalWeights, EqualLossesAreUniform) {
  for (double r : {0.01, 1.0, 100.0}) {
    const SimplexWeights w = dro::optimal_weights(Vector{1.0, 1.0, 1.0}, {r});
    for (double x : w.w) EXPECT_DOUBLE_EQ(x, 1.0 / 3.0);
  }
}

TEST(OptimalWeights, LargeRApproachesUniform) {
  const SimplexWeights w = dro::optimal_weights(Vector{0.0, 1.0}, {1e6});
  EXPECT_NEAR(w.w[0], 0.5, 1e-6);
  EXPECT_NEAR(w.w[1], 0.5, 1e-6);
}

TEST(OptimalWeights, TwoLossesUnitR) {
  const std::vector<double> brute = test::brute_force_weights({0.0, 1.0}, 1.0);
  EXPECT_NEAR(brute[0], 0.26894, 1e-5);
  EXPECT_NEAR(brute[1], 0.73106, 1e-5);
  const SimplexWeights w = dro::optimal_weights(Vector{0.0, 1.0}, {1.0});
  EXPECT_NEAR(w.w[0], brute[0], 1e-8);
  EXPECT_NEAR(w.w[1], brute[1], 1e-8);
}

TEST(OptimalWeights, MatchesBruteForceProperty) {
  test::Gen gen(52);
  for (int trial = 0; trial < 30; ++trial) {
    const double r = std::array<double, 3>{0.1, 1.0, 10.0}[trial % 3];
    const Vector losses = gen.losses(gen.index(2, 6));
    const SimplexWeights w = dro::optimal_weights(losses, {r});
    const std::vector<double> brute = test::brute_force_weights(losses, r);
    EXPECT_LE(test::max_abs_diff(w.w, brute), 1e-6) << "r = " << r;
  }
}

TEST(OptimalWeights, ArgmaxAndTies) {
  test::Gen gen(53);
  for (int trial = 0; trial < 500; ++trial) {
    Vector losses = gen.losses(gen.index(2, 12));
    losses[1] = losses[0];
    const double r = std::pow(10.0, gen.uniform(-2.0, 2.0));
    const SimplexWeights w = dro::optimal_weights(losses, {r});
    EXPECT_EQ(w.w[0], w.w[1]);
    const auto top = std::max_element(losses.begin(), losses.end()) - losses.begin();
    EXPECT_EQ(*std::max_element(w.w.begin(), w.w.end()), w.w[top]);
  }
}

TEST(OptimalWeights, OptimalityCertificate) {
  test::Gen gen(54);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector losses = gen.losses(gen.index(2, 8));
    const DroParams params{std::pow(10.0, gen.uniform(-1.0, 1.0))};
    const double best = dro::regularized_inner_max_value(
        losses, dro::optimal_weights(losses, params), params);
    for (int k = 0; k < 1000; ++k) {
      const SimplexWeights other{gen.simplex_point(losses.size())};
      EXPECT_GE(best - dro::regularized_inner_max_value(losses, other, params), -1e-9);
    }
  }
}

TEST(OptimalWeights, ShiftInvariant) {
  test::Gen gen(55);
  for (int trial = 0; trial < 500; ++trial) {
    const Vector losses = gen.losses(gen.index(1, 10));
    const double a = gen.uniform(-100.0, 100.0);
    Vector shifted = losses;
    for (double& l : shifted) l += a;
    const DroParams params{gen.uniform(0.05, 10.0)};
    EXPECT_LE(test::max_abs_diff(dro::optimal_weights(losses, params).w,
                                 dro::optimal_weights(shifted, params).w),
              1e-12);
  }
}

TEST(OptimalWeights, Rejections) {
  EXPECT_THROW(dro::optimal_weights(Vector{1.0}, {0.0}), ConfigError);
  EXPECT_THROW(dro::optimal_weights(Vector{1.0}, {-1.0}), ConfigError);
  EXPECT_THROW(dro::optimal_weights(Vector{1.0, NAN}, {1.0}), NumericError);
  EXPECT_THROW(dro::optimal_weights(Vector{}, {1.0}), NumericError);
}

TEST(OptimalWeights, TinyRDoesNotOverflow) {
  const SimplexWeights w = dro::optimal_weights(Vector{0.0, 500.0, 1000.0}, {0.1});
  EXPECT_EQ(w.w[2], 1.0);
  EXPECT_EQ(w.w[0], 0.0);
}

TEST(RegularizedValue, UniformWeightsGiveMean) {
  const Vector losses{1.0, 2.0, 6.0};
  const SimplexWeights w{{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}};
  EXPECT_NEAR(dro::regularized_inner_max_value(losses, w, {5.0}), 3.0, 1e-15);
}

TEST(RegularizedValue, OneHotPlugIn) {
  const Vector losses{0.0, 1.0};
  const SimplexWeights w{{0.0, 1.0}};
  // 0*0 + 1*1 - 1 * (1 * log(2 * 1)), with 0 log 0 = 0.
  const double expected = 1.0 - std::log(2.0);
  EXPECT_NEAR(expected, test::kl_objective({0.0, 1.0}, {0.0, 1.0}, 1.0), 1e-15);
  EXPECT_NEAR(dro::regularized_inner_max_value(losses, w, {1.0}), expected, 1e-15);
}

TEST(RegularizedValue, SingleInstance) {
  for (double r : {0.1, 1.0, 10.0}) {
    EXPECT_EQ(dro::regularized_inner_max_value(Vector{-3.5}, {{1.0}}, {r}), -3.5);
    EXPECT_EQ(dro::logsumexp_objective(Vector{-3.5}, {r}), -3.5);
  }
}

TEST(LogSumExp, ConstantLosses) {
  for (double r : {0.01, 1.0, 100.0}) {
    EXPECT_NEAR(dro::logsumexp_objective(Vector{2.5, 2.5, 2.5, 2.5}, {r}), 2.5, 1e-14);
  }
}

TEST(LogSumExp, SmallRApproachesMax) {
  EXPECT_NEAR(dro::logsumexp_objective(Vector{0.0, 1.0}, {0.01}), 1.0, 0.01);
}

TEST(LogSumExp, EqualsValueAtOptimalWeights) {
  test::Gen gen(56);
  for (int trial = 0; trial < 300; ++trial) {
    const Vector losses = gen.losses(gen.index(1, 10));
    const DroParams params{std::array<double, 3>{0.1, 1.0, 10.0}[trial % 3]};
    const double lse = dro::logsumexp_objective(losses, params);
    const double value = dro::regularized_inner_max_value(
        losses, dro::optimal_weights(losses, params), params);
    EXPECT_NEAR(lse, value, 1e-10 * std::max(1.0, std::abs(lse)));
  }
}

TEST(LogSumExp, SandwichMonotoneShift) {
  test::Gen gen(57);
  for (int trial = 0; trial < 1000; ++trial) {
    Vector losses = gen.losses(gen.index(1, 10));
    const DroParams params{std::pow(10.0, gen.uniform(-2.0, 2.0))};
    const double v = dro::logsumexp_objective(losses, params);
    double mean = 0.0;
    for (double l : losses) mean += l / static_cast<double>(losses.size());
    const double top = *std::max_element(losses.begin(), losses.end());
    const double slack = 1e-12 * (1.0 + std::abs(top));
    EXPECT_GE(v, mean - slack);
    EXPECT_LE(v, top + slack);

    const double a = gen.uniform(-10.0, 10.0);
    Vector shifted = losses;
    for (double& l : shifted) l += a;
    EXPECT_NEAR(dro::logsumexp_objective(shifted, params), v + a, 1e-12 * (1.0 + std::abs(v) + std::abs(a)));

    const std::size_t i = gen.index(0, losses.size() - 1);
    losses[i] += gen.uniform(0.0, 3.0);
    EXPECT_GE(dro::logsumexp_objective(losses, params), v - slack);
  }
}

TEST(RSchedule, DefaultStages) {
  const dro::RSchedule s;
  EXPECT_EQ(s.at(0, 60), 10.0);
  EXPECT_EQ(s.at(39, 60), 10.0);
  EXPECT_EQ(s.at(40, 60), 1.0);
  EXPECT_EQ(s.at(49, 60), 1.0);
  EXPECT_EQ(s.at(50, 60), 0.1);
  EXPECT_EQ(s.at(59, 60), 0.1);
  EXPECT_EQ(dro::RSchedule::constant(2.0).at(17, 20), 2.0);
}

TEST(RSchedule, Validation) {
  EXPECT_NO_THROW(dro::RSchedule{}.validate());
  EXPECT_THROW((dro::RSchedule{{1.0, 0.0}, {0.0, 0.5}}.validate()), ConfigError);
  EXPECT_THROW((dro::RSchedule{{1.0, 2.0}, {0.5, 0.1}}.validate()), ConfigError);
  EXPECT_THROW((dro::RSchedule{{1.0}, {0.0, 0.5}}.validate()), ConfigError);
}

}  // namespace
}  // namespace cbo
