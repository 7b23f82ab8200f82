#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vargan/error.hpp"
#include "vargan/theory.hpp"

using namespace vargan;
using namespace vargan::theory;

namespace {

const double kLog2 = std::log(2.0);

// Independent direct summation for the JSD oracle.
double jsd_direct(const std::vector<double>& a, const std::vector<double>& b) {
  double out = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double m = 0.5 * (a[i] + b[i]);
    if (a[i] > 0) out += 0.5 * a[i] * std::log(a[i] / m);
    if (b[i] > 0) out += 0.5 * b[i] * std::log(b[i] / m);
  }
  return out;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
  return r;
}

}  // namespace

TEST(Distribution, Validation) {
  EXPECT_THROW(DiscreteDistribution({0.5, 0.6}), ValidationError);
  EXPECT_THROW(DiscreteDistribution({-0.1, 1.1}), ValidationError);
  EXPECT_THROW(DiscreteDistribution(std::vector<double>{}), ValidationError);
  Rng rng(1);
  const auto d = DiscreteDistribution::random(16, rng, 0.25);
  EXPECT_NEAR(std::accumulate(d.values().begin(), d.values().end(), 0.0), 1.0, 1e-12);
}

TEST(Entropy, KnownValues) {
  EXPECT_NEAR(shannon_entropy(DiscreteDistribution::uniform(4)), std::log(4.0), 1e-15);
  EXPECT_NEAR(shannon_entropy(DiscreteDistribution::uniform(4)), 1.38629, 1e-5);
  EXPECT_EQ(shannon_entropy(DiscreteDistribution::point_mass(5, 2)), 0.0);
  EXPECT_NEAR(shannon_entropy(DiscreteDistribution({0.5, 0.25, 0.25})), 1.5 * kLog2, 1e-15);
}

TEST(Jsd, KnownValues) {
  const DiscreteDistribution a({0.2, 0.3, 0.5});
  EXPECT_EQ(jsd(a, a), 0.0);
  EXPECT_NEAR(jsd(DiscreteDistribution({1, 0}), DiscreteDistribution({0, 1})), kLog2, 1e-15);
  EXPECT_NEAR(jsd(DiscreteDistribution({1, 0}), DiscreteDistribution({0.5, 0.5})), 0.21576, 1e-5);
  EXPECT_THROW(jsd(a, DiscreteDistribution::uniform(2)), ValidationError);
}

TEST(Jsd, MatchesDirectSummationAndIsSymmetric) {
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const auto a = DiscreteDistribution::random(6, rng, 0.3);
    const auto b = DiscreteDistribution::random(6, rng, 0.3);
    EXPECT_NEAR(jsd(a, b), jsd_direct(a.values(), b.values()), 1e-14);
    EXPECT_NEAR(jsd(a, b), jsd(b, a), 1e-15);
    EXPECT_LE(jsd(a, b), kLog2 + 1e-15);
  }
}

TEST(DiscreteRegressionLoss, KnownValues) {
  const auto u = DiscreteDistribution::uniform(2);
  EXPECT_EQ(discrete_regression_loss(u, {0.3, 0.3}, 0.3, false), 0.0);
  EXPECT_EQ(discrete_regression_loss(DiscreteDistribution({1}), {0.7}, 0.7, false), 0.0);
  EXPECT_NEAR(discrete_regression_loss(DiscreteDistribution({1}), {0.5}, -0.5, false), -kLog2, 1e-15);
  // y - r = 0.5 in both bins: -log 0.5.
  EXPECT_NEAR(discrete_regression_loss(u, {0.0, 0.0}, 0.5, false), kLog2, 1e-15);
  EXPECT_THROW(discrete_regression_loss(DiscreteDistribution({1}), {-1.0}, 0.0, false), ValidationError);
}

TEST(OptimalRegressor, SingleSet) {
  const auto r = optimal_regressor_single(DiscreteDistribution({0.5, 0.5}), 0.5, 0.2);
  EXPECT_NEAR(r[0], 0.2, 1e-15);
  EXPECT_NEAR(r[1], 0.2, 1e-15);
  for (double v : optimal_regressor_single(DiscreteDistribution::uniform(4), 0.25, 1.0)) EXPECT_NEAR(v, 1.0, 1e-15);
  const DiscreteDistribution p({0.1, 0.6, 0.3});
  const auto r1 = optimal_regressor_single(p, 1.0, 0.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(r1[i], p[i] - 1.0, 1e-15);
  EXPECT_THROW(optimal_regressor_single(p, 0.0, 0.0), ValidationError);
}

TEST(OptimalRegressor, Pair) {
  const auto r = optimal_regressor_pair(DiscreteDistribution({1, 0}), DiscreteDistribution({0, 1}), 0.5, 0.7);
  EXPECT_NEAR(r[0], -0.3, 1e-15);
  EXPECT_NEAR(r[1], -0.5, 1e-15);
  const DiscreteDistribution p({0.2, 0.8});
  for (double v : optimal_regressor_pair(p, p, 0.5, 0.7)) EXPECT_NEAR(v, -0.4, 1e-15);
  EXPECT_THROW(optimal_regressor_pair(p, p, 0.5, 0.5), ValidationError);
  EXPECT_THROW(optimal_regressor_pair(DiscreteDistribution({1, 0}), DiscreteDistribution({1, 0}), 0.1, 0.2),
               ValidationError);

  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto a = DiscreteDistribution::random(5, rng);
    const auto b = DiscreteDistribution::random(5, rng);
    const double y1 = rng.uniform(-1, 1), y2 = rng.uniform(-1, 1);
    const auto t = optimal_regressor_pair(a, b, y1, y2);
    for (std::size_t k = 0; k < 5; ++k) {
      EXPECT_NEAR(t[k], -(a[k] * (1 - y2) + b[k] * (1 - y1)) / (a[k] + b[k]), 1e-14);
    }
  }
}

TEST(EntropyIdentity, Examples) {
  const auto u = verify_entropy_identity(DiscreteDistribution::uniform(4), 1.0, 0.37);
  EXPECT_TRUE(u.pass);
  EXPECT_NEAR(u.lhs, std::log(4.0), 1e-12);
  EXPECT_NEAR(u.rhs, std::log(4.0), 1e-12);
  const auto pm = verify_entropy_identity(DiscreteDistribution::point_mass(3, 1), 1.0, 0.0);
  EXPECT_TRUE(pm.pass);
  EXPECT_NEAR(pm.lhs, 0.0, 1e-15);
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const auto c = verify_entropy_identity(DiscreteDistribution::random(8, rng, 0.2), 2.0, rng.uniform(-1, 1));
    EXPECT_LT(c.residual, 1e-9);
  }
}

TEST(JsdIdentity, Examples) {
  const DiscreteDistribution p({0.3, 0.7});
  const double y1 = 0.2, y2 = -0.4, gap = std::abs((1 - y1) - (1 - y2));
  const auto same = verify_jsd_identity(p, p, y1, y2);
  EXPECT_TRUE(same.pass);
  EXPECT_EQ(same.jsd_value, 0.0);
  EXPECT_NEAR(same.loss, std::log(4.0) - 2 * std::log(gap), 1e-12);

  const auto disjoint = verify_jsd_identity(DiscreteDistribution({1, 0}), DiscreteDistribution({0, 1}), y1, y2);
  EXPECT_TRUE(disjoint.pass);
  EXPECT_NEAR(disjoint.loss, -2 * std::log(gap), 1e-12);
  // Flipping the sign of log 4 shifts the constant by log 16.
  EXPECT_NEAR(disjoint.derived_constant - disjoint.negated_log4_constant, std::log(16.0), 1e-12);
}

TEST(JsdIdentity, LossStrictlyDecreasingInJsd) {
  Rng rng(5);
  std::vector<double> losses, jsds;
  for (int i = 0; i < 100; ++i) {
    const auto a = DiscreteDistribution::random(6, rng);
    const auto b = DiscreteDistribution::random(6, rng);
    const auto r = verify_jsd_identity(a, b, 0.3, -0.5);
    EXPECT_LT(r.constant_residual, 1e-9);
    losses.push_back(r.loss);
    jsds.push_back(r.jsd_value);
  }
  const auto rl = ranks(losses), rj = ranks(jsds);
  for (std::size_t i = 0; i < rl.size(); ++i) EXPECT_EQ(rl[i], static_cast<double>(rl.size() - 1) - rj[i]);
}

TEST(BruteForce, RecoversClosedForm) {
  Rng rng(6);
  for (int i = 0; i < 10; ++i) {
    std::vector<double> a(4), b(4);
    for (auto& v : a) v = 0.1 + rng.uniform();
    for (auto& v : b) v = 0.1 + rng.uniform();
    const double sa = std::accumulate(a.begin(), a.end(), 0.0), sb = std::accumulate(b.begin(), b.end(), 0.0);
    for (auto& v : a) v /= sa;
    for (auto& v : b) v /= sb;
    const DiscreteDistribution p1(a), p2(b);
    const double y1 = rng.uniform(-1, 0), y2 = rng.uniform(0.1, 1);
    const auto bf = brute_force_pair_minimum(p1, p2, y1, y2);
    const auto closed = optimal_regressor_pair(p1, p2, y1, y2);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_LE(std::abs(bf.argmin[k] - closed[k]), bf.step[k]);
  }
}

TEST(BruteForce, SymmetricCaseIsFlatAtMidpoint) {
  const DiscreteDistribution p({0.4, 0.6});
  const double y1 = 0.1, y2 = 0.6, mid = -((1 - y1) + (1 - y2)) / 2;
  const auto bf = brute_force_pair_minimum(p, p, y1, y2);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_LE(std::abs(bf.argmin[k] - mid), bf.step[k]);
    // Quadratic rise over one grid step is tiny relative to the loss.
    EXPECT_LT(bf.neighbour_rise[k], 1e-6);
  }
}

TEST(BruteForce, SingleDistributionBinHasNoFiniteMinimum) {
  EXPECT_THROW(brute_force_pair_minimum(DiscreteDistribution({1, 0}), DiscreteDistribution({0.5, 0.5}), 0.1, 0.6),
               ValidationError);
}

TEST(Sweep, AllChecksPass) {
  const auto s = run_theory_sweep(100, 7);
  EXPECT_TRUE(s.all_pass);
  EXPECT_LT(s.max_entropy_residual, 1e-9);
  EXPECT_LT(s.max_jsd_residual, 1e-9);
  EXPECT_FALSE(format_record(s.checks.front()).empty());
}
