#include <gtest/gtest.h>

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "resamplekit/pairs.hpp"
#include "resamplekit/renewal.hpp"
#include "resamplekit/system.hpp"

using namespace resamplekit;

namespace {

const NormalKit kStandard{{2, 1}, {2, 1}};

std::optional<ErrorCode> code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

// E[φφ'|α] by drawing the common and distinct partial sums directly.
std::pair<double, double> conditional_mc(const NormalKit& kit, std::array<std::size_t, 2> a, std::size_t mx,
                                         std::size_t my, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> x(kit.x.mean, kit.x.sd), y(kit.y.mean, kit.y.sd);
  auto sum = [&](auto& dist, std::size_t k) {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += dist(gen);
    return s;
  };
  double hits = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double com = sum(x, a[0]) - sum(y, a[1]);
    const double d1 = sum(x, mx - a[0]) - sum(y, my - a[1]);
    const double d2 = sum(x, mx - a[0]) - sum(y, my - a[1]);
    hits += (com + d1 > 0) && (com + d2 > 0);
  }
  const double p = hits / static_cast<double>(n);
  return {p, std::sqrt(p * (1 - p) / static_cast<double>(n))};
}

}  // namespace

TEST(Exceedance, EmptySumAlwaysExceeded) {
  const RenewalPair pair{{1, 2, 3, 4}, {5, 6}, 2, 0};
  EXPECT_EQ(estimate_exceedance(pair, 50, 1).estimate, 1.0);
}

TEST(Exceedance, Dominance) {
  const RenewalPair pair{{10, 11, 12, 13, 14, 15}, {1, 2, 3, 4, 5, 6}, 3, 3};
  EXPECT_EQ(estimate_exceedance(pair, 50, 1).estimate, 1.0);
}

TEST(Exceedance, SymmetricCaseIsHalfOnAverage) {
  const auto c = plugin_baseline(RenewalLayout::threshold(10, 10, 5, 0), KnownDistribution::normal(2, 1),
                                 KnownDistribution::normal(2, 1), 50, 4000, 2);
  EXPECT_EQ(c.theta, 0.5);
  EXPECT_NEAR(c.resampling.mean, 0.5, 3 * c.resampling.mean_se);
}

TEST(Exceedance, FeasibilityEnforced) {
  EXPECT_EQ(code_of([] { estimate_exceedance({{1, 2, 3}, {1, 2, 3, 4}, 2, 2}, 10, 1); }),
            ErrorCode::infeasible_layout);
  EXPECT_EQ(code_of([] { exceedance_variance(RenewalLayout{9, 10, 5, 5}, kStandard, 10); }),
            ErrorCode::infeasible_layout);
}

TEST(Exceedance, NegativeValuesCounted) {
  const RenewalPair pair{{-1, 2}, {3, -4}, 1, 1};
  EXPECT_EQ(pair.negative_values(), 2u);
}

TEST(Mu11, FullOverlapAndIndependence) {
  for (std::size_t k = 0; k <= 3; ++k) {
    const std::size_t mx = 5, my = 5 - k;
    const double th = kStandard.theta(mx, my);
    EXPECT_NEAR(kStandard.mu11({mx, my}, mx, my), th, 1e-12);
    EXPECT_NEAR(kStandard.mu11({0, 0}, mx, my), th * th, 1e-9);
  }
}

TEST(Mu11, FrechetBounds) {
  const NormalKit kit{{2, 1}, {1.5, 0.7}};
  for (std::size_t ax = 0; ax <= 4; ++ax)
    for (std::size_t ay = 0; ay <= 3; ++ay) {
      const double th = kit.theta(4, 3), m = kit.mu11({ax, ay}, 4, 3);
      EXPECT_GE(m, std::max(0.0, 2 * th - 1) - 1e-12);
      EXPECT_LE(m, th + 1e-12);
    }
}

TEST(Mu11, MatchesConditionalSimulation) {
  const auto [p, se] = conditional_mc(kStandard, {2, 2}, 5, 5, 1'000'000, 7);
  EXPECT_NEAR(kStandard.mu11({2, 2}, 5, 5), p, 3 * se);
  const NormalKit kit{{2, 1}, {2.5, 1.5}};
  const auto [p2, se2] = conditional_mc(kit, {3, 1}, 5, 4, 400'000, 8);
  EXPECT_NEAR(kit.mu11({3, 1}, 5, 4), p2, 3 * se2);
}

TEST(RenewalVarianceTest, ProbabilitiesSumToOne) {
  for (std::size_t n : {10u, 12u, 15u})
    for (std::size_t k = 0; k <= 3; ++k) {
      const auto v = exceedance_variance(RenewalLayout::threshold(n, n, 5, k), kStandard, 10);
      double total = 0.0;
      for (const auto& c : v.cells) total += c.probability;
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(RenewalVarianceTest, SingleRealizationIsBernoulli) {
  const auto v = exceedance_variance(RenewalLayout::threshold(10, 10, 5, 1), kStandard, 1);
  EXPECT_NEAR(v.variance, v.theta * (1 - v.theta), 1e-15);
}

TEST(RenewalVarianceTest, TableValues) {
  EXPECT_NEAR(exceedance_variance(RenewalLayout::threshold(10, 10, 5, 0), kStandard, 1000).variance, 0.08, 0.01);
  EXPECT_NEAR(exceedance_variance(RenewalLayout::threshold(10, 10, 5, 3), kStandard, 1000).variance, 0.001, 0.01);
  EXPECT_NEAR(exceedance_variance(RenewalLayout::threshold(12, 12, 6, 3), kStandard, 1000).variance, 0.002, 0.01);
}

TEST(RenewalVarianceTest, ThetaNondecreasingInThreshold) {
  double prev = 0.0;
  for (std::size_t k = 0; k <= 3; ++k) {
    const double th = kStandard.theta(5, 5 - k);
    EXPECT_GE(th, prev);
    prev = th;
  }
}

TEST(RenewalVarianceTest, MatchesReplicatedResampling) {
  const auto layout = RenewalLayout::threshold(10, 10, 5, 1);
  const auto v = exceedance_variance(layout, kStandard, 20);
  const auto c = plugin_baseline(layout, KnownDistribution::normal(2, 1), KnownDistribution::normal(2, 1), 20,
                                 100'000, 4);
  EXPECT_NEAR(c.resampling.variance, v.variance, 3 * c.resampling.variance_se);
  EXPECT_NEAR(c.resampling.mean, v.theta, 3 * c.resampling.mean_se);
}

TEST(RenewalVarianceTest, DiscreteKitAgreesWithPairCalculus) {
  const std::vector<double> gx{1, 2, 5}, gy{2, 4};
  const DiscreteKit kit(gx, gy);
  const auto v = exceedance_variance(RenewalLayout{4, 3, 2, 1}, kit, 6);
  const auto spec = parse_system("cmp(sum(x1, x2) > x3)");
  const auto src = GeneratorSource::make({4, 3}, {0, 0, 1},
                                         {KnownDistribution::empirical(gx), KnownDistribution::empirical(gy)});
  const auto rep = resampling_variance(spec, src, 6);
  ASSERT_TRUE(rep.exact);
  EXPECT_NEAR(v.theta, rep.mu.value, 1e-12);
  EXPECT_NEAR(v.mu11, rep.mu11.value, 1e-12);
  EXPECT_NEAR(v.variance, rep.variance, 1e-12);
}

TEST(RenewalVarianceTest, DiscreteThetaByBruteForce) {
  const std::vector<double> gx{1, 2, 3, 5}, gy{1, 2, 4, 4};
  double hits = 0.0;
  for (double a : gx)
    for (double b : gx)
      for (double c : gy) hits += a + b > c;
  EXPECT_NEAR(DiscreteKit(gx, gy).theta(2, 1), hits / 64.0, 1e-15);
}

TEST(PluginBaseline, DegenerateSamples) {
  const auto c = plugin_baseline(RenewalLayout{6, 6, 3, 2}, KnownDistribution::point(1.0),
                                 KnownDistribution::point(1.0), 10, 20, 1);
  EXPECT_EQ(c.theta, 1.0);
  EXPECT_EQ(c.plugin.variance, 0.0);
  EXPECT_EQ(c.plugin.bias, 0.0);
}

TEST(PluginBaseline, SymmetricCaseUnbiased) {
  const auto c = plugin_baseline(RenewalLayout::threshold(10, 10, 5, 0), KnownDistribution::normal(2, 1),
                                 KnownDistribution::normal(2, 1), 200, 4000, 3);
  EXPECT_NEAR(c.plugin.bias, 0.0, 3 * c.plugin.mean_se);
}
