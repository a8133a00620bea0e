#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "resamplekit/hierarchical.hpp"

using namespace resamplekit;

namespace {

const char* kSixElement = "ind(min(max(x1,x2), min(x3,x4), sum(x5,x6)) < t)";

SampleSet exp_samples(Stream& rng, std::vector<std::size_t> sizes) {
  std::vector<std::vector<double>> v;
  for (std::size_t n : sizes) {
    v.emplace_back(n);
    for (auto& x : v.back()) x = -std::log(rng.uniform());
  }
  return SampleSet::distinct(v);
}

}  // namespace

TEST(WavePlan, SixElementStages) {
  const auto spec = parse_system(kSixElement, {{"t", 1.0}});
  const std::vector<std::size_t> sizes{3, 3, 4, 4, 5, 2};
  const WavePlan plan(spec, sizes);
  ASSERT_EQ(plan.stages().size(), 4u);
  EXPECT_EQ(plan.root().core, 10u);
  EXPECT_EQ(plan.root().top, 11u);
  EXPECT_EQ(plan.root().children.size(), 3u);
  EXPECT_EQ(plan.stages()[0].size, 3u);
  EXPECT_EQ(plan.stages()[1].size, 4u);
  EXPECT_EQ(plan.stages()[2].size, 2u);
  EXPECT_EQ(plan.root().size, 2u);  // min of child sizes
}

TEST(WavePlan, ExplicitSizesAndErrors) {
  const auto spec = parse_system(kSixElement, {{"t", 1.0}});
  const std::vector<std::size_t> sizes{3, 3, 4, 4, 5, 2};
  const WavePlan plan(spec, sizes, {{7, 9}, {11, 20}});
  EXPECT_EQ(plan.stages()[0].size, 9u);
  EXPECT_EQ(plan.root().size, 20u);
  EXPECT_THROW(WavePlan(spec, sizes, {{3, 2}}), Error);
  EXPECT_THROW(WavePlan(spec, sizes, {{7, 0}}), Error);
}

TEST(WaveEstimate, AllDataBelowThreshold) {
  const auto spec = parse_system(kSixElement, {{"t", 100.0}});
  Stream rng(1);
  const auto samples = exp_samples(rng, {3, 3, 3, 3, 3, 3});
  EXPECT_EQ(wave_estimate(spec, samples, {}, 5).estimate, 1.0);
}

TEST(WaveEstimate, SingletonSamplesAreExact) {
  const auto spec = parse_system("min(max(x1,x2), sum(x3,x4))");
  const auto samples = SampleSet::distinct({{1.0}, {2.0}, {0.5}, {0.25}});
  const auto res = wave_estimate(spec, samples, {}, 3);
  EXPECT_EQ(res.estimate, 0.75);
  EXPECT_EQ(res.empirical_variance, 0.0);
}

TEST(WaveEstimate, ThresholdOverLeafRoot) {
  const auto spec = parse_system("ind(x1 > 1)");
  const auto samples = SampleSet::distinct({{0.5, 2, 3, 4}});
  const WavePlan plan(spec, samples.argument_sizes());
  ASSERT_EQ(plan.stages().size(), 1u);
  EXPECT_NEAR(wave_enumerate(spec, samples).estimate, 0.75, 1e-15);
}

TEST(WaveEnumerate, EqualsExhaustiveMean) {
  Stream rng(12);
  for (double t : {0.5, 1.0, 2.0}) {
    const auto spec = parse_system(kSixElement, {{"t", t}});
    const auto samples = exp_samples(rng, {2, 3, 2, 2, 3, 2});
    EXPECT_EQ(wave_enumerate(spec, samples).estimate, exhaustive_theta(spec, samples));
  }
  const auto kofn = parse_system("kofn(2; ind(x1 > 1), ind(x2 > 1), ind(x3 > 1))");
  const auto samples = exp_samples(rng, {3, 4, 2});
  EXPECT_EQ(wave_enumerate(kofn, samples).estimate, exhaustive_theta(kofn, samples));
}

TEST(WaveEstimate, DeterministicAcrossThreads) {
  const auto spec = parse_system(kSixElement, {{"t", 1.0}});
  Stream rng(2);
  const auto samples = exp_samples(rng, {5, 5, 5, 5, 5, 5});
  WaveOptions one, four;
  four.par.threads = 4;
  const auto a = wave_estimate(spec, samples, {{11, 50}}, 9, one, true);
  const auto b = wave_estimate(spec, samples, {{11, 50}}, 9, four, true);
  EXPECT_EQ(*a.values, *b.values);
}

TEST(WaveEstimate, UnbiasedForSeriesParallelTree) {
  const double t = 1.0;
  const double q = std::exp(-t);
  const double theta = 1.0 - (1.0 - (1.0 - q) * (1.0 - q)) * q * q * (1.0 + t) * q;
  const auto spec = parse_system(kSixElement, {{"t", t}});
  MomentAccumulator acc;
  for (std::uint64_t rep = 0; rep < 10000; ++rep) {
    Stream rng(31, {rep});
    const auto samples = exp_samples(rng, {4, 4, 4, 4, 4, 4});
    acc.add(wave_estimate(spec, samples, {}, rep).estimate);
  }
  EXPECT_NEAR(acc.mean(), theta, 3 * acc.mean_se());
}

TEST(Propagation, LeafAndClosure) {
  const auto spec = parse_system(kSixElement, {{"t", 1.0}});
  const std::vector<std::size_t> sizes{3, 2, 4, 4, 5, 2};
  const WavePlan plan(spec, sizes);
  const auto prop = propagate_pair_probabilities(plan);
  for (const auto& leaf : prop.leaves) {
    ASSERT_EQ(leaf.omega.size(), 1u);
    EXPECT_EQ(leaf.omega.at(0), 1.0);
  }
  for (const auto& st : prop.stages) {
    double sum = 0.0;
    for (const auto& [w, p] : st.omega) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  // Four patterns at each first-level node, 2^3 direct-child patterns at the
  // root, 4^3 leaf-level patterns.
  for (int s = 0; s < 3; ++s) EXPECT_EQ(prop.stages[s].omega.size(), 4u);
  EXPECT_EQ(prop.root().children, 3u);
  EXPECT_EQ(prop.root().omega.size(), 64u);
}

TEST(Propagation, SingleElementChildAlwaysShared) {
  const auto spec = parse_system("min(x1, x2)");
  const std::vector<std::size_t> sizes{1, 3};
  const auto prop = propagate_pair_probabilities(WavePlan(spec, sizes));
  EXPECT_NEAR(prop.root().omega.at(0b01), 2.0 / 3, 1e-15);
  EXPECT_NEAR(prop.root().omega.at(0b11), 1.0 / 3, 1e-15);
  EXPECT_EQ(prop.root().omega.count(0), 0u);
}

TEST(Propagation, DeltaIsSubsetTest) {
  Stream rng(4);
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t child = rng() & 0xff, omega = rng() & 0xff;
    bool subset = true;
    for (int b = 0; b < 8; ++b)
      if ((child >> b & 1) && !(omega >> b & 1)) subset = false;
    ASSERT_EQ(delta(child, omega), subset);
  }
}

TEST(Propagation, MatchesIndexTrackingSimulation) {
  // Independent oracle: build only the ancestry of two root elements, with
  // each first-level element choosing its own leaf indices lazily.
  const auto spec = parse_system(kSixElement, {{"t", 1.0}});
  const std::vector<std::size_t> leaf{3, 2, 4, 3, 2, 5};
  const std::size_t mid[3] = {2, 3, 2};
  const WavePlan plan(spec, leaf, {{7, mid[0]}, {8, mid[1]}, {9, mid[2]}});
  const auto prop = propagate_pair_probabilities(plan);
  std::map<std::uint64_t, double> count;
  const int passes = 200000;
  Stream rng(99);
  for (int p = 0; p < passes; ++p) {
    std::map<std::pair<int, std::size_t>, std::pair<std::size_t, std::size_t>> memo;
    std::size_t idx[2][6];
    for (int e = 0; e < 2; ++e) {
      for (int c = 0; c < 3; ++c) {
        const std::size_t a = rng.index(mid[c]);
        auto it = memo.find({c, a});
        if (it == memo.end())
          it = memo.emplace(std::pair{c, a}, std::pair{rng.index(leaf[2 * c]), rng.index(leaf[2 * c + 1])}).first;
        idx[e][2 * c] = it->second.first;
        idx[e][2 * c + 1] = it->second.second;
      }
    }
    std::uint64_t w = 0;
    for (int i = 0; i < 6; ++i)
      if (idx[0][i] == idx[1][i]) w |= std::uint64_t{1} << i;
    count[w] += 1;
  }
  double chi2 = 0.0;
  int cells = 0;
  for (const auto& [w, p] : prop.root().omega) {
    const double expected = p * passes;
    const double observed = count.count(w) ? count[w] : 0.0;
    chi2 += (observed - expected) * (observed - expected) / expected;
    ++cells;
  }
  for (const auto& [w, c] : count) ASSERT_TRUE(prop.root().omega.count(w)) << w;
  boost::math::chi_squared dist(cells - 1);
  EXPECT_LT(chi2, boost::math::quantile(dist, 0.999));
}

TEST(HierarchicalVariance, TwoLeafMinTreeMatchesSimulation) {
  const auto spec = parse_system("min(x1, x2)");
  const auto g = KnownDistribution::empirical({0.5, 1.5, 2.5, 4});
  const auto src = GeneratorSource::distinct({2, 2}, {g, g});
  const auto rep = hierarchical_variance(spec, src, {{3, 2}});
  ASSERT_TRUE(rep.exact);
  EXPECT_EQ(rep.r, 2u);
  MomentAccumulator acc;
  for (std::uint64_t i = 0; i < 100000; ++i) {
    Stream rng(5, {i});
    std::vector<std::vector<double>> data(2, std::vector<double>(2));
    for (auto& col : data)
      for (auto& v : col) v = g.sample(rng);
    acc.add(wave_estimate(spec, SampleSet::distinct(data), {{3, 2}}, i).estimate);
  }
  EXPECT_NEAR(acc.variance(), rep.variance, 3 * acc.variance_se());
}

TEST(HierarchicalVariance, ConditionalOnDataMatchesSimulation) {
  const auto spec = parse_system(kSixElement, {{"t", 0.05}});
  Stream rng(8);
  const auto samples = exp_samples(rng, {2, 3, 2, 2, 3, 2});
  const auto rep = hierarchical_variance(spec, EmpiricalSource{samples}, {{11, 4}});
  ASSERT_TRUE(rep.exact);
  ASSERT_GT(rep.variance, 0.01);
  MomentAccumulator acc;
  for (std::uint64_t i = 0; i < 100000; ++i) acc.add(wave_estimate(spec, samples, {{11, 4}}, i).estimate);
  EXPECT_NEAR(acc.mean(), rep.mu.value, 3 * acc.mean_se());
  EXPECT_NEAR(acc.variance(), rep.variance, 3 * acc.variance_se());
}

TEST(HierarchicalVariance, UnitNodeSizesCollapseToSingleRealization) {
  const auto spec = parse_system("min(max(x1,x2), x3)");
  const auto g = KnownDistribution::empirical({0.5, 1.5, 2.5});
  const auto src = GeneratorSource::distinct({3, 3, 3}, {g, g, g});
  const auto rep = hierarchical_variance(spec, src, {{4, 1}, {5, 1}});
  EXPECT_EQ(rep.r, 1u);
  EXPECT_NEAR(rep.variance, rep.mu2.value - rep.mu.value * rep.mu.value, 1e-15);
}
