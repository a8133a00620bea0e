#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "resamplekit/resampling.hpp"

using namespace resamplekit;

namespace {

const char* kTwoOfThree = "kofn(2; ind(x1 > t), ind(x2 > t), ind(x3 > t))";

}  // namespace

TEST(SampleSet, RejectsOversizedBlock) {
  std::vector<Sample> s{{"H", {1, 2}}};
  EXPECT_THROW(SampleSet(s, {0, 0, 0}), Error);
}

TEST(SampleSet, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(SampleSet::distinct({{1.0}, {}}), Error);
  EXPECT_THROW(SampleSet::distinct({{1.0, NAN}}), Error);
}

TEST(SampleSet, AdmissibleCount) {
  std::vector<Sample> s{{"A", {1, 2, 3, 4}}, {"B", {5, 6, 7}}};
  EXPECT_EQ(SampleSet(s, {0, 0, 1}).admissible_count(), 12u * 3u);
}

TEST(DrawResample, UniformOverDistinctLayout) {
  const auto samples = SampleSet::distinct({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
  std::map<std::vector<std::size_t>, int> counts;
  const int n = 100000;
  for (int q = 0; q < n; ++q) {
    Stream rng(17, {static_cast<std::uint64_t>(q)});
    ++counts[draw_resample(samples, rng).j];
  }
  ASSERT_EQ(counts.size(), 27u);
  const double expected = n / 27.0;
  double chi2 = 0.0;
  for (const auto& [k, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 45.64);  // chi-square(26) 99th percentile
}

TEST(DrawResample, BlockIndicesAreDistinct) {
  std::vector<Sample> s{{"A", {1, 2, 3, 4, 5}}};
  const SampleSet samples(s, {0, 0, 0});
  Stream rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto idx = draw_resample(samples, rng);
    ASSERT_NE(idx.j[0], idx.j[1]);
    ASSERT_NE(idx.j[0], idx.j[2]);
    ASSERT_NE(idx.j[1], idx.j[2]);
  }
}

TEST(Enumeration, VisitsEveryAdmissibleVectorOnce) {
  std::vector<Sample> s{{"A", {1, 2, 3, 4}}, {"B", {5, 6}}};
  const SampleSet samples(s, {0, 1, 0});
  std::map<std::vector<std::size_t>, int> seen;
  for_each_index_vector(samples, [&](const ResampleIndexVector& idx) { ++seen[idx.j]; });
  EXPECT_EQ(seen.size(), samples.admissible_count());
  for (const auto& [k, c] : seen) {
    EXPECT_EQ(c, 1);
    EXPECT_NE(k[0], k[2]);
  }
}

TEST(Enumeration, BudgetExceeded) {
  const auto samples = SampleSet::distinct({std::vector<double>(100, 1.0), std::vector<double>(100, 1.0)});
  try {
    for_each_index_vector(samples, [](const ResampleIndexVector&) {}, 1000);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::budget_exceeded);
  }
}

TEST(ExhaustiveTheta, TwoOfThreeAllUp) {
  const auto spec = parse_system(kTwoOfThree, {{"t", 1.0}});
  const auto samples = SampleSet::distinct({{2, 2}, {2, 2}, {0, 0}});
  EXPECT_DOUBLE_EQ(exhaustive_theta(spec, samples), 1.0);
}

TEST(ExhaustiveTheta, MatchesEnumeratedMean) {
  const auto spec = parse_system(kTwoOfThree, {{"t", 1.0}});
  const auto samples = SampleSet::distinct({{0.5, 2, 3}, {0.2, 1.5}, {0.9, 4, 0.1, 2}});
  // Independent oracle: each element up with probability (#values > 1)/n.
  const double p1 = 2.0 / 3, p2 = 1.0 / 2, p3 = 2.0 / 4;
  const double oracle = p1 * p2 + p1 * p3 + p2 * p3 - 2 * p1 * p2 * p3;
  EXPECT_NEAR(exhaustive_theta(spec, samples), oracle, 1e-15);
  EXPECT_NEAR(estimate_theta_enumerated(spec, samples).estimate, oracle, 1e-15);
}

TEST(EstimateTheta, ConvergesToExhaustive) {
  const auto spec = parse_system(kTwoOfThree, {{"t", 1.0}});
  const auto samples = SampleSet::distinct({{0.5, 2, 3}, {0.2, 1.5}, {0.9, 4, 0.1, 2}});
  const auto res = estimate_theta(spec, samples, 200000, 99);
  const double truth = exhaustive_theta(spec, samples);
  EXPECT_NEAR(res.estimate, truth, 4 * std::sqrt(truth * (1 - truth) / 200000));
  EXPECT_EQ(res.realizations, 200000u);
  EXPECT_EQ(res.seed, 99u);
}

TEST(EstimateTheta, DeterministicAcrossThreadCounts) {
  const auto spec = parse_system(kTwoOfThree, {{"t", 1.0}});
  const auto samples = SampleSet::distinct({{0.5, 2, 3}, {0.2, 1.5}, {0.9, 4, 0.1, 2}});
  EstimateOptions one{.par = {1}, .keep_values = true};
  EstimateOptions four{.par = {4}, .keep_values = true};
  const auto a = estimate_theta(spec, samples, 5000, 7, one);
  const auto b = estimate_theta(spec, samples, 5000, 7, four);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(*a.values, *b.values);
}

TEST(EstimateTheta, ArityMismatchRejected) {
  const auto spec = parse_system(kTwoOfThree, {{"t", 1.0}});
  const auto samples = SampleSet::distinct({{1, 2}, {1, 2}});
  EXPECT_THROW(estimate_theta(spec, samples, 10, 1), Error);
}

TEST(Ingestion, CsvRaggedColumns) {
  const auto s = parse_samples_csv("H1,H2\n1,2\n3,\n5,6\n");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].values, (std::vector<double>{1, 3, 5}));
  EXPECT_EQ(s[1].values, (std::vector<double>{2, 6}));
  EXPECT_THROW(parse_samples_csv("H1\nabc\n"), Error);
}

TEST(Ingestion, JsonAndBlocks) {
  auto s = parse_samples_json(R"({"A":[1,2,3],"B":[4,5]})");
  const auto blocks = nlohmann::json::parse(R"({"1":"A","2":"B","3":"A"})");
  const auto set = make_sample_set(s, &blocks);
  EXPECT_EQ(set.arguments(), 3u);
  EXPECT_EQ(set.sample_of(2), 0u);
  const auto bad = nlohmann::json::parse(R"({"1":"A","3":"B"})");
  EXPECT_THROW(make_sample_set(s, &bad), Error);
}

TEST(Ingestion, MissingFile) {
  try {
    load_samples("/nonexistent/file.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::file_not_found);
  }
}
