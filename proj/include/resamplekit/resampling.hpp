#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "resamplekit/budget.hpp"
#include "resamplekit/error.hpp"
#include "resamplekit/parallel.hpp"
#include "resamplekit/random.hpp"
#include "resamplekit/samples.hpp"
#include "resamplekit/stats.hpp"
#include "resamplekit/system.hpp"

namespace resamplekit {

/// Average of per-realization values Theta^{*q}.
struct EstimateResult {
  double estimate = 0.0;
  std::size_t realizations = 0;
  std::optional<std::vector<double>> values;
  std::uint64_t seed = 0;
  /// Sample variance of the per-realization values (divisor r - 1).
  double empirical_variance = 0.0;
};

/// Folds per-realization values in index order, so the result is independent
/// of how they were computed.
inline EstimateResult summarize(std::vector<double> values, std::uint64_t seed, bool keep_values) {
  EstimateResult out;
  out.realizations = values.size();
  out.seed = seed;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.estimate = values.empty() ? 0.0 : sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.estimate) * (v - out.estimate);
    out.empirical_variance = ss / static_cast<double>(values.size() - 1);
  }
  if (keep_values) out.values = std::move(values);
  return out;
}

struct EstimateOptions {
  Parallelism par{};
  bool keep_values = false;
};

/// Theta^{*q} = phi(resample q); realization q draws from Stream(seed, {q}).
inline double realize(const SystemSpec& spec, const SampleSet& samples, std::uint64_t seed, std::size_t q,
                      std::span<double> x) {
  Stream rng(seed, {q});
  const auto idx = draw_resample(samples, rng);
  samples.gather(idx, x);
  return spec.evaluate(x);
}

inline void check_compatible(const SystemSpec& spec, const SampleSet& samples) {
  require(spec.arguments() == samples.arguments(), ErrorCode::arity_mismatch,
          "system has " + std::to_string(spec.arguments()) + " arguments but the layout binds " +
              std::to_string(samples.arguments()));
  require(spec.known_arguments() == 0, ErrorCode::invalid_argument,
          "system has known-distribution arguments; use the partially-known estimators");
}

/// Theta* = (1/r) sum_q phi(X^{*q}).
inline EstimateResult estimate_theta(const SystemSpec& spec, const SampleSet& samples, std::size_t r,
                                     std::uint64_t seed, EstimateOptions opt = {}) {
  require(r >= 1, ErrorCode::invalid_argument, "r must be at least 1");
  check_compatible(spec, samples);
  std::vector<double> values(r);
  parallel_for(r, opt.par, [&](std::size_t q) {
    std::vector<double> x(samples.arguments());
    values[q] = realize(spec, samples, seed, q, x);
  });
  return summarize(std::move(values), seed, opt.keep_values);
}

/// The estimator with sampling replaced by enumeration: one realization per
/// admissible index vector, in lexicographic order.
inline EstimateResult estimate_theta_enumerated(const SystemSpec& spec, const SampleSet& samples,
                                                std::uint64_t budget = enumeration_budget(),
                                                bool keep_values = false) {
  check_compatible(spec, samples);
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(samples.admissible_count(), budget)));
  std::vector<double> x(samples.arguments());
  for_each_index_vector(
      samples,
      [&](const ResampleIndexVector& idx) {
        samples.gather(idx, x);
        values.push_back(spec.evaluate(x));
      },
      budget);
  return summarize(std::move(values), 0, keep_values);
}

/// Exact mean of phi over all admissible resamples, i.e. E[Theta*] given the samples.
inline double exhaustive_theta(const SystemSpec& spec, const SampleSet& samples,
                               std::uint64_t budget = enumeration_budget()) {
  check_compatible(spec, samples);
  double sum = 0.0;
  std::uint64_t count = 0;
  std::vector<double> x(samples.arguments());
  for_each_index_vector(
      samples,
      [&](const ResampleIndexVector& idx) {
        samples.gather(idx, x);
        sum += spec.evaluate(x);
        ++count;
      },
      budget);
  return sum / static_cast<double>(count);
}

}  // namespace resamplekit
