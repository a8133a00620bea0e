#pragma once

// Estimation when some arguments z have known distributions: either through
// a caller-supplied g(x) = E[φ(x, Z)], or by inner Monte Carlo over Z, or by
// the vector-sample wave in which each element carries N draws.

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "resamplekit/distributions.hpp"
#include "resamplekit/error.hpp"
#include "resamplekit/hierarchical.hpp"
#include "resamplekit/parallel.hpp"
#include "resamplekit/random.hpp"
#include "resamplekit/resampling.hpp"
#include "resamplekit/samples.hpp"
#include "resamplekit/system.hpp"

namespace resamplekit {

/// g(x) = E[φ(x, Z)]; empty when no closed form is available.
struct ConditionalExpectation {
  std::function<double(std::span<const double>)> g;
  std::size_t arity = 0;
  std::string name;

  bool known() const { return static_cast<bool>(g); }
};

/// System of the worked partially known example: three sampled arguments,
/// three known ones.
inline constexpr const char* kPartialKnownExample = "ind(min(max(x1,z1), min(x2,z2), sum(x3,z3)) < t)";

/// Closed-form g_t for kPartialKnownExample:
///   1                               if x2 < t
///   1 - P{max(x1,Z1) >= t} Ḡ2(t) Ḡ3(t - x3)   otherwise,
/// where P{max(x1,Z1) >= t} is 1 for x1 >= t and Ḡ1(t) below.
inline ConditionalExpectation example_g(double t, KnownDistribution z1, KnownDistribution z2, KnownDistribution z3) {
  ConditionalExpectation out;
  out.arity = 3;
  out.name = "example_g_t";
  out.g = [=](std::span<const double> x) {
    if (x[1] < t) return 1.0;
    const double a = x[0] >= t ? 1.0 : z1.survival(t);
    return 1.0 - a * z2.survival(t) * z3.survival(t - x[2]);
  };
  return out;
}

/// Θ*q = g(X*q), averaged over r realizations.
inline EstimateResult estimate_known_g(const ConditionalExpectation& g, const SampleSet& samples, std::size_t r,
                                       std::uint64_t seed, const EstimateOptions& opt = {}) {
  require(g.known(), ErrorCode::invalid_argument, "no closed-form conditional expectation supplied");
  require(r >= 1, ErrorCode::invalid_argument, "r must be at least 1");
  require(g.arity == samples.arguments(), ErrorCode::arity_mismatch,
          "g takes " + std::to_string(g.arity) + " arguments, samples provide " +
              std::to_string(samples.arguments()));
  std::vector<double> values(r);
  parallel_for(r, opt.par, [&](std::size_t q) {
    Stream rng(seed, {q});
    std::vector<double> x(samples.arguments());
    samples.gather(draw_resample(samples, rng), x);
    const double v = g.g(x);
    require(std::isfinite(v), ErrorCode::non_finite, "g returned a non-finite value");
    values[q] = v;
  });
  return summarize(std::move(values), seed, opt.keep_values);
}

/// Θ*q = (1/N) Σ_i φ(X*q, Z*q,i) with N fresh draws of Z per realization.
inline EstimateResult estimate_inner_mc(const SystemSpec& spec, const SampleSet& samples,
                                        const std::vector<KnownDistribution>& z, std::size_t N, std::size_t r,
                                        std::uint64_t seed, const EstimateOptions& opt = {}) {
  require(N >= 1, ErrorCode::invalid_argument, "N must be at least 1");
  require(r >= 1, ErrorCode::invalid_argument, "r must be at least 1");
  require(spec.arguments() == samples.arguments(), ErrorCode::arity_mismatch,
          "system has " + std::to_string(spec.arguments()) + " sampled arguments but the layout binds " +
              std::to_string(samples.arguments()));
  require(z.size() == spec.known_arguments(), ErrorCode::arity_mismatch,
          "system reads " + std::to_string(spec.known_arguments()) + " known arguments, " +
              std::to_string(z.size()) + " distributions given");
  std::vector<double> values(r);
  parallel_for(r, opt.par, [&](std::size_t q) {
    Stream rng(seed, {q});
    std::vector<double> x(samples.arguments()), zv(z.size());
    samples.gather(draw_resample(samples, rng), x);
    double sum = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = 0; j < z.size(); ++j) zv[j] = z[j].sample(rng);
      sum += spec.evaluate(x, zv);
    }
    values[q] = sum / static_cast<double>(N);
  });
  return summarize(std::move(values), seed, opt.keep_values);
}

/// Wave in which every stage element is an N-vector; z leaves are drawn N
/// times for each element of the stage that reads them. Θ* averages the root
/// sample over elements and components.
inline EstimateResult wave_estimate_vector_samples(const SystemSpec& spec, const SampleSet& samples,
                                                   const std::vector<KnownDistribution>& z, std::size_t N,
                                                   const NodeSizes& sizes, std::uint64_t seed,
                                                   Parallelism par = {}, bool keep_values = false) {
  WaveOptions opt;
  opt.components = N;
  opt.known = z;
  opt.par = par;
  return wave_estimate(spec, samples, sizes, seed, opt, keep_values);
}

}  // namespace resamplekit
