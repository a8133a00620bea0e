#pragma once

// Accumulation-of-damages model: initial failures arrive as a Poisson flow
// with rate λ, each degenerates into a terminal failure after a delay with
// cdf F. X_t counts initial failures still present at t, Y_t terminal
// failures observed by t.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "resamplekit/distributions.hpp"
#include "resamplekit/error.hpp"
#include "resamplekit/parallel.hpp"
#include "resamplekit/quadrature.hpp"
#include "resamplekit/random.hpp"
#include "resamplekit/stats.hpp"

namespace resamplekit {

struct DamageData {
  std::vector<double> a;  // intervals between initial failures, H_A
  std::vector<double> b;  // degeneration times, H_B

  void validate() const {
    require(!a.empty(), ErrorCode::schema, "H_A is empty");
    require(!b.empty(), ErrorCode::schema, "H_B is empty");
    for (double v : a) require(std::isfinite(v) && v >= 0.0, ErrorCode::schema, "H_A values must be finite and >= 0");
    for (double v : b) require(std::isfinite(v) && v >= 0.0, ErrorCode::schema, "H_B values must be finite and >= 0");
    require(a.size() <= b.size(), ErrorCode::infeasible_layout,
            "n_A = " + std::to_string(a.size()) + " exceeds n_B = " + std::to_string(b.size()) +
                "; each realization draws n_A degeneration times without replacement");
  }
};

struct DamageTruth {
  double lambda = 1.0;
  KnownDistribution degeneration = KnownDistribution::exponential(1.0);
  double t = 1.0;

  void validate() const {
    require(std::isfinite(lambda) && lambda > 0.0, ErrorCode::invalid_argument, "lambda must be positive");
    require(std::isfinite(t) && t > 0.0, ErrorCode::invalid_argument, "t must be positive");
  }
};

struct CountEstimates {
  std::size_t r = 0;
  std::uint64_t seed = 0;
  double mean_x = 0.0;  // E*X_t
  double mean_y = 0.0;  // E*Y_t
  double var_x = 0.0;   // empirical variance of X*q
  std::vector<double> p_x;  // P*_{X_t}(i), i = 0..n_A
  std::vector<double> p_y;
  // Pair bookkeeping over consecutive realizations: mean number of positions
  // with the same interval (α_A) and with the same degeneration time.
  double mean_alpha_a = 0.0;
  double mean_shared_b = 0.0;
};

namespace detail {

struct DamageDraw {
  std::size_t x = 0, y = 0;
  std::vector<std::size_t> a_idx, b_idx;
};

inline DamageDraw damage_realization(const DamageData& data, double t, Stream& rng, bool keep_indices) {
  const std::size_t na = data.a.size();
  DamageDraw out;
  const auto perm = random_permutation(rng, na);
  std::vector<std::size_t> bi(na);
  draw_distinct(rng, data.b.size(), na, bi);
  double tau = 0.0;
  for (std::size_t j = 0; j < na; ++j) {
    tau += data.a[perm[j]];
    if (tau > t) break;
    const double end = tau + data.b[bi[j]];
    if (t < end) ++out.x;
    else ++out.y;
  }
  if (keep_indices) {
    out.a_idx = perm;
    out.b_idx = std::move(bi);
  }
  return out;
}

template <typename MakeStream>
CountEstimates damage_counts(const DamageData& data, double t, std::size_t r, MakeStream&& make, Parallelism par) {
  const std::size_t na = data.a.size();
  constexpr std::size_t kDiagnosticPairs = 1000;
  std::vector<DamageDraw> draws(r);
  parallel_for(r, par, [&](std::size_t q) {
    Stream rng = make(q);
    draws[q] = damage_realization(data, t, rng, q <= kDiagnosticPairs);
  });
  CountEstimates out;
  out.r = r;
  out.p_x.assign(na + 1, 0.0);
  out.p_y.assign(na + 1, 0.0);
  MomentAccumulator acc;
  double sy = 0.0;
  for (const auto& d : draws) {
    acc.add(static_cast<double>(d.x));
    sy += static_cast<double>(d.y);
    out.p_x[d.x] += 1.0;
    out.p_y[d.y] += 1.0;
  }
  const double rd = static_cast<double>(r);
  out.mean_x = acc.mean();
  out.var_x = acc.variance();
  out.mean_y = sy / rd;
  for (auto& p : out.p_x) p /= rd;
  for (auto& p : out.p_y) p /= rd;
  const std::size_t pairs = std::min(r, kDiagnosticPairs + 1) - 1;
  for (std::size_t q = 0; q < pairs; ++q) {
    for (std::size_t j = 0; j < na; ++j) {
      out.mean_alpha_a += draws[q].a_idx[j] == draws[q + 1].a_idx[j];
      out.mean_shared_b += draws[q].b_idx[j] == draws[q + 1].b_idx[j];
    }
  }
  if (pairs > 0) {
    out.mean_alpha_a /= static_cast<double>(pairs);
    out.mean_shared_b /= static_cast<double>(pairs);
  }
  return out;
}

}  // namespace detail

/// Resampling estimators of EX_t, EY_t and their distributions: each
/// realization permutes H_A into arrival instants and draws n_A degeneration
/// times without replacement from H_B. Realization q uses substream (seed, q).
inline CountEstimates resample_damage_counts(const DamageData& data, double t, std::size_t r, std::uint64_t seed,
                                             Parallelism par = {}) {
  data.validate();
  require(r >= 1, ErrorCode::invalid_argument, "r must be at least 1");
  require(std::isfinite(t) && t > 0.0, ErrorCode::invalid_argument, "t must be positive");
  auto out = detail::damage_counts(data, t, r, [&](std::size_t q) { return Stream(seed, {q}); }, par);
  out.seed = seed;
  return out;
}

struct PoissonTruth {
  double ex = 0.0, ey = 0.0;
  std::vector<double> p_x, p_y;  // i = 0..max_i
};

/// EX_t = λ∫_0^t (1-F), EY_t = λ∫_0^t F and the Poisson laws of X_t, Y_t.
inline PoissonTruth poisson_truth(const DamageTruth& truth, std::size_t max_i = 10, QuadratureOptions q = {}) {
  truth.validate();
  const auto& F = truth.degeneration;
  PoissonTruth out;
  const double int_f = integrate_split([&](double x) { return F.cdf(x); }, 0.0, truth.t, F.kinks(), q);
  out.ey = truth.lambda * int_f;
  out.ex = truth.lambda * truth.t - out.ey;
  for (std::size_t i = 0; i <= max_i; ++i) {
    out.p_x.push_back(poisson_pmf(out.ex, i));
    out.p_y.push_back(poisson_pmf(out.ey, i));
  }
  return out;
}

struct EstimatorExpectation {
  std::size_t n_a = 0;
  double p1_x = 0.0;  // P{an arrival uniform on (0,t) is still initial at t}
  double p1_y = 0.0;
  // Closed forms that treat the first n_A of more than n_A arrivals as
  // uniform on (0, t).
  double ex_formula = 0.0, ey_formula = 0.0;
  std::vector<double> px_formula, py_formula;  // i = 0..n_A
  // Exact expectations: when at least n_A arrivals occur, τ_{n_A} is Erlang
  // and the earlier arrivals are uniform on (0, τ_{n_A}).
  double ex_exact = 0.0, ey_exact = 0.0;
  std::vector<double> px_exact, py_exact;
};

namespace detail {

inline double erlang_pdf(std::size_t k, double rate, double v) {
  if (v <= 0.0) return 0.0;
  const double kd = static_cast<double>(k);
  return std::exp(kd * std::log(rate) + (kd - 1.0) * std::log(v) - rate * v - std::lgamma(kd));
}

template <typename Survive>
void damage_expectations(const DamageTruth& truth, std::size_t na, Survive&& s, const std::vector<double>& cuts,
                         QuadratureOptions q, double& p1, double& e_formula, std::vector<double>& p_formula,
                         double& e_exact, std::vector<double>& p_exact) {
  const double t = truth.t, lt = truth.lambda * t;
  p1 = integrate_split(s, 0.0, t, cuts, q) / t;
  std::vector<double> d(na + 1);
  double head = 0.0;
  for (std::size_t j = 0; j <= na; ++j) {
    d[j] = poisson_pmf(lt, j);
    head += d[j];
  }
  const double tail = std::max(0.0, 1.0 - head);  // Σ_{j > n_A} d_t(j)
  e_formula = 0.0;
  for (std::size_t j = 1; j <= na; ++j) e_formula += p1 * static_cast<double>(j) * d[j];
  e_formula += p1 * static_cast<double>(na) * tail;
  p_formula.assign(na + 1, 0.0);
  for (std::size_t i = 0; i <= na; ++i) {
    for (std::size_t j = i; j <= na; ++j) p_formula[i] += d[j] * binomial_pmf(j, i, p1);
    p_formula[i] += binomial_pmf(na, i, p1) * tail;
  }

  // Exact: arrivals k = 1..n_A with τ_k ~ Erlang(k, λ).
  e_exact = 0.0;
  for (std::size_t k = 1; k <= na; ++k)
    e_exact += integrate_split([&](double u) { return erlang_pdf(k, truth.lambda, u) * s(u); }, 0.0, t, cuts, q);
  p_exact.assign(na + 1, 0.0);
  for (std::size_t j = 0; j < na; ++j)
    for (std::size_t i = 0; i <= j; ++i) p_exact[i] += d[j] * binomial_pmf(j, i, p1);
  // The survival function is smooth between cuts, so one Kronrod pass per
  // piece suffices for the inner integral.
  QuadratureOptions inner = q;
  inner.max_depth = 0;
  auto mean_survival = [&](double v) { return integrate_split(s, 0.0, v, cuts, inner) / v; };
  for (std::size_t i = 0; i <= na; ++i) {
    p_exact[i] += integrate_split(
        [&](double v) {
          const double f = erlang_pdf(na, truth.lambda, v);
          if (f == 0.0) return 0.0;
          const double pv = mean_survival(v), sv = s(v);
          double mass = (1.0 - sv) * binomial_pmf(na - 1, i, pv);
          if (i > 0) mass += sv * binomial_pmf(na - 1, i - 1, pv);
          return f * mass;
        },
        0.0, t, cuts, q);
  }
}

}  // namespace detail

/// Expectations of the resampling estimators when H_A holds n_A i.i.d.
/// exponential intervals and H_B i.i.d. degeneration times.
inline EstimatorExpectation estimator_expectation(const DamageTruth& truth, std::size_t n_a,
                                                  QuadratureOptions q = {1e-10, 1e-9, 15}) {
  truth.validate();
  require(n_a >= 1, ErrorCode::invalid_argument, "n_A must be at least 1");
  const auto& F = truth.degeneration;
  const double t = truth.t;
  std::vector<double> cuts;
  for (double k : F.kinks()) cuts.push_back(t - k);
  EstimatorExpectation out;
  out.n_a = n_a;
  // An arrival at u is still initial at t when its delay exceeds t - u.
  detail::damage_expectations(
      truth, n_a, [&](double u) { return 1.0 - F.cdf(t - u); }, cuts, q, out.p1_x, out.ex_formula, out.px_formula,
      out.ex_exact, out.px_exact);
  detail::damage_expectations(
      truth, n_a, [&](double u) { return F.cdf(t - u); }, cuts, q, out.p1_y, out.ey_formula, out.py_formula,
      out.ey_exact, out.py_exact);
  return out;
}

struct PluginEstimates {
  double lambda = 0.0;
  double ex = 0.0, ey = 0.0;
  std::vector<double> p_x, p_y;
};

/// Plug-in: λ̂ = n_A / ΣA, F̂ the empirical cdf of H_B, Poisson laws with the
/// plugged-in means.
inline PluginEstimates plugin_estimates(const DamageData& data, double t, std::size_t max_i) {
  data.validate();
  double sum_a = 0.0;
  for (double v : data.a) sum_a += v;
  require(sum_a > 0.0, ErrorCode::invalid_argument, "H_A sums to zero; the plug-in rate is undefined");
  PluginEstimates out;
  out.lambda = static_cast<double>(data.a.size()) / sum_a;
  // ∫_0^t F̂ = mean of max(0, t - B).
  double int_f = 0.0;
  for (double v : data.b) int_f += std::max(0.0, t - v);
  int_f /= static_cast<double>(data.b.size());
  out.ey = out.lambda * int_f;
  out.ex = out.lambda * t - out.ey;
  for (std::size_t i = 0; i <= max_i; ++i) {
    out.p_x.push_back(poisson_pmf(out.ex, i));
    out.p_y.push_back(poisson_pmf(out.ey, i));
  }
  return out;
}

/// Resampling probabilities for i <= n_A, plug-in ones above, renormalized.
inline std::vector<double> hybrid_distribution(const std::vector<double>& resampling, const std::vector<double>& plugin,
                                               std::size_t n_a) {
  std::vector<double> out(std::max(resampling.size(), plugin.size()), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i <= n_a) out[i] = i < resampling.size() ? resampling[i] : 0.0;
    else out[i] = i < plugin.size() ? plugin[i] : 0.0;
  }
  double total = 0.0;
  for (double v : out) total += v;
  if (total > 0.0)
    for (auto& v : out) v /= total;
  return out;
}

struct EstimatorStats {
  double mean = 0.0, mean_se = 0.0;
  double variance = 0.0, variance_se = 0.0;
  double mse = 0.0, mse_se = 0.0;
};

struct DamageVariance {
  std::size_t n_a = 0, n_b = 0, r = 0, replications = 0;
  double truth = 0.0;  // EX_t
  EstimatorStats resampling;
  EstimatorStats plugin;
};

/// Outer Monte Carlo over sample redraws: H_A ~ Exp(λ)^{n_A}, H_B ~ F^{n_B};
/// E*X_t from r realizations keyed (seed, replication, q); the plug-in ÊX_t on
/// the same data.
inline DamageVariance damage_variance_mc(const DamageTruth& truth, std::size_t n_a, std::size_t n_b, std::size_t r,
                                         std::size_t replications, std::uint64_t seed, Parallelism par = {}) {
  truth.validate();
  require(n_a >= 1 && n_a <= n_b, ErrorCode::infeasible_layout, "need 1 <= n_A <= n_B");
  require(r >= 1 && replications >= 2, ErrorCode::invalid_argument, "need r >= 1 and at least 2 replications");
  const double ex = poisson_truth(truth, 0).ex;
  const auto arrivals = KnownDistribution::exponential(truth.lambda);
  std::vector<double> est(replications), plug(replications);
  parallel_for(replications, par, [&](std::size_t rep) {
    Stream rng(seed, {rep, 0xDA7A});
    DamageData data;
    data.a.resize(n_a);
    data.b.resize(n_b);
    for (auto& v : data.a) v = arrivals.sample(rng);
    for (auto& v : data.b) v = truth.degeneration.sample(rng);
    est[rep] = detail::damage_counts(data, truth.t, r, [&](std::size_t q) { return Stream(seed, {rep, q}); }, {})
                   .mean_x;
    plug[rep] = plugin_estimates(data, truth.t, 0).ex;
  });
  auto stats = [&](const std::vector<double>& v) {
    MomentAccumulator m, sq;
    for (double x : v) {
      m.add(x);
      sq.add((x - ex) * (x - ex));
    }
    return EstimatorStats{m.mean(), m.mean_se(), m.variance(), m.variance_se(), sq.mean(), sq.mean_se()};
  };
  return {n_a, n_b, r, replications, ex, stats(est), stats(plug)};
}

inline nlohmann::json to_json(const CountEstimates& c) {
  return {{"r", c.r},
          {"seed", c.seed},
          {"E*X", c.mean_x},
          {"E*Y", c.mean_y},
          {"var_X", c.var_x},
          {"P*X", c.p_x},
          {"P*Y", c.p_y},
          {"diagnostics", {{"mean_alpha_A", c.mean_alpha_a}, {"mean_shared_B", c.mean_shared_b}}}};
}

}  // namespace resamplekit
