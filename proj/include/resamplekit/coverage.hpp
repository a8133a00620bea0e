#pragma once

// Upper resampling confidence intervals (a, 1) for Θ = E φ(X) when φ depends
// only on the ordering of its arguments, and the true coverage probability R
// of such intervals.
//
// Each argument i has its own sample H_i; a realization picks one element of
// every sample. Given the pooled ordering W, the number of favorable
// resamples is Σ_{π ∈ Π1} h_π(W), with h_π the count of ways π occurs as a
// pattern in W.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "resamplekit/distributions.hpp"
#include "resamplekit/error.hpp"
#include "resamplekit/parallel.hpp"
#include "resamplekit/random.hpp"
#include "resamplekit/samples.hpp"
#include "resamplekit/stats.hpp"
#include "resamplekit/system.hpp"

namespace resamplekit {

/// W_j = i (1-based) when the j-th smallest pooled value comes from H_i.
using WVector = std::vector<std::size_t>;
/// Subprotocols C(1..m-1); C(l) has n_{l+1}+1 entries.
using Protocol = std::vector<std::vector<std::size_t>>;
using Permutation = std::vector<std::size_t>;  // argument indices (0-based), increasing value

/// A 0/1 system function of m sampled arguments built from min, max, cmp and
/// kofn over comparisons, so that its value depends only on the ordering.
class OrderFunctional {
 public:
  explicit OrderFunctional(SystemSpec spec) : spec_(std::move(spec)) {
    require(spec_.known_arguments() == 0, ErrorCode::invalid_argument,
            "order functionals take sampled arguments only");
    require(kind(spec_.root()) == Kind::boolean, ErrorCode::invalid_argument,
            "order functional must yield 0/1 (root a comparison or kofn over comparisons)");
    Permutation pi(arity());
    std::iota(pi.begin(), pi.end(), 0);
    do {
      if (at_permutation(pi) == 1.0) favorable_.push_back(pi);
    } while (std::next_permutation(pi.begin(), pi.end()));
  }

  const SystemSpec& spec() const { return spec_; }
  std::size_t arity() const { return spec_.arguments(); }

  /// φ̃(π): argument π[j] takes the j-th smallest value.
  double at_permutation(const Permutation& pi) const {
    std::vector<double> x(pi.size());
    for (std::size_t j = 0; j < pi.size(); ++j) x[pi[j]] = static_cast<double>(j);
    return spec_.evaluate(x);
  }

  /// Π1.
  const std::vector<Permutation>& favorable() const { return favorable_; }

 private:
  enum class Kind { value, boolean };

  Kind kind(NodeId id) const {
    const Node& n = spec_.node(id);
    auto all = [&](Kind k) {
      return std::all_of(n.children.begin(), n.children.end(), [&](NodeId c) { return kind(c) == k; });
    };
    switch (n.op) {
      case Op::input: return Kind::value;
      case Op::min:
      case Op::max:
        if (all(Kind::value)) return Kind::value;
        if (all(Kind::boolean)) return Kind::boolean;
        break;
      case Op::compare:
        if (all(Kind::value)) return Kind::boolean;
        break;
      case Op::k_of_n:
        if (all(Kind::boolean)) return Kind::boolean;
        break;
      default: break;
    }
    fail(ErrorCode::invalid_argument,
         "'" + spec_.to_string(id) + "' depends on more than the ordering of the arguments");
  }

  SystemSpec spec_;
  std::vector<Permutation> favorable_;
};

/// Pooled ordering of the samples. Cross-sample ties are rejected unless
/// break_ties is set, in which case the lower sample index sorts first.
inline WVector w_vector(const std::vector<std::vector<double>>& samples, bool break_ties = false) {
  std::vector<std::pair<double, std::size_t>> pooled;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (double v : samples[i]) pooled.emplace_back(v, i + 1);
  std::sort(pooled.begin(), pooled.end());
  WVector w;
  for (std::size_t j = 0; j < pooled.size(); ++j) {
    if (!break_ties && j > 0 && pooled[j].first == pooled[j - 1].first && pooled[j].second != pooled[j - 1].second)
      fail(ErrorCode::tie, "value " + std::to_string(pooled[j].first) + " occurs in samples " +
                               std::to_string(pooled[j - 1].second) + " and " + std::to_string(pooled[j].second));
    w.push_back(pooled[j].second);
  }
  return w;
}

inline WVector w_vector(const SampleSet& samples, bool break_ties = false) {
  require(samples.all_distinct(), ErrorCode::invalid_argument, "ordering needs one sample per argument");
  std::vector<std::vector<double>> v;
  for (std::size_t a = 0; a < samples.arguments(); ++a) v.push_back(samples.sample(samples.sample_of(a)).values);
  return w_vector(v, break_ties);
}

inline std::vector<std::size_t> sizes_of(const WVector& w) {
  std::vector<std::size_t> n;
  for (std::size_t label : w) {
    require(label >= 1, ErrorCode::invalid_argument, "W labels are 1-based");
    if (n.size() < label) n.resize(label, 0);
    ++n[label - 1];
  }
  for (std::size_t c : n) require(c > 0, ErrorCode::invalid_argument, "every sample must appear in W");
  return n;
}

inline Protocol protocol_from_w(const WVector& w) {
  const auto n = sizes_of(w);
  Protocol p;
  for (std::size_t l = 1; l < n.size(); ++l) {
    std::vector<std::size_t> c(n[l] + 1, 0);
    std::size_t seen = 0;
    for (std::size_t label : w) {
      if (label == l + 1) ++seen;
      else if (label <= l) ++c[seen];
    }
    p.push_back(std::move(c));
  }
  return p;
}

inline WVector w_from_protocol(const Protocol& p, const std::vector<std::size_t>& sizes) {
  require(!sizes.empty() && p.size() + 1 == sizes.size(), ErrorCode::invalid_argument,
          "protocol needs m-1 subprotocols for m samples");
  WVector w(sizes[0], 1);
  std::size_t total = sizes[0];
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    const auto& c = p[l - 1];
    require(c.size() == sizes[l] + 1, ErrorCode::invalid_argument,
            "subprotocol " + std::to_string(l) + " must have n_" + std::to_string(l + 1) + "+1 entries");
    require(std::accumulate(c.begin(), c.end(), std::size_t{0}) == total, ErrorCode::invalid_argument,
            "subprotocol " + std::to_string(l) + " must sum to n_1+...+n_" + std::to_string(l));
    WVector next;
    std::size_t pos = 0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (j > 0) next.push_back(l + 1);
      next.insert(next.end(), w.begin() + static_cast<std::ptrdiff_t>(pos),
                  w.begin() + static_cast<std::ptrdiff_t>(pos + c[j]));
      pos += c[j];
    }
    w = std::move(next);
    total += sizes[l];
  }
  return w;
}

/// h_π(W): number of one-element-per-sample resamples ordered as π.
inline std::uint64_t pattern_count(const WVector& w, const Permutation& pi) {
  std::vector<std::uint64_t> dp(pi.size() + 1, 0);
  dp[0] = 1;
  for (std::size_t label : w)
    for (std::size_t s = pi.size(); s-- > 0;)
      if (pi[s] + 1 == label) dp[s + 1] += dp[s];
  return dp[pi.size()];
}

/// q_W = Σ_{π ∈ Π1} h_π(W) / (n_1 ... n_m).
inline double q_given_ordering(const OrderFunctional& f, const WVector& w) {
  const auto n = sizes_of(w);
  require(n.size() == f.arity(), ErrorCode::arity_mismatch,
          "W covers " + std::to_string(n.size()) + " samples, functional has " + std::to_string(f.arity()) +
              " arguments");
  std::uint64_t total = 1;
  for (std::size_t c : n) {
    require(total <= UINT64_MAX / c, ErrorCode::budget_exceeded, "resample count overflows");
    total *= c;
  }
  std::uint64_t hits = 0;
  for (const auto& pi : f.favorable()) hits += pattern_count(w, pi);
  return static_cast<double>(hits) / static_cast<double>(total);
}

/// ρ = P{Bin(r, q) < Θr}: summation over ξ ≤ ⌈Θr⌉ - 1.
inline double rho(double q, double theta, std::size_t r) {
  require(q >= 0.0 && q <= 1.0 && theta >= 0.0 && theta <= 1.0, ErrorCode::invalid_argument,
          "q and Θ must lie in [0,1]");
  require(r >= 1, ErrorCode::invalid_argument, "r must be at least 1");
  const auto upper = static_cast<std::int64_t>(std::ceil(theta * static_cast<double>(r) - 1e-9)) - 1;
  return binomial_range(r, q, 0, upper);
}

/// ⌊αk⌋ with a small tolerance so that e.g. 0.1·10 counts as 1.
inline std::size_t floor_alpha_k(double alpha, std::size_t k) {
  require(alpha > 0.0 && alpha < 1.0, ErrorCode::invalid_argument, "alpha must lie in (0,1)");
  require(k >= 1, ErrorCode::invalid_argument, "k must be at least 1");
  const auto l = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(k) + 1e-9));
  require(l >= 1, ErrorCode::invalid_argument,
          "floor(alpha*k) = 0: the interval needs at least 1/alpha experiments");
  return l;
}

/// R_C = P{Bin(k, ρ) ≥ ⌊αk⌋}.
inline double coverage_conditional(double rho_c, std::size_t k, double alpha) {
  const auto l = floor_alpha_k(alpha, k);
  return binomial_range(k, rho_c, static_cast<std::int64_t>(l), static_cast<std::int64_t>(k));
}

struct GridOptions {
  std::size_t cells = 4000;
  double tail = 1e-12;
};

/// P{W = w} for independent samples H_i ~ F_i. Exponential generators use
/// the memoryless race (exact); other continuous laws a grid over the pooled
/// support, with ties inside a cell ordered uniformly.
inline double ordering_probability(const std::vector<KnownDistribution>& gens, const WVector& w,
                                   GridOptions grid = {}) {
  auto n = sizes_of(w);
  require(n.size() == gens.size(), ErrorCode::arity_mismatch, "one generator per sample required");
  for (const auto& g : gens) require(g.continuous(), ErrorCode::invalid_argument, "generators must be continuous");
  const bool race = std::all_of(gens.begin(), gens.end(),
                                [](const auto& g) { return std::holds_alternative<Exponential>(g.family()); });
  if (race) {
    std::vector<double> rate;
    for (const auto& g : gens) rate.push_back(std::get<Exponential>(g.family()).rate);
    double p = 1.0;
    for (std::size_t label : w) {
      double total = 0.0;
      for (std::size_t i = 0; i < n.size(); ++i) total += static_cast<double>(n[i]) * rate[i];
      p *= static_cast<double>(n[label - 1]) * rate[label - 1] / total;
      --n[label - 1];
    }
    return p;
  }
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& g : gens) {
    lo = std::min(lo, g.quantile(grid.tail));
    hi = std::max(hi, g.quantile(1.0 - grid.tail));
  }
  const std::size_t len = w.size();
  // dp[j]: probability that the j smallest positions are placed, in order.
  std::vector<double> dp(len + 1, 0.0), next(len + 1);
  dp[0] = 1.0;
  std::vector<double> prev_cdf(gens.size()), mass(gens.size());
  for (std::size_t i = 0; i < gens.size(); ++i) prev_cdf[i] = gens[i].cdf(lo);
  for (std::size_t c = 1; c <= grid.cells; ++c) {
    const double b = lo + (hi - lo) * static_cast<double>(c) / static_cast<double>(grid.cells);
    for (std::size_t i = 0; i < gens.size(); ++i) {
      const double f = gens[i].cdf(b);
      mass[i] = f - prev_cdf[i];
      prev_cdf[i] = f;
    }
    next = dp;
    for (std::size_t j = 0; j < len; ++j) {
      if (dp[j] == 0.0) continue;
      double run = dp[j];
      for (std::size_t s = 1; j + s <= len; ++s) {
        run *= mass[w[j + s - 1] - 1] / static_cast<double>(s);
        if (run == 0.0) break;
        next[j + s] += run;
      }
    }
    dp.swap(next);
  }
  double multiplicity = 0.0;  // log ∏ n_i!
  for (std::size_t c : n) multiplicity += std::lgamma(static_cast<double>(c) + 1.0);
  return dp[len] * std::exp(multiplicity);
}

/// Θ = P{π ∈ Π1} under independent single draws from the generators.
inline double order_theta(const OrderFunctional& f, const std::vector<KnownDistribution>& gens,
                          GridOptions grid = {}) {
  double theta = 0.0;
  for (const auto& pi : f.favorable()) {
    WVector w;
    for (std::size_t a : pi) w.push_back(a + 1);
    theta += ordering_probability(gens, w, grid);
  }
  return theta;
}

enum class CoverageMode { exact, mc };

struct CoverageRow {
  WVector w;
  double probability = 0.0;
  double q = 0.0;
  double rho = 0.0;
  double coverage = 0.0;
};

struct CoverageReport {
  double gamma = 0.0, alpha = 0.0, theta = 0.0;
  std::size_t k = 0, r = 0, order_index = 0;  // order_index = ⌊αk⌋
  CoverageMode mode = CoverageMode::mc;
  double coverage = 0.0;     // R
  double coverage_se = 0.0;  // 0 in exact mode
  double probability_total = 1.0;
  std::size_t replications = 0;
  std::uint64_t seed = 0;
  std::vector<CoverageRow> rows;  // exact mode only
};

struct CoverageOptions {
  CoverageMode mode = CoverageMode::mc;
  std::size_t replications = 10'000;
  std::uint64_t seed = 0;
  std::uint64_t budget = 100'000'000;  // W vectors in exact mode
  std::uint64_t row_limit = 10'000;    // per-ordering rows are kept up to this many W vectors
  Parallelism par{};
  GridOptions grid{};
};

inline double log_ordering_count(const std::vector<std::size_t>& sizes) {
  double out = std::lgamma(static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0})) + 1);
  for (std::size_t c : sizes) out -= std::lgamma(static_cast<double>(c) + 1);
  return out;
}

namespace detail {

// Depth-first walk over W vectors that carries the race probability of the
// prefix and the pattern-count DP of every favorable permutation.
struct OrderingWalk {
  const OrderFunctional& f;
  const std::vector<KnownDistribution>& gens;
  const GridOptions& grid;
  std::vector<double> rate;  // empty unless every generator is exponential
  std::size_t len = 0;
  bool keep_rows = false;
  std::vector<double> mass;  // P{W} summed by number of favorable resamples
  std::vector<std::pair<WVector, double>> rows;

  void walk(std::vector<std::size_t>& left, WVector& prefix, double p, std::vector<std::uint64_t> dp) {
    const std::size_t m = f.arity();
    if (prefix.size() == len) {
      std::uint64_t hits = 0;
      for (std::size_t t = 0; t < f.favorable().size(); ++t) hits += dp[t * (m + 1) + m];
      if (rate.empty()) p = ordering_probability(gens, prefix, grid);
      mass[hits] += p;
      if (keep_rows) rows.emplace_back(prefix, p);
      return;
    }
    double total = 0.0;
    if (!rate.empty())
      for (std::size_t i = 0; i < m; ++i) total += static_cast<double>(left[i]) * rate[i];
    for (std::size_t i = 0; i < m; ++i) {
      if (left[i] == 0) continue;
      auto next = dp;
      for (std::size_t t = 0; t < f.favorable().size(); ++t) {
        const auto& pi = f.favorable()[t];
        for (std::size_t s = m; s-- > 0;)
          if (pi[s] == i) next[t * (m + 1) + s + 1] += next[t * (m + 1) + s];
      }
      const double step = rate.empty() ? 1.0 : static_cast<double>(left[i]) * rate[i] / total;
      --left[i];
      prefix.push_back(i + 1);
      walk(left, prefix, p * step, std::move(next));
      prefix.pop_back();
      ++left[i];
    }
  }
};

}  // namespace detail

/// Distribution of the favorable-resample count Σ_{π∈Π1} h_π(W) over all
/// orderings W, plus the per-ordering probabilities when the space is small.
struct OrderingLaw {
  std::vector<std::size_t> sizes;
  std::uint64_t resamples = 1;  // n_1 ... n_m
  std::vector<double> mass;     // indexed by favorable count
  double total = 0.0;           // Σ_W P_W
  std::vector<std::pair<WVector, double>> rows;
};

inline OrderingLaw ordering_law(const OrderFunctional& f, const std::vector<KnownDistribution>& gens,
                                const std::vector<std::size_t>& sizes, const CoverageOptions& opt = {}) {
  const std::size_t m = f.arity();
  require(gens.size() == m && sizes.size() == m, ErrorCode::arity_mismatch,
          "need one generator and one sample size per argument");
  for (const auto& g : gens) require(g.continuous(), ErrorCode::invalid_argument, "generators must be continuous");
  OrderingLaw law;
  law.sizes = sizes;
  for (std::size_t c : sizes) {
    require(c >= 1, ErrorCode::invalid_argument, "sample sizes must be positive");
    require(law.resamples <= 100'000'000 / c, ErrorCode::budget_exceeded, "too many resample index vectors");
    law.resamples *= c;
  }
  const double log_count = log_ordering_count(sizes);
  require(log_count <= std::log(static_cast<double>(opt.budget)) + 1e-9, ErrorCode::budget_exceeded,
          "ordering space has about " + std::to_string(std::llround(std::exp(log_count))) +
              " W vectors, above the budget of " + std::to_string(opt.budget));
  const bool keep_rows = log_count <= std::log(static_cast<double>(opt.row_limit)) + 1e-9;
  std::vector<double> rate;
  if (std::all_of(gens.begin(), gens.end(),
                  [](const auto& g) { return std::holds_alternative<Exponential>(g.family()); }))
    for (const auto& g : gens) rate.push_back(std::get<Exponential>(g.family()).rate);
  const std::size_t len = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  double total_rate = 0.0;
  for (std::size_t i = 0; i < rate.size(); ++i) total_rate += static_cast<double>(sizes[i]) * rate[i];
  // One task per first label; merged in label order.
  std::vector<detail::OrderingWalk> walks;
  for (std::size_t i = 0; i < m; ++i)
    walks.push_back({f, gens, opt.grid, rate, len, keep_rows, std::vector<double>(law.resamples + 1, 0.0), {}});
  parallel_for(m, opt.par, [&](std::size_t i) {
    auto left = sizes;
    --left[i];
    WVector prefix{i + 1};
    std::vector<std::uint64_t> dp(f.favorable().size() * (m + 1), 0);
    for (std::size_t t = 0; t < f.favorable().size(); ++t) {
      dp[t * (m + 1)] = 1;
      if (f.favorable()[t][0] == i) dp[t * (m + 1) + 1] = 1;
    }
    const double p = rate.empty() ? 1.0 : static_cast<double>(sizes[i]) * rate[i] / total_rate;
    walks[i].walk(left, prefix, p, std::move(dp));
  });
  law.mass.assign(law.resamples + 1, 0.0);
  for (auto& walk : walks) {
    for (std::size_t h = 0; h <= law.resamples; ++h) law.mass[h] += walk.mass[h];
    for (auto& row : walk.rows) law.rows.push_back(std::move(row));
  }
  for (double v : law.mass) law.total += v;
  return law;
}

/// Exact R = Σ_W P_W R_W from a precomputed ordering law.
inline CoverageReport coverage_from_law(const OrderingLaw& law, const OrderFunctional& f, double theta, double gamma,
                                        std::size_t k, std::size_t r) {
  require(gamma > 0.0 && gamma < 1.0, ErrorCode::invalid_argument, "gamma must lie in (0,1)");
  CoverageReport rep;
  rep.gamma = gamma;
  rep.alpha = 1.0 - gamma;
  rep.theta = theta;
  rep.k = k;
  rep.r = r;
  rep.order_index = floor_alpha_k(rep.alpha, k);
  rep.mode = CoverageMode::exact;
  rep.probability_total = law.total;
  for (std::size_t h = 0; h <= law.resamples; ++h) {
    if (law.mass[h] == 0.0) continue;
    const double q = static_cast<double>(h) / static_cast<double>(law.resamples);
    rep.coverage += law.mass[h] * coverage_conditional(rho(q, theta, r), k, rep.alpha);
  }
  for (const auto& [w, p] : law.rows) {
    CoverageRow row{w, p, q_given_ordering(f, w), 0.0, 0.0};
    row.rho = rho(row.q, theta, r);
    row.coverage = coverage_conditional(row.rho, k, rep.alpha);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

/// R = P{Θ*_(⌊αk⌋) < Θ}: exact mode sums P_W R_W over every ordering; mc mode
/// draws sample sets (substream (seed, replication)) and averages R_W.
inline CoverageReport coverage_R(const OrderFunctional& f, const std::vector<KnownDistribution>& gens,
                                 const std::vector<std::size_t>& sizes, double theta, double gamma, std::size_t k,
                                 std::size_t r, const CoverageOptions& opt = {}) {
  const std::size_t m = f.arity();
  require(gens.size() == m && sizes.size() == m, ErrorCode::arity_mismatch,
          "need one generator and one sample size per argument");
  for (std::size_t c : sizes) require(c >= 1, ErrorCode::invalid_argument, "sample sizes must be positive");
  for (const auto& g : gens) require(g.continuous(), ErrorCode::invalid_argument, "generators must be continuous");
  require(gamma > 0.0 && gamma < 1.0, ErrorCode::invalid_argument, "gamma must lie in (0,1)");
  CoverageReport rep;
  rep.gamma = gamma;
  rep.alpha = 1.0 - gamma;
  rep.theta = theta;
  rep.k = k;
  rep.r = r;
  rep.order_index = floor_alpha_k(rep.alpha, k);
  rep.mode = opt.mode;
  rep.seed = opt.seed;
  std::uint64_t resamples = 1;
  for (std::size_t c : sizes) {
    require(resamples <= 100'000'000 / c, ErrorCode::budget_exceeded, "too many resample index vectors");
    resamples *= c;
  }
  // R_W depends on W only through the favorable count.
  std::vector<double> by_hits(resamples + 1, -1.0);
  auto coverage_of = [&](std::uint64_t hits) {
    double& slot = by_hits[hits];
    if (slot < 0.0)
      slot = coverage_conditional(rho(static_cast<double>(hits) / static_cast<double>(resamples), theta, r), k,
                                  rep.alpha);
    return slot;
  };
  if (opt.mode == CoverageMode::exact) return coverage_from_law(ordering_law(f, gens, sizes, opt), f, theta, gamma, k, r);
  require(opt.replications >= 2, ErrorCode::invalid_argument, "mc mode needs at least 2 replications");
  rep.replications = opt.replications;
  for (std::uint64_t h = 0; h <= resamples; ++h) coverage_of(h);
  std::vector<double> rc(opt.replications);
  parallel_for(opt.replications, opt.par, [&](std::size_t i) {
    Stream rng(opt.seed, {i});
    std::vector<std::vector<double>> samples(m);
    for (std::size_t s = 0; s < m; ++s) {
      samples[s].resize(sizes[s]);
      for (auto& v : samples[s]) v = gens[s].sample(rng);
    }
    const double q = q_given_ordering(f, w_vector(samples, true));
    rc[i] = by_hits[static_cast<std::uint64_t>(std::llround(q * static_cast<double>(resamples)))];
  });
  MomentAccumulator acc;
  for (double v : rc) acc.add(v);
  rep.coverage = acc.mean();
  rep.coverage_se = acc.mean_se();
  return rep;
}

struct ResamplingInterval {
  double lower = 0.0;  // a = Θ*_(⌊αk⌋); the interval is (a, 1)
  std::size_t order_index = 0;
  std::vector<double> estimates;  // sorted Θ*_(1..k)
};

/// k independent resampling estimates with r realizations each; experiment e
/// uses substream (seed, e).
inline ResamplingInterval resampling_interval(const OrderFunctional& f,
                                              const std::vector<std::vector<double>>& samples, double gamma,
                                              std::size_t k, std::size_t r, std::uint64_t seed,
                                              Parallelism par = {}) {
  require(samples.size() == f.arity(), ErrorCode::arity_mismatch, "need one sample per argument");
  for (const auto& s : samples) require(!s.empty(), ErrorCode::invalid_argument, "samples must be nonempty");
  require(r >= 1, ErrorCode::invalid_argument, "r must be at least 1");
  ResamplingInterval out;
  out.order_index = floor_alpha_k(1.0 - gamma, k);
  out.estimates.resize(k);
  parallel_for(k, par, [&](std::size_t e) {
    Stream rng(seed, {e});
    std::vector<double> x(samples.size());
    std::size_t hits = 0;
    for (std::size_t q = 0; q < r; ++q) {
      for (std::size_t i = 0; i < samples.size(); ++i) x[i] = samples[i][rng.index(samples[i].size())];
      hits += f.spec().evaluate(x) == 1.0;
    }
    out.estimates[e] = static_cast<double>(hits) / static_cast<double>(r);
  });
  std::sort(out.estimates.begin(), out.estimates.end());
  out.lower = out.estimates[out.order_index - 1];
  return out;
}

inline nlohmann::json to_json(const CoverageReport& rep) {
  nlohmann::json j{{"gamma", rep.gamma},
                   {"alpha", rep.alpha},
                   {"theta", rep.theta},
                   {"k", rep.k},
                   {"r", rep.r},
                   {"order_index", rep.order_index},
                   {"mode", rep.mode == CoverageMode::exact ? "exact" : "mc"},
                   {"R", rep.coverage}};
  if (rep.mode == CoverageMode::mc) {
    j["R_se"] = rep.coverage_se;
    j["replications"] = rep.replications;
    j["seed"] = rep.seed;
  } else {
    j["probability_total"] = rep.probability_total;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : rep.rows)
      rows.push_back({{"W", row.w},
                      {"protocol", protocol_from_w(row.w)},
                      {"P", row.probability},
                      {"q", row.q},
                      {"rho", row.rho},
                      {"R_C", row.coverage}});
    j["rows"] = rows;
  }
  return j;
}

}  // namespace resamplekit
