#pragma once

// Pair calculus for the variance of the resampling estimator.
//
// Two realizations q, q' of the same resampling scheme share some sample
// elements. For distinct samples the sharing pattern is the ω set of
// arguments whose indices coincide; for shared-sample blocks it is the β
// vector (which argument of q' reuses the element of argument i of q) or its
// per-block count α. Everything here is parameterised by α: an ω pair is the
// α pair of a layout whose blocks all have size 1.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "resamplekit/budget.hpp"
#include "resamplekit/distributions.hpp"
#include "resamplekit/error.hpp"
#include "resamplekit/parallel.hpp"
#include "resamplekit/random.hpp"
#include "resamplekit/samples.hpp"
#include "resamplekit/stats.hpp"
#include "resamplekit/system.hpp"

namespace resamplekit {

/// Arguments (1-based, increasing) whose resample indices coincide.
struct OmegaPair {
  std::vector<std::size_t> shared;
  friend bool operator==(const OmegaPair&, const OmegaPair&) = default;
};

/// beta[i] = v (1-based) when argument i of q reuses the element drawn for
/// argument v of q'; 0 when it reuses nothing.
struct BetaPair {
  std::vector<std::size_t> beta;
  friend bool operator==(const BetaPair&, const BetaPair&) = default;
};

/// Shared-element count per block. Blocks are the samples that back at least
/// one argument, in sample order.
struct AlphaPair {
  std::vector<std::size_t> alpha;
  friend bool operator==(const AlphaPair&, const AlphaPair&) = default;
};

namespace detail {

struct Block {
  std::size_t sample;
  std::size_t n;
  std::vector<std::size_t> args;  // 0-based
  std::size_t m() const { return args.size(); }
};

inline std::vector<Block> blocks_of(const SampleSet& samples) {
  std::vector<Block> out;
  for (std::size_t s = 0; s < samples.sample_count(); ++s)
    if (!samples.block(s).empty()) out.push_back({s, samples.size(s), samples.block(s)});
  return out;
}

inline double log_falling(std::size_t n, std::size_t k) {
  if (k > n) return -INFINITY;
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(n - k) + 1.0);
}

inline std::uint64_t count_from_log(double lg) {
  if (std::isinf(lg) && lg < 0) return 0;
  if (lg > 63 * std::log(2.0)) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(std::llround(std::exp(lg)));
}

/// Visits every ordered m-tuple of distinct elements of {0..n-1}.
template <typename F>
void for_each_tuple(std::size_t n, std::size_t m, F&& visit) {
  std::vector<std::size_t> t(m);
  std::vector<char> used(n, 0);
  auto rec = [&](auto&& self, std::size_t i) -> void {
    if (i == m) {
      visit(static_cast<const std::vector<std::size_t>&>(t));
      return;
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (used[v]) continue;
      used[v] = 1;
      t[i] = v;
      self(self, i + 1);
      used[v] = 0;
    }
  };
  rec(rec, 0);
}

inline std::size_t overlap(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::size_t c = 0;
  for (std::size_t x : a) c += static_cast<std::size_t>(std::count(b.begin(), b.end(), x));
  return c;
}

using TuplePair = std::pair<std::vector<std::size_t>, std::vector<std::size_t>>;

/// Number of ordered tuple pairs (t, t') from a population of n with
/// |set(t) ∩ set(t')| = a: P(n,m) C(m,a) C(n-m,m-a) m!.
inline double log_tuple_pair_count(std::size_t n, std::size_t m, std::size_t a) {
  if (a > m || m > n || m - a > n - m) return -INFINITY;
  return log_falling(n, m) + log_choose(m, a) + log_choose(n - m, m - a) + log_falling(m, m);
}

inline std::vector<TuplePair> tuple_pairs(std::size_t n, std::size_t m, std::size_t a, std::uint64_t budget) {
  const std::uint64_t tuples = count_from_log(log_falling(n, m));
  check_budget(saturating_mul(tuples, tuples), budget, "tuple-pair enumeration");
  std::vector<std::vector<std::size_t>> all;
  for_each_tuple(n, m, [&](const std::vector<std::size_t>& t) { all.push_back(t); });
  std::vector<TuplePair> out;
  for (const auto& t : all)
    for (const auto& u : all)
      if (overlap(t, u) == a) out.emplace_back(t, u);
  return out;
}

/// Uniform draw of (t, t') with overlap a from a population of n.
inline void sample_tuple_pair(Stream& rng, std::size_t n, std::size_t m, std::size_t a, std::vector<std::size_t>& t,
                              std::vector<std::size_t>& u) {
  t.resize(m);
  u.resize(m);
  draw_distinct(rng, n, m, t);
  std::vector<std::size_t> pick(a);
  if (a > 0) draw_distinct(rng, m, a, pick);
  std::vector<std::size_t> next;
  next.reserve(m);
  for (std::size_t i = 0; i < a; ++i) next.push_back(t[pick[i]]);
  if (m > a) {
    std::vector<std::size_t> rest;
    rest.reserve(n - m);
    std::vector<char> in_t(n, 0);
    for (std::size_t v : t) in_t[v] = 1;
    for (std::size_t v = 0; v < n; ++v)
      if (!in_t[v]) rest.push_back(v);
    std::vector<std::size_t> fresh(m - a);
    draw_distinct(rng, rest.size(), m - a, fresh);
    for (std::size_t f : fresh) next.push_back(rest[f]);
  }
  const auto perm = random_permutation(rng, m);
  for (std::size_t i = 0; i < m; ++i) u[i] = next[perm[i]];
}

inline double round_sig(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return std::stod(buf);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Probabilities and enumeration

inline double omega_probability(const OmegaPair& pair, std::span<const std::size_t> sizes) {
  std::vector<char> in(sizes.size(), 0);
  for (std::size_t a : pair.shared) {
    require(a >= 1 && a <= sizes.size(), ErrorCode::invalid_argument, "omega index out of range");
    in[a - 1] = 1;
  }
  double p = 1.0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    require(sizes[i] >= 1, ErrorCode::invalid_argument, "sample sizes must be positive");
    const double inv = 1.0 / static_cast<double>(sizes[i]);
    p *= in[i] ? inv : 1.0 - inv;
  }
  return p;
}

/// Hypergeometric law of the per-block overlap counts.
inline double alpha_probability(const AlphaPair& pair, const SampleSet& layout) {
  const auto blocks = detail::blocks_of(layout);
  require(pair.alpha.size() == blocks.size(), ErrorCode::arity_mismatch,
          "alpha has " + std::to_string(pair.alpha.size()) + " entries, layout has " +
              std::to_string(blocks.size()) + " blocks");
  double p = 1.0;
  for (std::size_t b = 0; b < blocks.size(); ++b) p *= hypergeometric_overlap(blocks[b].n, blocks[b].m(), pair.alpha[b]);
  return p;
}

/// Number of β vectors collapsing to α: ∏ C(m_i,α_i) m_i!/(m_i-α_i)!.
inline double beta_class_size(const AlphaPair& pair, const SampleSet& layout) {
  const auto blocks = detail::blocks_of(layout);
  double lg = 0.0;
  for (std::size_t b = 0; b < blocks.size(); ++b)
    lg += log_choose(blocks[b].m(), pair.alpha[b]) + detail::log_falling(blocks[b].m(), pair.alpha[b]);
  return std::exp(lg);
}

inline OmegaPair omega_from_alpha(const AlphaPair& pair, const SampleSet& layout) {
  require(layout.all_distinct(), ErrorCode::invalid_argument, "omega pairs need a distinct-sample layout");
  const auto blocks = detail::blocks_of(layout);
  OmegaPair out;
  for (std::size_t b = 0; b < blocks.size(); ++b)
    if (pair.alpha[b]) out.shared.push_back(blocks[b].args[0] + 1);
  std::sort(out.shared.begin(), out.shared.end());
  return out;
}

inline AlphaPair alpha_from_omega(const OmegaPair& pair, const SampleSet& layout) {
  require(layout.all_distinct(), ErrorCode::invalid_argument, "omega pairs need a distinct-sample layout");
  const auto blocks = detail::blocks_of(layout);
  AlphaPair out;
  for (const auto& b : blocks)
    out.alpha.push_back(std::count(pair.shared.begin(), pair.shared.end(), b.args[0] + 1) ? 1 : 0);
  return out;
}

struct PairRow {
  AlphaPair alpha;
  std::optional<OmegaPair> omega;  // set for distinct-sample layouts
  double probability = 0.0;
};

/// Every α pair of the layout once, with its probability. Distinct layouts
/// are listed as ω sets ordered by size then lexicographically; block
/// layouts in lexicographic α order. Pairs with probability 0 (forced
/// overlaps) are kept.
inline std::vector<PairRow> enumerate_pairs(const SampleSet& layout, std::uint64_t budget = enumeration_budget()) {
  const auto blocks = detail::blocks_of(layout);
  std::vector<PairRow> out;
  if (layout.all_distinct()) {
    const std::size_t m = layout.arguments();
    require(m < 63, ErrorCode::budget_exceeded, "omega family of 2^" + std::to_string(m) + " pairs");
    check_budget(std::uint64_t{1} << m, budget, "omega-pair enumeration");
    std::vector<std::uint64_t> masks(std::uint64_t{1} << m);
    for (std::uint64_t i = 0; i < masks.size(); ++i) masks[i] = i;
    auto members = [](std::uint64_t mask) {
      std::vector<std::size_t> v;
      for (std::size_t i = 0; mask; ++i, mask >>= 1)
        if (mask & 1) v.push_back(i + 1);
      return v;
    };
    std::sort(masks.begin(), masks.end(), [&](std::uint64_t a, std::uint64_t b) {
      if (std::popcount(a) != std::popcount(b)) return std::popcount(a) < std::popcount(b);
      return members(a) < members(b);
    });
    const auto sizes = layout.argument_sizes();
    for (std::uint64_t mask : masks) {
      OmegaPair w{members(mask)};
      PairRow row{alpha_from_omega(w, layout), w, omega_probability(w, sizes)};
      out.push_back(std::move(row));
    }
    return out;
  }
  std::uint64_t total = 1;
  for (const auto& b : blocks) total = saturating_mul(total, b.m() + 1);
  check_budget(total, budget, "alpha-pair enumeration");
  AlphaPair cur{std::vector<std::size_t>(blocks.size(), 0)};
  for (;;) {
    out.push_back({cur, std::nullopt, alpha_probability(cur, layout)});
    std::size_t b = blocks.size();
    while (b > 0) {
      --b;
      if (++cur.alpha[b] <= blocks[b].m()) break;
      cur.alpha[b] = 0;
      if (b == 0) return out;
    }
    if (blocks.empty()) return out;
  }
}

/// β family with P(β) = P(α)/|class(α)|, lexicographic in β. Exponential in
/// the block sizes; meant for diagnostics on small layouts.
inline std::vector<std::pair<BetaPair, double>> enumerate_beta_pairs(const SampleSet& layout,
                                                                     std::uint64_t budget = enumeration_budget()) {
  const auto blocks = detail::blocks_of(layout);
  // Per block, every partial injection from block positions of q into block
  // positions of q' (0 = none).
  std::vector<std::vector<std::vector<std::size_t>>> options(blocks.size());
  std::uint64_t total = 1;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::size_t m = blocks[b].m();
    std::uint64_t count = 0;
    for (std::size_t a = 0; a <= m; ++a)
      count += detail::count_from_log(log_choose(m, a) + detail::log_falling(m, a));
    total = saturating_mul(total, count);
    check_budget(total, budget, "beta-pair enumeration");
    std::vector<std::size_t> cur(m, 0);
    std::vector<char> used(m, 0);
    auto rec = [&](auto&& self, std::size_t i) -> void {
      if (i == m) {
        options[b].push_back(cur);
        return;
      }
      cur[i] = 0;
      self(self, i + 1);
      for (std::size_t v = 0; v < m; ++v) {
        if (used[v]) continue;
        used[v] = 1;
        cur[i] = v + 1;
        self(self, i + 1);
        used[v] = 0;
      }
      cur[i] = 0;
    };
    rec(rec, 0);
  }
  std::vector<std::pair<BetaPair, double>> out;
  std::vector<std::size_t> pos(blocks.size(), 0);
  for (;;) {
    BetaPair beta{std::vector<std::size_t>(layout.arguments(), 0)};
    AlphaPair alpha;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& opt = options[b][pos[b]];
      std::size_t a = 0;
      for (std::size_t i = 0; i < opt.size(); ++i) {
        if (opt[i]) {
          beta.beta[blocks[b].args[i]] = blocks[b].args[opt[i] - 1] + 1;
          ++a;
        }
      }
      alpha.alpha.push_back(a);
    }
    out.emplace_back(std::move(beta), alpha_probability(alpha, layout) / beta_class_size(alpha, layout));
    std::size_t b = blocks.size();
    bool done = true;
    while (b > 0) {
      --b;
      if (++pos[b] < options[b].size()) {
        done = false;
        break;
      }
      pos[b] = 0;
    }
    if (done) break;
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.first.beta < y.first.beta; });
  return out;
}

inline BetaPair beta_from_indices(const ResampleIndexVector& jq, const ResampleIndexVector& jq2,
                                  const SampleSet& layout) {
  require(jq.j.size() == layout.arguments() && jq2.j.size() == layout.arguments(), ErrorCode::arity_mismatch,
          "index vectors do not match the layout");
  BetaPair out{std::vector<std::size_t>(layout.arguments(), 0)};
  for (std::size_t i = 0; i < layout.arguments(); ++i)
    for (std::size_t v : layout.block(layout.sample_of(i)))
      if (jq.j[i] == jq2.j[v]) out.beta[i] = v + 1;
  return out;
}

inline AlphaPair alpha_from_beta(const BetaPair& beta, const SampleSet& layout) {
  AlphaPair out;
  for (const auto& b : detail::blocks_of(layout)) {
    std::size_t a = 0;
    for (std::size_t i : b.args) a += beta.beta[i] != 0;
    out.alpha.push_back(a);
  }
  return out;
}

inline AlphaPair alpha_from_indices(const ResampleIndexVector& jq, const ResampleIndexVector& jq2,
                                    const SampleSet& layout) {
  return alpha_from_beta(beta_from_indices(jq, jq2, layout), layout);
}

inline OmegaPair omega_from_indices(const ResampleIndexVector& jq, const ResampleIndexVector& jq2) {
  OmegaPair out;
  for (std::size_t i = 0; i < jq.j.size(); ++i)
    if (jq.j[i] == jq2.j[i]) out.shared.push_back(i + 1);
  return out;
}

// ---------------------------------------------------------------------------
// Conditional mixed moments

/// Resampling conditional on fixed data: expectations run over index vectors.
struct EmpiricalSource {
  const SampleSet& samples;
};

/// Samples are i.i.d. draws from known generators, one per sample; only the
/// sizes of `layout` matter. Expectations run over both the data and the
/// index vectors.
struct GeneratorSource {
  SampleSet layout;
  std::vector<KnownDistribution> generators;  // indexed like layout samples

  /// sizes[s] is n_s; arg_sample maps arguments to samples.
  static GeneratorSource make(std::vector<std::size_t> sizes, std::vector<std::size_t> arg_sample,
                              std::vector<KnownDistribution> generators) {
    require(sizes.size() == generators.size(), ErrorCode::arity_mismatch, "one generator per sample required");
    std::vector<Sample> samples;
    for (std::size_t s = 0; s < sizes.size(); ++s) {
      require(sizes[s] >= 1, ErrorCode::invalid_argument, "sample sizes must be positive");
      samples.push_back({"H" + std::to_string(s + 1), std::vector<double>(sizes[s], 0.0)});
    }
    return {SampleSet(std::move(samples), std::move(arg_sample)), std::move(generators)};
  }
  static GeneratorSource distinct(std::vector<std::size_t> sizes, std::vector<KnownDistribution> generators) {
    std::vector<std::size_t> layout(sizes.size());
    for (std::size_t i = 0; i < layout.size(); ++i) layout[i] = i;
    return make(std::move(sizes), std::move(layout), std::move(generators));
  }
};

struct MomentEstimate {
  double value = 0.0;
  double se = 0.0;
  bool exact = true;
};

struct MomentOptions {
  std::uint64_t budget = enumeration_budget();
  std::size_t mc_draws = 200000;
  std::uint64_t seed = 0;
  Parallelism par{};
};

namespace detail {

inline const SampleSet& layout_of(const EmpiricalSource& s) { return s.samples; }
inline const SampleSet& layout_of(const GeneratorSource& s) { return s.layout; }

inline void check_feasible(const AlphaPair& pair, const std::vector<Block>& blocks) {
  require(pair.alpha.size() == blocks.size(), ErrorCode::arity_mismatch, "alpha length does not match the blocks");
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::size_t m = blocks[b].m(), a = pair.alpha[b], n = blocks[b].n;
    require(a <= m && m - a <= n - m, ErrorCode::infeasible_pair,
            "overlap " + std::to_string(a) + " impossible for " + std::to_string(m) + " draws from a sample of " +
                std::to_string(n));
  }
}

inline MomentEstimate finish_mc(const std::vector<double>& values) {
  const auto acc = accumulate(values);
  return {acc.mean(), acc.mean_se(), false};
}

/// Average of φ(x)φ(x') over the cartesian product of per-block tuple pairs,
/// where population element k of block b has value value(b, k).
template <typename ValueOf>
double average_over_tuple_pairs(const SystemSpec& spec, const std::vector<Block>& blocks,
                                const std::vector<std::vector<TuplePair>>& lists, std::size_t m, ValueOf&& value) {
  std::vector<double> x(m), x2(m);
  std::vector<std::size_t> pos(blocks.size(), 0);
  double sum = 0.0;
  std::uint64_t count = 0;
  for (;;) {
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& [t, u] = lists[b][pos[b]];
      for (std::size_t i = 0; i < blocks[b].m(); ++i) {
        x[blocks[b].args[i]] = value(b, t[i]);
        x2[blocks[b].args[i]] = value(b, u[i]);
      }
    }
    sum += spec.evaluate(x) * spec.evaluate(x2);
    ++count;
    std::size_t b = blocks.size();
    bool done = true;
    while (b > 0) {
      --b;
      if (++pos[b] < lists[b].size()) {
        done = false;
        break;
      }
      pos[b] = 0;
    }
    if (done) break;
  }
  return sum / static_cast<double>(count);
}

inline std::vector<std::vector<TuplePair>> all_tuple_pairs(const std::vector<Block>& blocks,
                                                           const std::vector<std::size_t>& population,
                                                           const AlphaPair& pair, std::uint64_t budget,
                                                           std::uint64_t& total) {
  std::vector<std::vector<TuplePair>> lists;
  total = 1;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const double lg = log_tuple_pair_count(population[b], blocks[b].m(), pair.alpha[b]);
    total = saturating_mul(total, count_from_log(lg));
  }
  check_budget(total, budget, "pair-consistent index enumeration");
  for (std::size_t b = 0; b < blocks.size(); ++b)
    lists.push_back(tuple_pairs(population[b], blocks[b].m(), pair.alpha[b], budget));
  return lists;
}

inline std::uint64_t exact_cost(const std::vector<Block>& blocks, const std::vector<std::size_t>& population,
                                const AlphaPair& pair) {
  std::uint64_t total = 1, gen = 0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    total = saturating_mul(total, count_from_log(log_tuple_pair_count(population[b], blocks[b].m(), pair.alpha[b])));
    const std::uint64_t tuples = count_from_log(log_falling(population[b], blocks[b].m()));
    gen += saturating_mul(tuples, tuples);
  }
  return std::max(total, gen);
}

}  // namespace detail

/// E[φ(X*q) φ(X*q') | pair] conditional on the samples.
inline MomentEstimate conditional_mixed_moment(const SystemSpec& spec, const EmpiricalSource& src,
                                               const AlphaPair& pair, const MomentOptions& opt = {}) {
  const auto& samples = src.samples;
  require(spec.arguments() == samples.arguments(), ErrorCode::arity_mismatch, "system and samples disagree on m");
  const auto blocks = detail::blocks_of(samples);
  detail::check_feasible(pair, blocks);
  std::vector<std::size_t> population;
  for (const auto& b : blocks) population.push_back(b.n);
  auto value = [&](std::size_t b, std::size_t k) { return samples.sample(blocks[b].sample).values[k]; };

  if (detail::exact_cost(blocks, population, pair) <= opt.budget) {
    std::uint64_t total = 0;
    const auto lists = detail::all_tuple_pairs(blocks, population, pair, opt.budget, total);
    return {detail::average_over_tuple_pairs(spec, blocks, lists, spec.arguments(), value), 0.0, true};
  }
  std::uint64_t key = 0;
  for (std::size_t a : pair.alpha) key = splitmix64(key ^ a);
  std::vector<double> values(opt.mc_draws);
  parallel_for(opt.mc_draws, opt.par, [&](std::size_t d) {
    Stream rng(opt.seed, {0x11, key, d});
    std::vector<double> x(spec.arguments()), x2(spec.arguments());
    std::vector<std::size_t> t, u;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      detail::sample_tuple_pair(rng, blocks[b].n, blocks[b].m(), pair.alpha[b], t, u);
      for (std::size_t i = 0; i < blocks[b].m(); ++i) {
        x[blocks[b].args[i]] = value(b, t[i]);
        x2[blocks[b].args[i]] = value(b, u[i]);
      }
    }
    values[d] = spec.evaluate(x) * spec.evaluate(x2);
  });
  return detail::finish_mc(values);
}

/// E[φ(X*q) φ(X*q') | pair] over fresh generator data. Shared elements carry
/// one value; the remaining 2m-α elements of a block are independent draws.
/// Exact when every generator is finite (empirical) and the enumeration fits
/// the budget, Monte Carlo otherwise.
inline MomentEstimate conditional_mixed_moment(const SystemSpec& spec, const GeneratorSource& src,
                                               const AlphaPair& pair, const MomentOptions& opt = {}) {
  require(spec.arguments() == src.layout.arguments(), ErrorCode::arity_mismatch, "system and layout disagree on m");
  const auto blocks = detail::blocks_of(src.layout);
  detail::check_feasible(pair, blocks);
  std::vector<std::size_t> population;
  for (std::size_t b = 0; b < blocks.size(); ++b) population.push_back(2 * blocks[b].m() - pair.alpha[b]);

  bool finite = true;
  std::uint64_t assignments = 1;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& g = src.generators[blocks[b].sample];
    if (g.continuous()) {
      finite = false;
      break;
    }
    const auto& support = g.support();
    for (std::size_t k = 0; k < population[b]; ++k) assignments = saturating_mul(assignments, support.size());
  }
  if (finite &&
      saturating_mul(assignments, detail::exact_cost(blocks, population, pair)) <= opt.budget) {
    std::uint64_t total = 0;
    const auto lists = detail::all_tuple_pairs(blocks, population, pair, opt.budget, total);
    std::vector<std::vector<double>> supports;
    for (const auto& b : blocks) supports.push_back(src.generators[b.sample].support());
    // Odometer over the values of every population element.
    std::vector<std::vector<std::size_t>> choice(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) choice[b].assign(population[b], 0);
    double sum = 0.0;
    std::uint64_t count = 0;
    for (;;) {
      sum += detail::average_over_tuple_pairs(spec, blocks, lists, spec.arguments(), [&](std::size_t b, std::size_t k) {
        return supports[b][choice[b][k]];
      });
      ++count;
      bool done = true;
      for (std::size_t b = blocks.size(); b-- > 0 && done;) {
        for (std::size_t k = population[b]; k-- > 0;) {
          if (++choice[b][k] < supports[b].size()) {
            done = false;
            break;
          }
          choice[b][k] = 0;
        }
      }
      if (done) break;
    }
    return {sum / static_cast<double>(count), 0.0, true};
  }

  std::uint64_t key = 0;
  for (std::size_t a : pair.alpha) key = splitmix64(key ^ a);
  std::vector<double> values(opt.mc_draws);
  parallel_for(opt.mc_draws, opt.par, [&](std::size_t d) {
    Stream rng(opt.seed, {0x12, key, d});
    std::vector<double> x(spec.arguments()), x2(spec.arguments()), slot;
    std::vector<std::size_t> t, u;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& g = src.generators[blocks[b].sample];
      detail::sample_tuple_pair(rng, population[b], blocks[b].m(), pair.alpha[b], t, u);
      slot.resize(population[b]);
      for (auto& v : slot) v = g.sample(rng);
      for (std::size_t i = 0; i < blocks[b].m(); ++i) {
        x[blocks[b].args[i]] = slot[t[i]];
        x2[blocks[b].args[i]] = slot[u[i]];
      }
    }
    values[d] = spec.evaluate(x) * spec.evaluate(x2);
  });
  return detail::finish_mc(values);
}

struct FirstMoments {
  MomentEstimate mu;
  MomentEstimate mu2;
};

/// μ = E φ and μ2 = E φ² of one realization.
inline FirstMoments first_moments(const SystemSpec& spec, const EmpiricalSource& src, const MomentOptions& opt = {}) {
  const auto& samples = src.samples;
  require(spec.arguments() == samples.arguments(), ErrorCode::arity_mismatch, "system and samples disagree on m");
  if (samples.admissible_count() <= opt.budget) {
    double s1 = 0.0, s2 = 0.0;
    std::uint64_t count = 0;
    std::vector<double> x(samples.arguments());
    for_each_index_vector(
        samples,
        [&](const ResampleIndexVector& idx) {
          samples.gather(idx, x);
          const double v = spec.evaluate(x);
          s1 += v;
          s2 += v * v;
          ++count;
        },
        opt.budget);
    return {{s1 / count, 0.0, true}, {s2 / count, 0.0, true}};
  }
  std::vector<double> v1(opt.mc_draws), v2(opt.mc_draws);
  parallel_for(opt.mc_draws, opt.par, [&](std::size_t d) {
    Stream rng(opt.seed, {0x13, d});
    std::vector<double> x(samples.arguments());
    samples.gather(draw_resample(samples, rng), x);
    v1[d] = spec.evaluate(x);
    v2[d] = v1[d] * v1[d];
  });
  return {detail::finish_mc(v1), detail::finish_mc(v2)};
}

inline FirstMoments first_moments(const SystemSpec& spec, const GeneratorSource& src, const MomentOptions& opt = {}) {
  require(spec.arguments() == src.layout.arguments(), ErrorCode::arity_mismatch, "system and layout disagree on m");
  const std::size_t m = spec.arguments();
  std::vector<const KnownDistribution*> gen(m);
  bool finite = true;
  std::uint64_t assignments = 1;
  for (std::size_t a = 0; a < m; ++a) {
    gen[a] = &src.generators[src.layout.sample_of(a)];
    if (gen[a]->continuous()) finite = false;
    else assignments = saturating_mul(assignments, gen[a]->support().size());
  }
  if (finite && assignments <= opt.budget) {
    std::vector<std::vector<double>> supports(m);
    for (std::size_t a = 0; a < m; ++a) supports[a] = gen[a]->support();
    std::vector<std::size_t> choice(m, 0);
    std::vector<double> x(m);
    double s1 = 0.0, s2 = 0.0;
    std::uint64_t count = 0;
    for (;;) {
      for (std::size_t a = 0; a < m; ++a) x[a] = supports[a][choice[a]];
      const double v = spec.evaluate(x);
      s1 += v;
      s2 += v * v;
      ++count;
      std::size_t a = m;
      bool done = true;
      while (a-- > 0) {
        if (++choice[a] < supports[a].size()) {
          done = false;
          break;
        }
        choice[a] = 0;
      }
      if (done) break;
    }
    return {{s1 / count, 0.0, true}, {s2 / count, 0.0, true}};
  }
  std::vector<double> v1(opt.mc_draws), v2(opt.mc_draws);
  parallel_for(opt.mc_draws, opt.par, [&](std::size_t d) {
    Stream rng(opt.seed, {0x14, d});
    std::vector<double> x(m);
    for (std::size_t a = 0; a < m; ++a) x[a] = gen[a]->sample(rng);
    v1[d] = spec.evaluate(x);
    v2[d] = v1[d] * v1[d];
  });
  return {detail::finish_mc(v1), detail::finish_mc(v2)};
}

// ---------------------------------------------------------------------------
// Variance assembly

struct PairMomentRow {
  PairRow pair;
  std::optional<MomentEstimate> moment;  // empty for probability-0 pairs
};

struct VarianceReport {
  std::size_t r = 1;
  double variance = 0.0;
  double limit_variance = 0.0;  // r → ∞
  double variance_se = 0.0;
  MomentEstimate mu;
  MomentEstimate mu2;
  MomentEstimate mu11;
  bool exact = true;
  std::vector<PairMomentRow> rows;
};

/// Var Θ* = μ2/r + (r-1)/r μ11 - μ², with μ11 = Σ P(pair) μ11(pair).
template <typename Source>
VarianceReport resampling_variance(const SystemSpec& spec, const Source& src, std::size_t r,
                                   const MomentOptions& opt = {}) {
  require(r >= 1, ErrorCode::invalid_argument, "r must be at least 1");
  const auto& layout = detail::layout_of(src);
  VarianceReport rep;
  rep.r = r;
  const auto fm = first_moments(spec, src, opt);
  rep.mu = fm.mu;
  rep.mu2 = fm.mu2;
  double mu11 = 0.0, var11 = 0.0;
  bool exact = fm.mu.exact && fm.mu2.exact;
  for (auto& row : enumerate_pairs(layout, opt.budget)) {
    PairMomentRow out{row, std::nullopt};
    if (row.probability > 0.0) {
      const auto mom = conditional_mixed_moment(spec, src, row.alpha, opt);
      mu11 += row.probability * mom.value;
      var11 += row.probability * row.probability * mom.se * mom.se;
      exact = exact && mom.exact;
      out.moment = mom;
    }
    rep.rows.push_back(std::move(out));
  }
  rep.mu11 = {mu11, std::sqrt(var11), exact};
  rep.exact = exact;
  const double rd = static_cast<double>(r);
  const double mu = rep.mu.value;
  rep.variance = rep.mu2.value / rd + (rd - 1.0) / rd * mu11 - mu * mu;
  rep.limit_variance = mu11 - mu * mu;
  const double a = rep.mu2.se / rd, b = (rd - 1.0) / rd * rep.mu11.se, c = 2.0 * mu * rep.mu.se;
  rep.variance_se = std::sqrt(a * a + b * b + c * c);
  return rep;
}

inline nlohmann::json to_json(const MomentEstimate& m) {
  nlohmann::json j{{"value", m.value}, {"exact", m.exact}};
  if (!m.exact) j["se"] = m.se;
  return j;
}

inline nlohmann::json to_json(const PairRow& row) {
  nlohmann::json j;
  if (row.omega) j["omega"] = row.omega->shared;
  else j["alpha"] = row.alpha.alpha;
  j["probability"] = detail::round_sig(row.probability, 12);
  return j;
}

inline nlohmann::json to_json(const VarianceReport& rep) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : rep.rows) {
    auto j = to_json(row.pair);
    if (row.moment) {
      j["mu11"] = row.moment->value;
      if (!row.moment->exact) j["mu11_se"] = row.moment->se;
    } else {
      j["mu11"] = nullptr;
    }
    rows.push_back(std::move(j));
  }
  nlohmann::json j{{"r", rep.r},
                   {"variance", rep.variance},
                   {"limit_variance", rep.limit_variance},
                   {"mu", to_json(rep.mu)},
                   {"mu2", to_json(rep.mu2)},
                   {"mu11", to_json(rep.mu11)},
                   {"exact", rep.exact},
                   {"pairs", std::move(rows)}};
  if (!rep.exact) j["variance_se"] = rep.variance_se;
  return j;
}

}  // namespace resamplekit
