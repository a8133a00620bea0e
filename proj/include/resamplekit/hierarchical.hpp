#pragma once

// Hierarchical ("wave") resampling over a calculation tree.
//
// Every non-threshold operator node is a stage: it owns a generated sample
// H_v whose elements are built by picking one element from each child sample
// (with replacement across elements) and applying the node's subfunction.
// Threshold nodes ind(.) are folded into the stage below them, so H_v stores
// the value at the top of the threshold chain. Known-distribution leaves z are
// drawn fresh for every element of the stage that reads them.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "resamplekit/budget.hpp"
#include "resamplekit/distributions.hpp"
#include "resamplekit/error.hpp"
#include "resamplekit/pairs.hpp"
#include "resamplekit/parallel.hpp"
#include "resamplekit/random.hpp"
#include "resamplekit/resampling.hpp"
#include "resamplekit/samples.hpp"
#include "resamplekit/system.hpp"

namespace resamplekit {

using NodeSizes = std::map<NodeId, std::size_t>;

struct WaveChild {
  bool is_stage = false;
  std::size_t index = 0;  // 0-based argument for leaves, stage position otherwise
};

struct WaveStage {
  NodeId core = 0;  // operator node (or the root when no operator sits under it)
  NodeId top = 0;   // top of the threshold chain above core
  std::vector<WaveChild> children;
  std::vector<std::size_t> known;  // 0-based z indices read by this stage
  std::size_t height = 0;
  std::size_t size = 0;  // n_v
};

/// Stages in bottom-up order (by height, then node id); the root stage last.
class WavePlan {
 public:
  WavePlan(const SystemSpec& spec, std::span<const std::size_t> leaf_sizes, const NodeSizes& sizes = {})
      : spec_(&spec) {
    require(leaf_sizes.size() == spec.arguments(), ErrorCode::arity_mismatch,
            "wave needs one sample per sampled leaf");
    std::vector<NodeId> cores;
    for (NodeId v = 1; v <= spec.node_count(); ++v) {
      const Op op = spec.node(v).op;
      if (op != Op::input && op != Op::known && op != Op::threshold) cores.push_back(v);
    }
    // Top of the threshold chain above each core.
    std::vector<NodeId> parent(spec.node_count() + 1, 0);
    for (NodeId v = 1; v <= spec.node_count(); ++v)
      for (NodeId c : spec.node(v).children) parent[c] = v;
    auto chain_top = [&](NodeId v) {
      while (parent[v] && spec.node(parent[v]).op == Op::threshold) v = parent[v];
      return v;
    };
    std::map<NodeId, NodeId> top_of;
    for (NodeId c : cores) top_of[c] = chain_top(c);
    bool root_covered = false;
    for (const auto& [c, t] : top_of) root_covered = root_covered || t == spec.root();
    if (!root_covered) {
      // No operator under the root chain (e.g. ind(x1 > t)): the chain itself
      // is the root stage.
      cores.push_back(spec.root());
      top_of[spec.root()] = spec.root();
    }
    for (NodeId c : cores) {
      stages_.push_back({c, top_of[c], {}, {}, 0, 0});
      top_stage_[top_of[c]] = stages_.size() - 1;
    }
    // Heights and children, then order bottom-up.
    std::vector<std::size_t> h(stages_.size(), 0);
    for (std::size_t s = 0; s < stages_.size(); ++s) collect(s, stages_[s].top, true);
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t s = 0; s < stages_.size(); ++s) {
        std::size_t want = 0;
        for (const auto& ch : stages_[s].children)
          if (ch.is_stage) want = std::max(want, h[ch.index] + 1);
        if (want != h[s]) {
          h[s] = want;
          changed = true;
        }
      }
    }
    for (std::size_t s = 0; s < stages_.size(); ++s) stages_[s].height = h[s];
    std::vector<std::size_t> order(stages_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (h[a] != h[b]) return h[a] < h[b];
      return stages_[a].core < stages_[b].core;
    });
    std::vector<std::size_t> pos(stages_.size());
    for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
    std::vector<WaveStage> sorted;
    for (std::size_t i : order) {
      auto st = stages_[i];
      for (auto& ch : st.children)
        if (ch.is_stage) ch.index = pos[ch.index];
      sorted.push_back(std::move(st));
    }
    stages_ = std::move(sorted);
    top_stage_.clear();
    for (std::size_t s = 0; s < stages_.size(); ++s) top_stage_[stages_[s].top] = s;

    // Sizes: explicit (keyed by core or top id) or the minimum child size.
    for (const auto& [id, n] : sizes) {
      bool found = false;
      for (const auto& st : stages_) found = found || st.core == id || st.top == id;
      require(found, ErrorCode::unknown_node, "node " + std::to_string(id) + " is not an operator node of the tree");
      require(n >= 1, ErrorCode::invalid_argument, "node " + std::to_string(id) + " has size 0");
    }
    for (auto& st : stages_) {
      std::optional<std::size_t> n;
      if (auto it = sizes.find(st.core); it != sizes.end()) n = it->second;
      if (auto it = sizes.find(st.top); it != sizes.end()) n = it->second;
      if (!n) {
        for (const auto& ch : st.children) {
          const std::size_t cs = ch.is_stage ? stages_[ch.index].size : leaf_sizes[ch.index];
          n = n ? std::min(*n, cs) : cs;
        }
      }
      require(n.has_value(), ErrorCode::invalid_argument,
              "node " + std::to_string(st.core) + " has no sampled children; give its size explicitly");
      st.size = *n;
    }
    leaf_sizes_.assign(leaf_sizes.begin(), leaf_sizes.end());
  }

  const SystemSpec& spec() const { return *spec_; }
  const std::vector<WaveStage>& stages() const { return stages_; }
  const WaveStage& root() const { return stages_.back(); }
  std::size_t leaf_size(std::size_t arg) const { return leaf_sizes_[arg]; }
  std::size_t child_size(const WaveChild& ch) const {
    return ch.is_stage ? stages_[ch.index].size : leaf_sizes_[ch.index];
  }

  /// Stage whose H_v holds the value of node v, if any.
  std::optional<std::size_t> stage_at(NodeId v) const {
    auto it = top_stage_.find(v);
    if (it == top_stage_.end()) return std::nullopt;
    return it->second;
  }

  /// Value of stage s for one element: child_value(c) gives the picked value
  /// of child c, known(j) the z draw for known index j.
  template <typename ChildValue, typename KnownValue>
  double evaluate_stage(std::size_t s, ChildValue&& child_value, KnownValue&& known) const {
    const auto& st = stages_[s];
    std::size_t next_child = 0;
    // Children were collected in the same depth-first order.
    auto rec = [&](auto&& self, NodeId v, bool at_top) -> double {
      const Node& n = spec_->node(v);
      if (!at_top) {
        if (stage_at(v)) return child_value(next_child++);
      }
      if (n.op == Op::input) return child_value(next_child++);
      if (n.op == Op::known) return known(n.index - 1);
      double buf[16];
      std::vector<double> big;
      std::span<double> vals;
      if (n.children.size() <= 16) {
        vals = std::span<double>(buf, n.children.size());
      } else {
        big.resize(n.children.size());
        vals = big;
      }
      for (std::size_t i = 0; i < n.children.size(); ++i) vals[i] = self(self, n.children[i], false);
      return apply_op(n, vals);
    };
    return rec(rec, st.top, true);
  }

 private:
  void collect(std::size_t s, NodeId v, bool at_top) {
    const Node& n = spec_->node(v);
    if (!at_top) {
      if (auto it = top_stage_.find(v); it != top_stage_.end()) {
        stages_[s].children.push_back({true, it->second});
        return;
      }
    }
    if (n.op == Op::input) {
      stages_[s].children.push_back({false, n.index - 1});
      return;
    }
    if (n.op == Op::known) {
      stages_[s].known.push_back(n.index - 1);
      return;
    }
    for (NodeId c : n.children) collect(s, c, false);
  }

  const SystemSpec* spec_;
  std::vector<WaveStage> stages_;
  std::map<NodeId, std::size_t> top_stage_;
  std::vector<std::size_t> leaf_sizes_;
};

inline std::vector<std::size_t> wave_leaf_sizes(const SystemSpec& spec, const SampleSet& samples) {
  require(samples.arguments() == spec.arguments(), ErrorCode::arity_mismatch,
          "system has " + std::to_string(spec.arguments()) + " sampled arguments, samples provide " +
              std::to_string(samples.arguments()));
  require(samples.all_distinct(), ErrorCode::infeasible_layout, "the wave algorithm needs one sample per leaf");
  return samples.argument_sizes();
}

/// Generated samples of one wave pass. Elements are N-vectors stored
/// contiguously (N = 1 for plain resampling).
struct WaveState {
  std::size_t components = 1;
  std::vector<std::vector<double>> values;  // per stage, size n_v * N
};

struct WaveOptions {
  std::size_t components = 1;                  // N
  std::vector<KnownDistribution> known;        // generators of z1..z_nu
  Parallelism par{};
};

/// One wave pass: stage elements built level by level; element q of stage s
/// uses the substream (seed, core node, q).
inline WaveState run_wave(const WavePlan& plan, const SampleSet& samples, std::uint64_t seed,
                          const WaveOptions& opt = {}) {
  const auto& spec = plan.spec();
  require(opt.known.size() == spec.known_arguments(), ErrorCode::arity_mismatch,
          "system reads " + std::to_string(spec.known_arguments()) + " known arguments, " +
              std::to_string(opt.known.size()) + " distributions given");
  require(opt.components >= 1, ErrorCode::invalid_argument, "N must be at least 1");
  const std::size_t N = opt.components;
  WaveState state;
  state.components = N;
  state.values.resize(plan.stages().size());
  for (std::size_t s = 0; s < plan.stages().size(); ++s) {
    const auto& st = plan.stages()[s];
    auto& out = state.values[s];
    out.assign(st.size * N, 0.0);
    parallel_for(st.size, opt.par, [&](std::size_t q) {
      Stream rng(seed, {st.core, q});
      std::vector<std::size_t> pick(st.children.size());
      for (std::size_t c = 0; c < st.children.size(); ++c) pick[c] = rng.index(plan.child_size(st.children[c]));
      std::vector<double> z(spec.known_arguments(), 0.0);
      for (std::size_t xi = 0; xi < N; ++xi) {
        for (std::size_t j : st.known) z[j] = opt.known[j].sample(rng);
        out[q * N + xi] = plan.evaluate_stage(
            s,
            [&](std::size_t c) {
              const auto& ch = st.children[c];
              if (ch.is_stage) return state.values[ch.index][pick[c] * N + xi];
              return samples.sample(samples.sample_of(ch.index)).values[pick[c]];
            },
            [&](std::size_t j) { return z[j]; });
      }
    });
  }
  return state;
}

/// Θ* = mean of the root sample (over all N components).
inline EstimateResult wave_estimate(const SystemSpec& spec, const SampleSet& samples, const NodeSizes& sizes,
                                    std::uint64_t seed, const WaveOptions& opt = {}, bool keep_values = false) {
  const auto leaf_sizes = wave_leaf_sizes(spec, samples);
  const WavePlan plan(spec, leaf_sizes, sizes);
  auto state = run_wave(plan, samples, seed, opt);
  const std::size_t N = state.components;
  auto& root = state.values.back();
  std::vector<double> per_element(plan.root().size);
  for (std::size_t q = 0; q < per_element.size(); ++q) {
    double s = 0.0;
    for (std::size_t xi = 0; xi < N; ++xi) s += root[q * N + xi];
    per_element[q] = s / static_cast<double>(N);
  }
  return summarize(std::move(per_element), seed, keep_values);
}

/// Deterministic wave in which every stage sample is the full cartesian
/// product of its children's samples (lexicographic). The root mean then
/// equals the exhaustive simple-resampling mean.
inline EstimateResult wave_enumerate(const SystemSpec& spec, const SampleSet& samples,
                                     std::uint64_t budget = enumeration_budget(), bool keep_values = false) {
  require(spec.known_arguments() == 0, ErrorCode::invalid_argument, "enumerated wave needs a system without z leaves");
  const auto leaf_sizes = wave_leaf_sizes(spec, samples);
  // First pass for the structure, sizes replaced by product sizes below.
  WavePlan probe(spec, leaf_sizes);
  NodeSizes sizes;
  std::vector<std::uint64_t> product(probe.stages().size(), 1);
  std::uint64_t total = 0;
  for (std::size_t s = 0; s < probe.stages().size(); ++s) {
    for (const auto& ch : probe.stages()[s].children)
      product[s] = saturating_mul(product[s], ch.is_stage ? product[ch.index] : leaf_sizes[ch.index]);
    total += product[s];
    check_budget(total, budget, "enumerated wave");
    sizes[probe.stages()[s].core] = static_cast<std::size_t>(product[s]);
  }
  const WavePlan plan(spec, leaf_sizes, sizes);
  std::vector<std::vector<double>> values(plan.stages().size());
  for (std::size_t s = 0; s < plan.stages().size(); ++s) {
    const auto& st = plan.stages()[s];
    values[s].resize(st.size);
    std::vector<std::size_t> pick(st.children.size(), 0);
    for (std::size_t q = 0; q < st.size; ++q) {
      values[s][q] = plan.evaluate_stage(
          s,
          [&](std::size_t c) {
            const auto& ch = st.children[c];
            if (ch.is_stage) return values[ch.index][pick[c]];
            return samples.sample(samples.sample_of(ch.index)).values[pick[c]];
          },
          [](std::size_t) { return 0.0; });
      for (std::size_t c = st.children.size(); c-- > 0;) {
        if (++pick[c] < plan.child_size(st.children[c])) break;
        pick[c] = 0;
      }
    }
  }
  return summarize(std::move(values.back()), 0, keep_values);
}

// ---------------------------------------------------------------------------
// Pair-probability propagation

/// δ_{i,ω}: child i (with leaf set child_mask) is fully shared within ω.
inline bool delta(std::uint64_t child_mask, std::uint64_t omega) { return (child_mask & omega) == child_mask; }

inline std::uint64_t leaf_mask(const std::vector<std::size_t>& leaves_1based) {
  std::uint64_t m = 0;
  for (std::size_t a : leaves_1based) m |= std::uint64_t{1} << (a - 1);
  return m;
}

inline std::vector<std::size_t> mask_members(std::uint64_t mask) {
  std::vector<std::size_t> v;
  for (std::size_t i = 0; mask; ++i, mask >>= 1)
    if (mask & 1) v.push_back(i + 1);
  return v;
}

struct NodePairs {
  NodeId node = 0;  // stage core, or the leaf node
  std::size_t size = 0;
  std::uint64_t leaves = 0;
  std::map<std::uint64_t, double> omega;  // leaf-level pattern → P^v{ω}
  std::size_t children = 0;               // pickable children; 2^children direct patterns
};

struct PairPropagation {
  std::vector<NodePairs> leaves;  // one per sampled argument
  std::vector<NodePairs> stages;  // bottom-up, root last
  const NodePairs& root() const { return stages.back(); }
};

/// P^v{ω} = ∏_{i∈I^v} ((1-1/n_i) P^i{ω∩I_0^i} + (1/n_i) δ_{i,ω}), with
/// P^v{∅} = 1 at the leaves.
inline PairPropagation propagate_pair_probabilities(const WavePlan& plan, std::uint64_t budget = enumeration_budget()) {
  const auto& spec = plan.spec();
  require(spec.arguments() <= 63, ErrorCode::budget_exceeded, "more than 63 sampled leaves");
  PairPropagation out;
  for (std::size_t a = 0; a < spec.arguments(); ++a)
    out.leaves.push_back({static_cast<NodeId>(a + 1), plan.leaf_size(a), std::uint64_t{1} << a, {{0, 1.0}}, 0});
  for (std::size_t s = 0; s < plan.stages().size(); ++s) {
    const auto& st = plan.stages()[s];
    NodePairs np;
    np.node = st.core;
    np.size = st.size;
    np.children = st.children.size();
    std::map<std::uint64_t, double> cur{{0, 1.0}};
    for (const auto& ch : st.children) {
      const NodePairs& child = ch.is_stage ? out.stages[ch.index] : out.leaves[ch.index];
      const double inv = 1.0 / static_cast<double>(child.size);
      std::map<std::uint64_t, double> next;
      for (const auto& [w, p] : cur) {
        for (const auto& [wc, pc] : child.omega)
          if (pc * (1.0 - inv) > 0.0) next[w | wc] += p * (1.0 - inv) * pc;
        next[w | child.leaves] += p * inv;
      }
      check_budget(next.size(), budget, "pair-probability states");
      cur = std::move(next);
      np.leaves |= child.leaves;
    }
    std::erase_if(cur, [](const auto& kv) { return kv.second == 0.0; });
    np.omega = std::move(cur);
    out.stages.push_back(std::move(np));
  }
  return out;
}

/// Variance of the wave estimator: Eq. for Var Θ* with P^k{ω} as pair weights
/// and r = n_root.
template <typename Source>
VarianceReport hierarchical_variance(const SystemSpec& spec, const Source& src, const NodeSizes& sizes,
                                     const MomentOptions& opt = {}) {
  const auto& layout = detail::layout_of(src);
  const auto leaf_sizes = wave_leaf_sizes(spec, layout);
  const WavePlan plan(spec, leaf_sizes, sizes);
  const auto prop = propagate_pair_probabilities(plan, opt.budget);
  VarianceReport rep;
  rep.r = plan.root().size;
  const auto fm = first_moments(spec, src, opt);
  rep.mu = fm.mu;
  rep.mu2 = fm.mu2;
  double mu11 = 0.0, var11 = 0.0;
  bool exact = fm.mu.exact && fm.mu2.exact;
  std::vector<std::pair<std::uint64_t, double>> rows(prop.root().omega.begin(), prop.root().omega.end());
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (std::popcount(a.first) != std::popcount(b.first)) return std::popcount(a.first) < std::popcount(b.first);
    return mask_members(a.first) < mask_members(b.first);
  });
  for (const auto& [mask, p] : rows) {
    OmegaPair w{mask_members(mask)};
    PairRow row{alpha_from_omega(w, layout), w, p};
    const auto mom = conditional_mixed_moment(spec, src, row.alpha, opt);
    mu11 += p * mom.value;
    var11 += p * p * mom.se * mom.se;
    exact = exact && mom.exact;
    rep.rows.push_back({row, mom});
  }
  rep.mu11 = {mu11, std::sqrt(var11), exact};
  rep.exact = exact;
  const double rd = static_cast<double>(rep.r);
  const double mu = rep.mu.value;
  rep.variance = rep.mu2.value / rd + (rd - 1.0) / rd * mu11 - mu * mu;
  rep.limit_variance = mu11 - mu * mu;
  const double a = rep.mu2.se / rd, b = (rd - 1.0) / rd * rep.mu11.se, c = 2.0 * mu * rep.mu.se;
  rep.variance_se = std::sqrt(a * a + b * b + c * c);
  return rep;
}

inline nlohmann::json to_json(const PairPropagation& prop) {
  auto node_json = [](const NodePairs& np) {
    nlohmann::json rows = nlohmann::json::array();
    std::vector<std::pair<std::uint64_t, double>> sorted(np.omega.begin(), np.omega.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
      if (std::popcount(a.first) != std::popcount(b.first)) return std::popcount(a.first) < std::popcount(b.first);
      return mask_members(a.first) < mask_members(b.first);
    });
    for (const auto& [w, p] : sorted)
      rows.push_back({{"omega", mask_members(w)}, {"probability", detail::round_sig(p, 12)}});
    return nlohmann::json{{"node", np.node},
                          {"n", np.size},
                          {"leaves", mask_members(np.leaves)},
                          {"children", np.children},
                          {"direct_patterns", std::uint64_t{1} << np.children},
                          {"pairs", rows}};
  };
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& st : prop.stages) stages.push_back(node_json(st));
  return {{"stages", stages}};
}

}  // namespace resamplekit
