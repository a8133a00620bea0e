#pragma once

// Comparison of two renewal processes: Θ = P{D_{m_X} > S_{m_Y}} where D and S
// are sums of m_X inter-renewal times X and m_Y times Y. The failure-absence
// reading uses m_Y = m_X - K.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "resamplekit/distributions.hpp"
#include "resamplekit/error.hpp"
#include "resamplekit/parallel.hpp"
#include "resamplekit/quadrature.hpp"
#include "resamplekit/random.hpp"
#include "resamplekit/resampling.hpp"
#include "resamplekit/stats.hpp"

namespace resamplekit {

struct RenewalLayout {
  std::size_t n_x = 0, n_y = 0;
  std::size_t m_x = 0, m_y = 0;

  void validate() const {
    require(n_x >= 2 * m_x && n_y >= 2 * m_y, ErrorCode::infeasible_layout,
            "need n_X >= 2 m_X and n_Y >= 2 m_Y (got n_X=" + std::to_string(n_x) + ", m_X=" + std::to_string(m_x) +
                ", n_Y=" + std::to_string(n_y) + ", m_Y=" + std::to_string(m_y) + ")");
    require(m_x >= 1, ErrorCode::invalid_argument, "m_X must be at least 1");
  }

  /// Failure-absence reading: m_X = m, m_Y = m - K.
  static RenewalLayout threshold(std::size_t n_x, std::size_t n_y, std::size_t m, std::size_t k) {
    require(k <= m, ErrorCode::invalid_argument, "K must not exceed m");
    return {n_x, n_y, m, m - k};
  }
};

struct RenewalPair {
  std::vector<double> hx, hy;
  std::size_t m_x = 0, m_y = 0;

  RenewalLayout layout() const { return {hx.size(), hy.size(), m_x, m_y}; }

  void validate() const {
    for (double v : hx) require(std::isfinite(v), ErrorCode::non_finite, "H_X contains a non-finite value");
    for (double v : hy) require(std::isfinite(v), ErrorCode::non_finite, "H_Y contains a non-finite value");
    layout().validate();
  }

  /// Negative inter-renewal times are allowed (normal example) but break the
  /// renewal reading; callers may warn on a nonzero count.
  std::size_t negative_values() const {
    return static_cast<std::size_t>(std::count_if(hx.begin(), hx.end(), [](double v) { return v < 0; }) +
                                    std::count_if(hy.begin(), hy.end(), [](double v) { return v < 0; }));
  }
};

namespace detail {

inline double sum_of_draw(const std::vector<double>& h, std::size_t m, Stream& rng, std::vector<std::size_t>& idx) {
  idx.resize(m);
  draw_distinct(rng, h.size(), m, idx);
  double s = 0.0;
  for (std::size_t i : idx) s += h[i];
  return s;
}

}  // namespace detail

/// Θ*q = 1{sum of m_X draws from H_X > sum of m_Y draws from H_Y}, both
/// without replacement; realization q uses substream (seed, q).
inline EstimateResult estimate_exceedance(const RenewalPair& pair, std::size_t r, std::uint64_t seed,
                                          const EstimateOptions& opt = {}) {
  pair.validate();
  require(r >= 1, ErrorCode::invalid_argument, "r must be at least 1");
  std::vector<double> values(r);
  parallel_for(r, opt.par, [&](std::size_t q) {
    Stream rng(seed, {q});
    std::vector<std::size_t> idx;
    const double d = detail::sum_of_draw(pair.hx, pair.m_x, rng, idx);
    const double s = detail::sum_of_draw(pair.hy, pair.m_y, rng, idx);
    values[q] = d > s ? 1.0 : 0.0;
  });
  return summarize(std::move(values), seed, opt.keep_values);
}

/// Normal inter-renewal times: every partial sum is normal, so F_com and F_dif
/// are normal cdfs.
struct NormalKit {
  Normal x, y;

  /// Mean and variance of D_a - S_b.
  std::array<double, 2> difference(std::size_t a, std::size_t b) const {
    const double ad = static_cast<double>(a), bd = static_cast<double>(b);
    return {ad * x.mean - bd * y.mean, ad * x.sd * x.sd + bd * y.sd * y.sd};
  }

  double theta(std::size_t m_x, std::size_t m_y) const {
    const auto [mean, var] = difference(m_x, m_y);
    if (var == 0.0) return mean > 0.0 ? 1.0 : 0.0;
    return normal_cdf(mean / std::sqrt(var));
  }

  /// μ11(α) = ∫ F_dif(z)² dF_com(z), C_com = D_αX - S_αY, C_dif = S_{m_Y-αY} - D_{m_X-αX}.
  double mu11(std::array<std::size_t, 2> alpha, std::size_t m_x, std::size_t m_y, QuadratureOptions q = {}) const {
    const auto [c, vc] = difference(alpha[0], alpha[1]);
    const auto [nd, vd] = difference(m_x - alpha[0], m_y - alpha[1]);
    const double d = -nd;
    if (vc == 0.0 && vd == 0.0) return c > d ? 1.0 : 0.0;
    if (vd == 0.0) return normal_sf((d - c) / std::sqrt(vc));
    const double sd = std::sqrt(vd);
    if (vc == 0.0) {
      const double f = normal_cdf((c - d) / sd);
      return f * f;
    }
    const double sc = std::sqrt(vc);
    return integrate_real_line(
        [&](double u) {
          const double f = normal_cdf((c + sc * u - d) / sd);
          return f * f * normal_pdf(u);
        },
        0.0, 1.0, q);
  }
};

/// Finite-support inter-renewal laws (equally weighted atoms): the m-fold
/// convolutions are computed exactly as discrete laws.
class DiscreteKit {
 public:
  DiscreteKit(std::vector<double> x_atoms, std::vector<double> y_atoms, std::size_t max_atoms = 1'000'000)
      : x_(law_of(std::move(x_atoms))), y_(law_of(std::move(y_atoms))), max_atoms_(max_atoms) {}

  double theta(std::size_t m_x, std::size_t m_y) const { return mu11({m_x, m_y}, m_x, m_y); }

  double mu11(std::array<std::size_t, 2> alpha, std::size_t m_x, std::size_t m_y, QuadratureOptions = {}) const {
    const auto com = difference(alpha[0], alpha[1]);
    const auto dif = difference(m_x - alpha[0], m_y - alpha[1]);
    // C_com > C_dif with C_dif = -(D - S) over the distinct parts.
    double total = 0.0, below = 0.0;
    auto it = dif.rbegin();  // atoms of -dif in increasing order
    for (const auto& [c, pc] : com) {
      while (it != dif.rend() && -it->first < c) {
        below += it->second;
        ++it;
      }
      total += pc * below * below;
    }
    return total;
  }

 private:
  using Law = std::map<double, double>;

  static Law law_of(std::vector<double> atoms) {
    require(!atoms.empty(), ErrorCode::invalid_argument, "discrete law needs at least one atom");
    Law out;
    for (double v : atoms) out[v] += 1.0 / static_cast<double>(atoms.size());
    return out;
  }

  Law convolve(const Law& a, const Law& b) const {
    Law out;
    for (const auto& [va, pa] : a)
      for (const auto& [vb, pb] : b) out[va + vb] += pa * pb;
    require(out.size() <= max_atoms_, ErrorCode::budget_exceeded, "convolution exceeds the atom budget");
    return out;
  }

  Law power(const Law& base, std::size_t k, bool negate) const {
    Law out{{0.0, 1.0}};
    for (std::size_t i = 0; i < k; ++i) out = convolve(out, base);
    if (!negate) return out;
    Law neg;
    for (const auto& [v, p] : out) neg[-v] += p;
    return neg;
  }

  /// Law of D_a - S_b.
  Law difference(std::size_t a, std::size_t b) const { return convolve(power(x_, a, false), power(y_, b, true)); }

  Law x_, y_;
  std::size_t max_atoms_;
};

struct AlphaCell {
  std::array<std::size_t, 2> alpha{};
  double probability = 0.0;
  double mu11 = 0.0;
};

struct RenewalVariance {
  std::size_t r = 0;
  double theta = 0.0;
  double mu11 = 0.0;
  double variance = 0.0;        // Var Θ* for r realizations
  double limit_variance = 0.0;  // r → ∞
  std::vector<AlphaCell> cells;
};

/// Var Θ* = Θ/r + (r-1)/r μ11 - Θ², with μ11 = Σ_α P(α) μ11(α) over
/// α ∈ [0,m_X]×[0,m_Y] and P(α) the product of hypergeometric overlaps.
template <typename Kit>
RenewalVariance exceedance_variance(const RenewalLayout& layout, const Kit& kit, std::size_t r, Parallelism par = {},
                                    QuadratureOptions q = {}) {
  layout.validate();
  require(r >= 1, ErrorCode::invalid_argument, "r must be at least 1");
  RenewalVariance out;
  out.r = r;
  out.theta = kit.theta(layout.m_x, layout.m_y);
  const std::size_t ny = layout.m_y + 1;
  out.cells.resize((layout.m_x + 1) * ny);
  parallel_for(out.cells.size(), par, [&](std::size_t i) {
    auto& cell = out.cells[i];
    cell.alpha = {i / ny, i % ny};
    cell.probability = hypergeometric_overlap(layout.n_x, layout.m_x, cell.alpha[0]) *
                       hypergeometric_overlap(layout.n_y, layout.m_y, cell.alpha[1]);
    cell.mu11 = kit.mu11(cell.alpha, layout.m_x, layout.m_y, q);
  });
  for (const auto& c : out.cells) out.mu11 += c.probability * c.mu11;
  const double rd = static_cast<double>(r), th = out.theta;
  out.limit_variance = out.mu11 - th * th;
  out.variance = th / rd + (rd - 1.0) / rd * out.mu11 - th * th;
  return out;
}

/// Θ for known inter-renewal laws: closed form for two normals, exact
/// convolution for two finite laws.
inline double renewal_theta(const KnownDistribution& x, const KnownDistribution& y, std::size_t m_x,
                            std::size_t m_y) {
  const auto* nx = std::get_if<Normal>(&x.family());
  const auto* ny = std::get_if<Normal>(&y.family());
  if (nx && ny) return NormalKit{*nx, *ny}.theta(m_x, m_y);
  require(!x.continuous() && !y.continuous(), ErrorCode::invalid_argument,
          "analytic Θ needs two normal or two finite laws");
  return DiscreteKit(x.support(), y.support()).theta(m_x, m_y);
}

struct ComparatorStats {
  double mean = 0.0, variance = 0.0, bias = 0.0, mse = 0.0;
  double mean_se = 0.0, variance_se = 0.0, mse_se = 0.0;
};

struct RenewalComparison {
  double theta = 0.0;
  std::size_t r = 0, replications = 0;
  ComparatorStats plugin;      // Θ̂: r draws with replacement from each sample
  ComparatorStats resampling;  // Θ*: r draws without replacement
};

/// Redraws H_X ~ X^{n_X}, H_Y ~ Y^{n_Y} per replication (substream (seed, rep))
/// and reports both estimators against the analytic Θ.
inline RenewalComparison plugin_baseline(const RenewalLayout& layout, const KnownDistribution& x,
                                         const KnownDistribution& y, std::size_t r, std::size_t replications,
                                         std::uint64_t seed, Parallelism par = {}) {
  layout.validate();
  require(r >= 1 && replications >= 2, ErrorCode::invalid_argument, "need r >= 1 and at least 2 replications");
  RenewalComparison out;
  out.theta = renewal_theta(x, y, layout.m_x, layout.m_y);
  out.r = r;
  out.replications = replications;
  std::vector<double> plug(replications), res(replications);
  parallel_for(replications, par, [&](std::size_t rep) {
    Stream rng(seed, {rep});
    RenewalPair pair{std::vector<double>(layout.n_x), std::vector<double>(layout.n_y), layout.m_x, layout.m_y};
    for (auto& v : pair.hx) v = x.sample(rng);
    for (auto& v : pair.hy) v = y.sample(rng);
    std::size_t hits = 0, boot = 0;
    std::vector<std::size_t> idx;
    for (std::size_t q = 0; q < r; ++q) {
      double d = 0.0, s = 0.0;
      for (std::size_t i = 0; i < layout.m_x; ++i) d += pair.hx[rng.index(layout.n_x)];
      for (std::size_t i = 0; i < layout.m_y; ++i) s += pair.hy[rng.index(layout.n_y)];
      boot += d > s;
      d = detail::sum_of_draw(pair.hx, layout.m_x, rng, idx);
      s = detail::sum_of_draw(pair.hy, layout.m_y, rng, idx);
      hits += d > s;
    }
    plug[rep] = static_cast<double>(boot) / static_cast<double>(r);
    res[rep] = static_cast<double>(hits) / static_cast<double>(r);
  });
  auto stats = [&](const std::vector<double>& v) {
    MomentAccumulator m, sq;
    for (double e : v) {
      m.add(e);
      sq.add((e - out.theta) * (e - out.theta));
    }
    return ComparatorStats{m.mean(),  m.variance(),    m.mean() - out.theta, sq.mean(),
                           m.mean_se(), m.variance_se(), sq.mean_se()};
  };
  out.plugin = stats(plug);
  out.resampling = stats(res);
  return out;
}

inline nlohmann::json to_json(const RenewalVariance& v) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : v.cells)
    cells.push_back({{"alpha", c.alpha}, {"probability", c.probability}, {"mu11", c.mu11}});
  return {{"r", v.r},
          {"theta", v.theta},
          {"mu11", v.mu11},
          {"variance", v.variance},
          {"limit_variance", v.limit_variance},
          {"cells", cells}};
}

}  // namespace resamplekit
