#pragma once

#include <array>
#include <string>
#include <vector>

#include "resamplekit/coverage.hpp"
#include "resamplekit/damage.hpp"
#include "resamplekit/renewal.hpp"
#include "resamplekit/report.hpp"

namespace resamplekit::repro {

// Seeds and replication counts are fixed here so every run of a table is
// byte-identical and bounded in time.

inline constexpr std::uint64_t kSeed = 20240601;

/// Coverage of the first-failure interval: R exact and by simulation for the
/// seven size rows and γ = 0.5 ... 0.9.
inline Table coverage_table(Parallelism par = {}) {
  const char* functional = "cmp(x3 < min(x1, x2))";
  const std::vector<KnownDistribution> gens{KnownDistribution::exponential(3), KnownDistribution::exponential(3),
                                            KnownDistribution::exponential(2)};
  const std::vector<std::vector<std::size_t>> sizes{{3, 3, 3}, {9, 9, 3}, {4, 4, 4}, {6, 6, 4},
                                                    {5, 5, 5}, {3, 3, 8}, {4, 4, 7}};
  const std::array<double, 5> gammas{0.5, 0.6, 0.7, 0.8, 0.9};
  const std::size_t k = 10, r = 16, replications = 10'000;

  const OrderFunctional f(parse_system(functional));
  const double theta = order_theta(f, gens);
  Table t;
  t.name = "coverage";
  t.columns = {"sizes", "method"};
  for (double g : gammas) t.columns.push_back("gamma=" + format_sig(g, 2));
  t.settings = {{"functional", functional},
                {"generators", {"exp:3", "exp:3", "exp:2"}},
                {"theta", theta},
                {"k", k},
                {"r", r},
                {"mc_replications", replications},
                {"seed", kSeed}};
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    std::string label;
    for (std::size_t c : sizes[i]) label += (label.empty() ? "" : ",") + std::to_string(c);
    CoverageOptions opt;
    opt.par = par;
    opt.row_limit = 0;
    const auto law = ordering_law(f, gens, sizes[i], opt);
    std::vector<Cell> exact{Cell::text(label), Cell::text("exact")}, mc{Cell::text(label), Cell::text("mc")};
    for (double g : gammas) {
      exact.push_back(Cell::real(coverage_from_law(law, f, theta, g, k, r).coverage));
      CoverageOptions mo;
      mo.mode = CoverageMode::mc;
      mo.replications = replications;
      mo.seed = kSeed + i;
      mo.par = par;
      const auto rep = coverage_R(f, gens, sizes[i], theta, g, k, r, mo);
      mc.push_back(Cell::measured(rep.coverage, rep.coverage_se));
    }
    t.rows.push_back(std::move(exact));
    t.rows.push_back(std::move(mc));
  }
  return t;
}

/// E, Var and MSE of the resampling and plug-in estimators of EX_t for
/// n_A = n_B = 3 ... 8, with the closed-form and exact expectations of E*X_t.
inline Table damage_table(Parallelism par = {}) {
  const DamageTruth truth{0.5, KnownDistribution::triangular(0, 2, 4), 5.0};
  const std::size_t r = 1000, replications = 10'000;
  Table t;
  t.name = "damage";
  t.columns = {"n_A",          "EX_t",           "E(E*X)_formula", "E(E*X)_exact", "E(E*X)",
               "Var(E*X)",     "MSE(E*X)",       "E(plugin)",      "Var(plugin)",  "MSE(plugin)"};
  t.settings = {{"lambda", truth.lambda},
                {"degeneration", "triangular:0,2,4"},
                {"t", truth.t},
                {"r", r},
                {"replications", replications},
                {"seed", kSeed}};
  for (std::size_t na = 3; na <= 8; ++na) {
    const auto e = estimator_expectation(truth, na);
    const auto v = damage_variance_mc(truth, na, na, r, replications, kSeed + na, par);
    t.rows.push_back({Cell::integer(static_cast<long long>(na)), Cell::real(v.truth), Cell::real(e.ex_formula),
                      Cell::real(e.ex_exact), Cell::measured(v.resampling.mean, v.resampling.mean_se),
                      Cell::measured(v.resampling.variance, v.resampling.variance_se),
                      Cell::measured(v.resampling.mse, v.resampling.mse_se),
                      Cell::measured(v.plugin.mean, v.plugin.mean_se),
                      Cell::measured(v.plugin.variance, v.plugin.variance_se),
                      Cell::measured(v.plugin.mse, v.plugin.mse_se)});
  }
  return t;
}

/// Var Θ* from the pair calculus against simulated plug-in and resampling
/// estimators, normal(2,1) inter-renewal times, n = 10, 12 and K = 0 ... 3.
inline Table renewal_table(Parallelism par = {}) {
  const auto law = KnownDistribution::normal(2, 1);
  const NormalKit kit{{2, 1}, {2, 1}};
  const std::size_t r = 1000, replications = 2000;
  Table t;
  t.name = "renewal";
  t.columns = {"n", "m", "K", "theta", "Var(Theta*)", "Var(Theta*)_mc", "Var(plugin)", "Bias(plugin)", "MSE(plugin)"};
  t.settings = {{"x", "normal:2,1"}, {"y", "normal:2,1"}, {"r", r}, {"replications", replications}, {"seed", kSeed}};
  for (std::size_t n : {10u, 12u})
    for (std::size_t k = 0; k <= 3; ++k) {
      const std::size_t m = n / 2;
      const auto layout = RenewalLayout::threshold(n, n, m, k);
      const auto v = exceedance_variance(layout, kit, r, par);
      const auto c = plugin_baseline(layout, law, law, r, replications, kSeed + 10 * n + k, par);
      t.rows.push_back({Cell::integer(static_cast<long long>(n)), Cell::integer(static_cast<long long>(m)),
                        Cell::integer(static_cast<long long>(k)), Cell::real(v.theta), Cell::real(v.variance),
                        Cell::measured(c.resampling.variance, c.resampling.variance_se),
                        Cell::measured(c.plugin.variance, c.plugin.variance_se),
                        Cell::measured(c.plugin.bias, c.plugin.mean_se),
                        Cell::measured(c.plugin.mse, c.plugin.mse_se)});
    }
  return t;
}

}  // namespace resamplekit::repro
