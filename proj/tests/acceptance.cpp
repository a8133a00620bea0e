#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "resamplekit/coverage.hpp"
#include "resamplekit/damage.hpp"
#include "resamplekit/hierarchical.hpp"
#include "resamplekit/pairs.hpp"
#include "resamplekit/renewal.hpp"
#include "resamplekit/resampling.hpp"
#include "resamplekit/stats.hpp"

using namespace resamplekit;

namespace {

const char* kTwoOfThree = "kofn(2; ind(x1 > t), ind(x2 > t), ind(x3 > t))";
const char* kSixElement = "ind(min(max(x1,x2), min(x3,x4), sum(x5,x6)) < t)";

struct Verdict {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "MISS ") + what;
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. Grand mean of Θ* over sample redraws against the closed-form Θ.
Verdict unbiasedness() {
  Verdict v;
  const auto spec = parse_system(kTwoOfThree, {{"t", 1.0}});
  const double p = std::exp(-1.0), theta = 3 * p * p * (1 - p) + p * p * p;
  const auto g = KnownDistribution::exponential(1.0);
  MomentAccumulator acc;
  for (std::uint64_t rep = 0; rep < 10'000; ++rep) {
    Stream rng(101, {rep});
    std::vector<std::vector<double>> data(3, std::vector<double>(5));
    for (auto& col : data)
      for (auto& x : col) x = g.sample(rng);
    acc.add(estimate_theta(spec, SampleSet::distinct(data), 100, rep).estimate);
  }
  v.check(std::abs(acc.mean() - theta) <= 3 * acc.mean_se(),
          fmt("grand mean %.5f vs Theta %.5f (SE %.5f)", acc.mean(), theta, acc.mean_se()));
  return v;
}

// 2. Var Θ* from the pair calculus against replicated estimation with data redrawn.
Verdict variance_formula() {
  Verdict v;
  const auto spec = parse_system(kTwoOfThree, {{"t", 1.0}});
  const auto g = KnownDistribution::exponential(1.0);
  const std::size_t r = 10;
  MomentOptions mo;
  mo.seed = 5;
  mo.mc_draws = 1'000'000;
  const auto rep = resampling_variance(spec, GeneratorSource::distinct({3, 3, 3}, {g, g, g}), r, mo);
  MomentAccumulator acc;
  for (std::uint64_t i = 0; i < 100'000; ++i) {
    Stream rng(202, {i});
    std::vector<std::vector<double>> data(3, std::vector<double>(3));
    for (auto& col : data)
      for (auto& x : col) x = g.sample(rng);
    acc.add(estimate_theta(spec, SampleSet::distinct(data), r, i).estimate);
  }
  const double se = std::hypot(acc.variance_se(), rep.variance_se);
  v.check(std::abs(acc.variance() - rep.variance) <= 3 * se,
          fmt("formula %.6f vs simulated %.6f (combined SE %.6f)", rep.variance, acc.variance(), se));
  return v;
}

// 3. ω/α pair probabilities sum to one over random layouts.
Verdict closure() {
  Verdict v;
  Stream rng(303);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t k = 1 + rng.index(4);
    std::vector<Sample> samples;
    std::vector<std::size_t> arg_sample;
    for (std::size_t s = 0; s < k; ++s) {
      const std::size_t m = 1 + rng.index(4);
      samples.push_back({"H" + std::to_string(s), std::vector<double>(m + rng.index(30), 0.0)});
      for (std::size_t i = 0; i < m; ++i) arg_sample.push_back(s);
    }
    double sum = 0.0;
    for (const auto& row : enumerate_pairs(SampleSet(std::move(samples), std::move(arg_sample)))) sum += row.probability;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  v.check(worst <= 1e-12, fmt("max |sum P - 1| = %.3g over 200 layouts", worst));
  return v;
}

// 4. Root pair probabilities of the six-element tree against index tracking.
Verdict propagation() {
  Verdict v;
  const auto spec = parse_system(kSixElement, {{"t", 1.0}});
  const std::vector<std::size_t> leaf{3, 2, 4, 3, 2, 5};
  const std::size_t mid[3] = {2, 3, 2};
  const WavePlan plan(spec, leaf, {{7, mid[0]}, {8, mid[1]}, {9, mid[2]}});
  const auto prop = propagate_pair_probabilities(plan);
  std::map<std::uint64_t, double> count;
  const int passes = 1'000'000;
  Stream rng(404);
  for (int p = 0; p < passes; ++p) {
    // Two root elements; first-level elements pick their leaf indices lazily.
    std::map<std::pair<int, std::size_t>, std::pair<std::size_t, std::size_t>> memo;
    std::size_t idx[2][6];
    for (int e = 0; e < 2; ++e)
      for (int c = 0; c < 3; ++c) {
        const std::size_t a = rng.index(mid[c]);
        auto it = memo.find({c, a});
        if (it == memo.end())
          it = memo.emplace(std::pair{c, a}, std::pair{rng.index(leaf[2 * c]), rng.index(leaf[2 * c + 1])}).first;
        idx[e][2 * c] = it->second.first;
        idx[e][2 * c + 1] = it->second.second;
      }
    std::uint64_t w = 0;
    for (int i = 0; i < 6; ++i)
      if (idx[0][i] == idx[1][i]) w |= std::uint64_t{1} << i;
    count[w] += 1;
  }
  double chi2 = 0.0;
  int cells = 0;
  bool support = true;
  for (const auto& [w, c] : count) support = support && prop.root().omega.count(w);
  for (const auto& [w, p] : prop.root().omega) {
    const double expected = p * passes;
    const double observed = count.count(w) ? count[w] : 0.0;
    chi2 += (observed - expected) * (observed - expected) / expected;
    ++cells;
  }
  const double crit = boost::math::quantile(boost::math::chi_squared(cells - 1), 0.99);
  v.check(support, "observed patterns inside the propagated support");
  v.check(chi2 < crit, fmt("chi2 %.2f < %.2f (df %d, 1%%)", chi2, crit, cells - 1));
  return v;
}

// 5. Damage model anchors and simulated E(E*X_5).
Verdict damage() {
  Verdict v;
  const DamageTruth truth{0.5, KnownDistribution::triangular(0, 2, 4), 5.0};
  const auto pt = poisson_truth(truth, 2);
  v.check(std::abs(pt.ex - 1.0) <= 5e-4 && std::abs(pt.p_x[0] - std::exp(-1.0)) <= 5e-4,
          fmt("EX_5 %.6f, P(0) %.6f", pt.ex, pt.p_x[0]));
  const auto e8 = estimator_expectation(truth, 8);
  v.check(std::abs(e8.px_formula[1] - 0.368) <= 0.01, fmt("EP*(1) at n_A=8 %.4f", e8.px_formula[1]));
  const std::array<double, 6> table{0.89, 0.96, 0.99, 0.997, 0.99, 0.99};
  for (std::size_t na = 3; na <= 8; ++na) {
    const auto d = damage_variance_mc(truth, na, na, 200, 10'000, 505 + na);
    const double ref = table[na - 3];
    v.check(std::abs(d.resampling.mean - ref) <= 0.05,
            fmt("n_A=%zu E(E*X_5) %.3f (SE %.3f) vs %.3f", na, d.resampling.mean, d.resampling.mean_se, ref));
  }
  return v;
}

// 6. Renewal variance table entries and μ11(α) against conditional simulation.
Verdict renewal() {
  Verdict v;
  const NormalKit kit{{2, 1}, {2, 1}};
  const double v0 = exceedance_variance(RenewalLayout::threshold(10, 10, 5, 0), kit, 1000).variance;
  const double v3 = exceedance_variance(RenewalLayout::threshold(10, 10, 5, 3), kit, 1000).variance;
  v.check(std::abs(v0 - 0.08) <= 0.01, fmt("K=0 Var %.4f vs .08", v0));
  v.check(std::abs(v3 - 0.001) <= 0.01, fmt("K=3 Var %.5f vs .001", v3));
  std::mt19937_64 gen(606);
  std::normal_distribution<double> x(2, 1), y(2, 1);
  auto sum = [&](auto& dist, std::size_t k) {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += dist(gen);
    return s;
  };
  int within = 0;
  for (int cell = 0; cell < 10; ++cell) {
    const std::size_t mx = 5, my = 5 - gen() % 4;
    const std::array<std::size_t, 2> a{gen() % (mx + 1), gen() % (my + 1)};
    const std::size_t n = 200'000;
    double hits = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double com = sum(x, a[0]) - sum(y, a[1]);
      const double d1 = sum(x, mx - a[0]) - sum(y, my - a[1]);
      const double d2 = sum(x, mx - a[0]) - sum(y, my - a[1]);
      hits += (com + d1 > 0) && (com + d2 > 0);
    }
    const double p = hits / n, se = std::sqrt(p * (1 - p) / n);
    within += std::abs(kit.mu11(a, mx, my) - p) <= 3 * se + 1e-12;
  }
  v.check(within == 10, fmt("mu11 within 3 SE on %d/10 alpha cells", within));
  return v;
}

// 7. Coverage table row (3,3,3) by simulation; exact against simulation on (2,2,2).
Verdict coverage() {
  Verdict v;
  const OrderFunctional f(parse_system("cmp(x3 < min(x1, x2))"));
  const std::vector<KnownDistribution> gens{KnownDistribution::exponential(3), KnownDistribution::exponential(3),
                                            KnownDistribution::exponential(2)};
  const std::array<double, 5> gammas{0.5, 0.6, 0.7, 0.8, 0.9};
  const std::array<double, 5> row{0.533, 0.576, 0.625, 0.686, 0.770};
  CoverageOptions mc;
  mc.mode = CoverageMode::mc;
  mc.replications = 10'000;
  mc.seed = 707;
  std::string cells;
  bool ok = true;
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    const auto rep = coverage_R(f, gens, {3, 3, 3}, 0.25, gammas[i], 10, 16, mc);
    ok = ok && std::abs(rep.coverage - row[i]) <= 0.015;
    cells += fmt("%s%.4f", i ? "/" : "", rep.coverage);
  }
  v.check(ok, "(3,3,3) mc R " + cells + " vs .533/.576/.625/.686/.770 within .015");
  CoverageOptions exact;
  exact.mode = CoverageMode::exact;
  const auto law = ordering_law(f, gens, {2, 2, 2}, exact);
  int agree = 0;
  for (double g : gammas) {
    const double re = coverage_from_law(law, f, 0.25, g, 10, 16).coverage;
    const auto rm = coverage_R(f, gens, {2, 2, 2}, 0.25, g, 10, 16, mc);
    agree += std::abs(re - rm.coverage) <= 3 * rm.coverage_se;
  }
  v.check(agree == 5, fmt("(2,2,2) exact vs mc within 3 SE for %d/5 gammas", agree));
  return v;
}

// 8. Enumeration against exhaustive averaging, q against brute-force counting.
Verdict oracles() {
  Verdict v;
  const std::vector<std::string> systems{kTwoOfThree, "ind(min(x1, x2, x3) > t)", "ind(sum(max(x1, x2), x3) < t)",
                                         "kofn(1; ind(x1 < t), ind(min(x2, x3) > t))"};
  const std::vector<std::string> functionals{"cmp(x3 < min(x1, x2))", "cmp(max(x1, x2) < x3)",
                                             "kofn(1; cmp(x1 < x2), cmp(x3 > x4))", "cmp(min(x1, x2) < max(x3, x4))"};
  Stream rng(808);
  int equal = 0, q_equal = 0;
  for (int inst = 0; inst < 50; ++inst) {
    // Random system, threshold and layout (1 to 3 samples feeding 3 arguments).
    const auto spec = parse_system(systems[inst % systems.size()], {{"t", 0.5 + rng.uniform() * 2}});
    std::vector<std::size_t> arg_sample(3);
    const std::size_t k = 1 + rng.index(3);
    for (auto& s : arg_sample) s = rng.index(k);
    std::vector<Sample> samples;
    for (std::size_t s = 0; s < k; ++s) {
      const auto need = static_cast<std::size_t>(std::count(arg_sample.begin(), arg_sample.end(), s));
      std::vector<double> vals(std::max<std::size_t>(need, 1) + rng.index(4));
      for (auto& x : vals) x = -std::log(1.0 - rng.uniform());
      samples.push_back({"H" + std::to_string(s), vals});
    }
    const SampleSet set(std::move(samples), arg_sample);
    equal += estimate_theta_enumerated(spec, set).estimate ==
             exhaustive_theta(spec, set);

    // Random order functional and sample sizes; count favorable index tuples.
    const OrderFunctional f(parse_system(functionals[inst % functionals.size()]));
    std::vector<std::vector<double>> data(f.arity());
    std::uint64_t total = 1;
    for (auto& col : data) {
      col.resize(1 + rng.index(4));
      for (auto& x : col) x = rng.uniform();
      total *= col.size();
    }
    std::uint64_t favorable = 0;
    std::vector<std::size_t> idx(f.arity(), 0);
    std::vector<double> xs(f.arity());
    for (std::uint64_t c = 0; c < total; ++c) {
      std::uint64_t rest = c;
      for (std::size_t a = 0; a < f.arity(); ++a) {
        xs[a] = data[a][rest % data[a].size()];
        rest /= data[a].size();
      }
      favorable += f.spec().evaluate(xs) == 1.0;
    }
    q_equal += q_given_ordering(f, w_vector(data)) * static_cast<double>(total) == static_cast<double>(favorable);
  }
  v.check(equal == 50, fmt("enumeration == exhaustive on %d/50", equal));
  v.check(q_equal == 50, fmt("q == brute force on %d/50", q_equal));
  return v;
}

std::string run_cli(const std::string& args) {
  const std::string cmd = std::string(RESAMPLEKIT_CLI) + " " + args + " 2>&1";
  std::FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return "<popen failed>";
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  if (status != 0) out += "<exit " + std::to_string(status) + ">";
  return out;
}

// 9. Repro output is byte-identical across runs and thread counts.
Verdict determinism() {
  Verdict v;
  for (const char* table : {"table-coverage", "table-damage", "table-renewal"}) {
    const std::string a = run_cli(std::string("repro ") + table + " --threads 1");
    const std::string b = run_cli(std::string("repro ") + table + " --threads 1");
    const std::string c = run_cli(std::string("repro ") + table + " --threads 4");
    const bool ok = a == b && a == c && a.find("<exit") == std::string::npos && a.size() > 100;
    v.check(ok, fmt("%s identical over 2 runs and threads 1/4 (%zu bytes)", table, a.size()));
  }
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"unbiasedness", unbiasedness}, {"variance formula", variance_formula},
      {"pair closure", closure},      {"hierarchical propagation", propagation},
      {"damage model", damage},       {"renewal comparison", renewal},
      {"coverage table", coverage},   {"oracle equivalence", oracles},
      {"determinism", determinism}};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (argc > 1 && std::atoi(argv[1]) != static_cast<int>(i + 1)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.check(false, std::string("threw: ") + e.what());
    }
    failures += !v.pass;
    std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
