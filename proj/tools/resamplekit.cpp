#include <charconv>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "resamplekit/coverage.hpp"
#include "resamplekit/damage.hpp"
#include "resamplekit/hierarchical.hpp"
#include "resamplekit/pairs.hpp"
#include "resamplekit/renewal.hpp"
#include "resamplekit/repro.hpp"
#include "resamplekit/report.hpp"
#include "resamplekit/resampling.hpp"
#include "resamplekit/samples.hpp"
#include "resamplekit/system.hpp"

using namespace resamplekit;
using nlohmann::json;

namespace {

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return 10;
    case ErrorCode::syntax: return 11;
    case ErrorCode::cyclic_reference: return 12;
    case ErrorCode::unknown_input: return 13;
    case ErrorCode::arity_mismatch: return 14;
    case ErrorCode::unknown_node: return 15;
    case ErrorCode::infeasible_layout: return 16;
    case ErrorCode::infeasible_pair: return 17;
    case ErrorCode::budget_exceeded: return 18;
    case ErrorCode::non_finite: return 19;
    case ErrorCode::quadrature: return 20;
    case ErrorCode::tie: return 21;
    case ErrorCode::file_not_found: return 22;
    case ErrorCode::schema: return 23;
  }
  return 1;
}

int report_error(std::string_view name, int code, const std::string& message) {
  std::cerr << json{{"error", name}, {"exit_code", code}, {"message", message}}.dump() << "\n";
  return code;
}

struct RunConfig {
  std::string subcommand;
  std::string spec, samples, blocks, ha, hb, hx, hy, rows_csv;
  std::vector<std::string> params, node_sizes;
  std::optional<std::uint64_t> seed;
  std::size_t r = 1000, k = 10, replications = 0, max_i = 10;
  std::size_t m = 5, n = 0;
  std::string k_range = "0", n_a = "", sizes, gen, x, y, deg, mode = "exact";
  std::optional<double> t, theta;
  double lambda = 1.0, gamma = 0.9;
  bool enumerate = false, variance = false, pairs = false;
  unsigned threads = 1;
  std::string format = "json";

  Parallelism par() const { return {threads}; }

  std::uint64_t require_seed() const {
    require(seed.has_value(), ErrorCode::invalid_argument,
            "'" + subcommand + "' draws random numbers; pass --seed");
    return *seed;
  }
};

struct Output {
  json doc;
  Table table;
};

// "0..3" or "0,1,3".
std::vector<std::size_t> parse_index_list(const std::string& text) {
  std::vector<std::size_t> out;
  auto number = [&](std::string_view s) {
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && p == s.data() + s.size() && !s.empty(), ErrorCode::schema,
            "expected a non-negative integer, got '" + std::string(s) + "'");
    return v;
  };
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const std::size_t lo = number(std::string_view(text).substr(0, dots));
    const std::size_t hi = number(std::string_view(text).substr(dots + 2));
    require(lo <= hi, ErrorCode::schema, "empty range '" + text + "'");
    for (std::size_t i = lo; i <= hi; ++i) out.push_back(i);
    return out;
  }
  std::string_view rest(text);
  for (;;) {
    const auto comma = rest.find(',');
    out.push_back(number(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

// "exp:3,normal:2,1,exp:2": a new item starts at every token with a colon.
std::vector<KnownDistribution> parse_distribution_list(const std::string& text) {
  std::vector<std::string> items;
  std::string_view rest(text);
  for (;;) {
    const auto comma = rest.find(',');
    const std::string token(rest.substr(0, comma));
    if (token.find(':') != std::string::npos || items.empty()) items.push_back(token);
    else items.back() += "," + token;
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  std::vector<KnownDistribution> out;
  for (const auto& item : items) out.push_back(parse_distribution(item));
  return out;
}

std::vector<double> load_column(const std::string& path) {
  auto samples = load_samples(path);
  require(samples.size() == 1, ErrorCode::schema, path + ": expected exactly one sample column");
  return std::move(samples[0].values);
}

struct SystemInput {
  SystemSpec spec;
  std::optional<json> blocks;
};

// A spec file holds either the expression text or {"expr", "params", "blocks"}.
SystemInput load_system(const RunConfig& cfg) {
  require(!cfg.spec.empty(), ErrorCode::invalid_argument, "--spec is required");
  const std::string text = read_text_file(cfg.spec);
  std::string expr = text;
  std::map<std::string, double> params;
  std::optional<json> blocks;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    const json doc = json::parse(text);
    require(doc.contains("expr") && doc["expr"].is_string(), ErrorCode::schema, cfg.spec + ": missing string 'expr'");
    expr = doc["expr"].get<std::string>();
    if (doc.contains("params")) {
      require(doc["params"].is_object(), ErrorCode::schema, cfg.spec + ": 'params' must be an object");
      for (const auto& [name, v] : doc["params"].items()) {
        require(v.is_number(), ErrorCode::schema, cfg.spec + ": parameter '" + name + "' must be a number");
        params[name] = v.get<double>();
      }
    }
    if (doc.contains("blocks")) blocks = doc["blocks"];
  }
  for (const auto& p : cfg.params) {
    const auto eq = p.find('=');
    require(eq != std::string::npos, ErrorCode::schema, "--param expects name=value, got '" + p + "'");
    params[p.substr(0, eq)] = std::stod(p.substr(eq + 1));
  }
  if (cfg.t) params["t"] = *cfg.t;
  if (!cfg.blocks.empty()) blocks = json::parse(read_text_file(cfg.blocks));
  return {parse_system(expr, params), std::move(blocks)};
}

SampleSet load_sample_set(const RunConfig& cfg, const SystemInput& sys) {
  require(!cfg.samples.empty(), ErrorCode::invalid_argument, "--samples is required");
  return make_sample_set(load_samples(cfg.samples), sys.blocks ? &*sys.blocks : nullptr);
}

Table key_value_table(const std::string& name, std::vector<std::pair<std::string, Cell>> rows) {
  Table t{name, {"quantity", "value"}, {}, json::object()};
  for (auto& [k, v] : rows) t.rows.push_back({Cell::text(k), std::move(v)});
  return t;
}

Cell moment_cell(double value, bool exact, double se) { return exact ? Cell::real(value) : Cell::measured(value, se); }

Output run_estimate(const RunConfig& cfg) {
  const auto sys = load_system(cfg);
  const auto samples = load_sample_set(cfg, sys);
  EstimateResult est;
  if (cfg.enumerate) {
    est = estimate_theta_enumerated(sys.spec, samples);
  } else {
    est = estimate_theta(sys.spec, samples, cfg.r, cfg.require_seed(), {cfg.par(), false});
  }
  const std::size_t r = est.realizations;
  MomentOptions mo;
  mo.seed = cfg.seed.value_or(0);
  mo.par = cfg.par();
  const auto var = resampling_variance(sys.spec, EmpiricalSource{samples}, r, mo);
  json doc{{"system", sys.spec.to_string(sys.spec.root())},
           {"estimate", est.estimate},
           {"realizations", r},
           {"enumerated", cfg.enumerate},
           {"empirical_variance", est.empirical_variance},
           {"variance", to_json(var)}};
  if (!cfg.enumerate) doc["seed"] = est.seed;
  std::vector<std::pair<std::string, Cell>> rows{
      {"estimate", Cell::real(est.estimate)},
      {"realizations", Cell::integer(static_cast<long long>(r))},
      {"empirical_variance", Cell::real(est.empirical_variance)},
      {"variance", moment_cell(var.variance, var.exact, var.variance_se)}};
  if (!cfg.gen.empty()) {
    std::vector<std::size_t> sizes;
    for (std::size_t s = 0; s < samples.sample_count(); ++s) sizes.push_back(samples.sample(s).values.size());
    std::vector<std::size_t> layout;
    for (std::size_t a = 0; a < samples.arguments(); ++a) layout.push_back(samples.sample_of(a));
    const auto src = GeneratorSource::make(sizes, layout, parse_distribution_list(cfg.gen));
    const auto gv = resampling_variance(sys.spec, src, r, mo);
    doc["generator_variance"] = to_json(gv);
    rows.push_back({"generator_variance", moment_cell(gv.variance, gv.exact, gv.variance_se)});
  }
  return {doc, key_value_table("estimate", std::move(rows))};
}

Output run_wave(const RunConfig& cfg) {
  const auto sys = load_system(cfg);
  const auto samples = load_sample_set(cfg, sys);
  NodeSizes sizes;
  for (const auto& s : cfg.node_sizes) {
    const auto eq = s.find('=');
    require(eq != std::string::npos, ErrorCode::schema, "--size expects node=n, got '" + s + "'");
    sizes[static_cast<NodeId>(parse_index_list(s.substr(0, eq)).at(0))] = parse_index_list(s.substr(eq + 1)).at(0);
  }
  const WavePlan plan(sys.spec, wave_leaf_sizes(sys.spec, samples), sizes);
  json stages = json::array();
  for (const auto& st : plan.stages())
    stages.push_back({{"node", st.core}, {"expr", sys.spec.to_string(st.top)}, {"n", st.size}});
  const auto est = wave_estimate(sys.spec, samples, sizes, cfg.require_seed(), {1, {}, cfg.par()});
  json doc{{"estimate", est.estimate}, {"root_size", est.realizations}, {"seed", est.seed}, {"stages", stages}};
  std::vector<std::pair<std::string, Cell>> rows{{"estimate", Cell::real(est.estimate)},
                                                 {"root_size", Cell::integer(static_cast<long long>(est.realizations))}};
  if (cfg.pairs) doc["pair_probabilities"] = to_json(propagate_pair_probabilities(plan));
  if (cfg.variance) {
    MomentOptions mo;
    mo.seed = *cfg.seed;
    mo.par = cfg.par();
    const auto var = hierarchical_variance(sys.spec, EmpiricalSource{samples}, sizes, mo);
    doc["variance"] = to_json(var);
    rows.push_back({"variance", moment_cell(var.variance, var.exact, var.variance_se)});
  }
  return {doc, key_value_table("wave", std::move(rows))};
}

Output run_damage(const RunConfig& cfg) {
  require(!cfg.ha.empty() && !cfg.hb.empty(), ErrorCode::invalid_argument, "--ha and --hb are required");
  require(cfg.t.has_value(), ErrorCode::invalid_argument, "--t is required");
  const DamageData data{load_column(cfg.ha), load_column(cfg.hb)};
  const auto counts = resample_damage_counts(data, *cfg.t, cfg.r, cfg.require_seed(), cfg.par());
  const auto plug = plugin_estimates(data, *cfg.t, cfg.max_i);
  const auto hybrid = hybrid_distribution(counts.p_x, plug.p_x, data.a.size());
  json doc{{"t", *cfg.t},
           {"n_A", data.a.size()},
           {"n_B", data.b.size()},
           {"resampling", to_json(counts)},
           {"plugin", {{"lambda", plug.lambda}, {"EX", plug.ex}, {"EY", plug.ey}, {"PX", plug.p_x}, {"PY", plug.p_y}}},
           {"hybrid_PX", hybrid}};
  Table t{"damage", {"i", "P*X", "P*Y", "plugin_PX", "hybrid_PX"}, {}, json::object()};
  for (std::size_t i = 0; i < hybrid.size(); ++i) {
    auto at = [i](const std::vector<double>& v) { return i < v.size() ? Cell::real(v[i]) : Cell::text(""); };
    t.rows.push_back({Cell::integer(static_cast<long long>(i)), at(counts.p_x), at(counts.p_y), at(plug.p_x),
                      Cell::real(hybrid[i])});
  }
  return {doc, t};
}

Output run_damage_truth(const RunConfig& cfg) {
  require(!cfg.deg.empty(), ErrorCode::invalid_argument, "--deg is required");
  require(cfg.t.has_value(), ErrorCode::invalid_argument, "--t is required");
  const DamageTruth truth{cfg.lambda, parse_distribution(cfg.deg), *cfg.t};
  const auto pt = poisson_truth(truth, cfg.max_i);
  json doc{{"lambda", truth.lambda},
           {"degeneration", truth.degeneration.describe()},
           {"t", truth.t},
           {"EX", pt.ex},
           {"EY", pt.ey},
           {"PX", pt.p_x},
           {"PY", pt.p_y}};
  Table t{"damage-truth", {"i", "PX", "PY"}, {}, {{"EX", pt.ex}, {"EY", pt.ey}}};
  for (std::size_t i = 0; i < pt.p_x.size(); ++i)
    t.rows.push_back({Cell::integer(static_cast<long long>(i)), Cell::real(pt.p_x[i]), Cell::real(pt.p_y[i])});
  if (!cfg.n_a.empty()) {
    Table e{"damage-expectation",
            {"n_A", "E(E*X)_formula", "E(E*X)_exact", "E(E*Y)_formula", "E(E*Y)_exact"},
            {},
            json::object()};
    json rows = json::array();
    for (std::size_t na : parse_index_list(cfg.n_a)) {
      const auto ex = estimator_expectation(truth, na);
      json row{{"n_A", na},
               {"p1_X", ex.p1_x},
               {"p1_Y", ex.p1_y},
               {"EX_formula", ex.ex_formula},
               {"EY_formula", ex.ey_formula},
               {"PX_formula", ex.px_formula},
               {"PY_formula", ex.py_formula},
               {"EX_exact", ex.ex_exact},
               {"EY_exact", ex.ey_exact},
               {"PX_exact", ex.px_exact},
               {"PY_exact", ex.py_exact}};
      e.rows.push_back({Cell::integer(static_cast<long long>(na)), Cell::real(ex.ex_formula), Cell::real(ex.ex_exact),
                        Cell::real(ex.ey_formula), Cell::real(ex.ey_exact)});
      if (cfg.replications > 0) {
        const auto v = damage_variance_mc(truth, na, na, cfg.r, cfg.replications, cfg.require_seed(), cfg.par());
        auto stats = [](const EstimatorStats& s) {
          return json{{"mean", s.mean},         {"mean_se", s.mean_se}, {"variance", s.variance},
                      {"variance_se", s.variance_se}, {"mse", s.mse},  {"mse_se", s.mse_se}};
        };
        row["simulation"] = {{"r", v.r},
                             {"replications", v.replications},
                             {"resampling", stats(v.resampling)},
                             {"plugin", stats(v.plugin)}};
      }
      rows.push_back(std::move(row));
    }
    doc["estimators"] = rows;
    t = e;
  }
  return {doc, t};
}

Output run_renewal(const RunConfig& cfg) {
  require(!cfg.hx.empty() && !cfg.hy.empty(), ErrorCode::invalid_argument, "--hx and --hy are required");
  const auto ks = parse_index_list(cfg.k_range);
  require(ks.size() == 1, ErrorCode::invalid_argument, "renewal takes a single --k");
  RenewalPair pair{load_column(cfg.hx), load_column(cfg.hy), cfg.m, 0};
  const auto layout = RenewalLayout::threshold(pair.hx.size(), pair.hy.size(), cfg.m, ks[0]);
  pair.m_y = layout.m_y;
  if (const auto neg = pair.negative_values())
    std::cerr << json{{"warning", "negative_values"},
                      {"count", neg},
                      {"message", "inter-renewal samples contain negative values"}}
                     .dump()
              << "\n";
  const auto est = estimate_exceedance(pair, cfg.r, cfg.require_seed(), {cfg.par(), false});
  json doc{{"m_X", pair.m_x},
           {"m_Y", pair.m_y},
           {"n_X", pair.hx.size()},
           {"n_Y", pair.hy.size()},
           {"r", cfg.r},
           {"seed", est.seed},
           {"estimate", est.estimate},
           {"empirical_variance", est.empirical_variance}};
  std::vector<std::pair<std::string, Cell>> rows{{"estimate", Cell::real(est.estimate)},
                                                 {"empirical_variance", Cell::real(est.empirical_variance)}};
  if (cfg.variance) {
    // Data redrawn from the empirical laws: a plug-in value of Var Θ*.
    const auto v = exceedance_variance(layout, DiscreteKit(pair.hx, pair.hy), cfg.r, cfg.par());
    doc["empirical_law_variance"] = to_json(v);
    rows.push_back({"empirical_law_variance", Cell::real(v.variance)});
  }
  return {doc, key_value_table("renewal", std::move(rows))};
}

Output run_renewal_truth(const RunConfig& cfg) {
  require(!cfg.x.empty() && !cfg.y.empty(), ErrorCode::invalid_argument, "--x and --y are required");
  const auto x = parse_distribution(cfg.x), y = parse_distribution(cfg.y);
  const std::size_t n = cfg.n ? cfg.n : 2 * cfg.m;
  const auto* nx = std::get_if<Normal>(&x.family());
  const auto* ny = std::get_if<Normal>(&y.family());
  Table t{"renewal-truth", {"K", "theta", "Var(Theta*)", "limit_variance"}, {}, {{"n", n}, {"m", cfg.m}, {"r", cfg.r}}};
  if (cfg.replications > 0) t.columns.insert(t.columns.end(), {"Var(plugin)", "Bias(plugin)", "MSE(plugin)"});
  json rows = json::array();
  for (std::size_t k : parse_index_list(cfg.k_range)) {
    const auto layout = RenewalLayout::threshold(n, n, cfg.m, k);
    RenewalVariance v;
    if (nx && ny) {
      v = exceedance_variance(layout, NormalKit{*nx, *ny}, cfg.r, cfg.par());
    } else {
      require(!x.continuous() && !y.continuous(), ErrorCode::invalid_argument,
              "renewal-truth needs two normal or two finite laws");
      v = exceedance_variance(layout, DiscreteKit(x.support(), y.support()), cfg.r, cfg.par());
    }
    json row{{"K", k}, {"m_X", layout.m_x}, {"m_Y", layout.m_y}, {"variance", to_json(v)}};
    std::vector<Cell> cells{Cell::integer(static_cast<long long>(k)), Cell::real(v.theta), Cell::real(v.variance),
                            Cell::real(v.limit_variance)};
    if (cfg.replications > 0) {
      const auto c = plugin_baseline(layout, x, y, cfg.r, cfg.replications, cfg.require_seed() + k, cfg.par());
      auto stats = [](const ComparatorStats& s) {
        return json{{"mean", s.mean}, {"variance", s.variance}, {"bias", s.bias},          {"mse", s.mse},
                    {"mean_se", s.mean_se}, {"variance_se", s.variance_se}, {"mse_se", s.mse_se}};
      };
      row["simulation"] = {{"replications", c.replications},
                           {"plugin", stats(c.plugin)},
                           {"resampling", stats(c.resampling)}};
      cells.push_back(Cell::measured(c.plugin.variance, c.plugin.variance_se));
      cells.push_back(Cell::measured(c.plugin.bias, c.plugin.mean_se));
      cells.push_back(Cell::measured(c.plugin.mse, c.plugin.mse_se));
    }
    rows.push_back(std::move(row));
    t.rows.push_back(std::move(cells));
  }
  return {json{{"x", x.describe()}, {"y", y.describe()}, {"n", n}, {"m", cfg.m}, {"r", cfg.r}, {"rows", rows}}, t};
}

Output run_coverage(const RunConfig& cfg) {
  const auto sys = load_system(cfg);
  const OrderFunctional f(sys.spec);
  require(!cfg.gen.empty(), ErrorCode::invalid_argument, "--gen is required");
  const auto gens = parse_distribution_list(cfg.gen);
  const auto sizes = parse_index_list(cfg.sizes);
  const double theta = cfg.theta ? *cfg.theta : order_theta(f, gens);
  CoverageOptions opt;
  opt.par = cfg.par();
  if (cfg.mode == "mc") {
    opt.mode = CoverageMode::mc;
    opt.seed = cfg.require_seed();
    if (cfg.replications > 0) opt.replications = cfg.replications;
  } else {
    require(cfg.mode == "exact", ErrorCode::invalid_argument, "--mode must be exact or mc");
    opt.mode = CoverageMode::exact;
    if (cfg.rows_csv.empty()) opt.row_limit = 0;
  }
  const auto rep = coverage_R(f, gens, sizes, theta, cfg.gamma, cfg.k, cfg.r, opt);
  if (!cfg.rows_csv.empty()) {
    require(opt.mode == CoverageMode::exact, ErrorCode::invalid_argument, "--rows-csv needs --mode exact");
    Table rows{"coverage-rows", {"W", "protocol", "P", "q", "rho", "R_C"}, {}, json::object()};
    for (const auto& row : rep.rows)
      rows.rows.push_back({Cell::text(json(row.w).dump()), Cell::text(json(protocol_from_w(row.w)).dump()),
                           Cell::real(row.probability), Cell::real(row.q), Cell::real(row.rho),
                           Cell::real(row.coverage)});
    std::ofstream out(cfg.rows_csv);
    require(out.good(), ErrorCode::file_not_found, "cannot write " + cfg.rows_csv);
    out << format_csv(rows);
  }
  auto doc = to_json(rep);
  doc.erase("rows");
  doc["sizes"] = sizes;
  const Cell r_cell = opt.mode == CoverageMode::mc ? Cell::measured(rep.coverage, rep.coverage_se)
                                                   : Cell::real(rep.coverage);
  return {doc, key_value_table("coverage", {{"theta", Cell::real(theta)},
                                            {"order_index", Cell::integer(static_cast<long long>(rep.order_index))},
                                            {"R", r_cell}})};
}

Output run_repro(const RunConfig& cfg, const std::string& which) {
  Table t;
  if (which == "table-coverage") t = repro::coverage_table(cfg.par());
  else if (which == "table-damage") t = repro::damage_table(cfg.par());
  else t = repro::renewal_table(cfg.par());
  return {table_json(t), t};
}

void emit(const Output& out, const std::string& format) {
  if (format == "table") std::cout << format_table(out.table);
  else if (format == "csv") std::cout << format_csv(out.table);
  else std::cout << out.doc.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Resampling estimators for logical systems and degradation processes"};
  app.require_subcommand(1);
  app.fallthrough();
  RunConfig cfg;
  app.add_option("--threads", cfg.threads, "Worker threads (results do not depend on it)")->check(CLI::Range(1u, 256u));
  app.add_option("--format", cfg.format, "Output format")->check(CLI::IsMember({"json", "csv", "table"}));

  auto seed_opt = [&](CLI::App* sub) { sub->add_option("--seed", cfg.seed, "Random seed"); };

  auto* estimate = app.add_subcommand("estimate", "Resampling estimate of E phi(X) with its variance");
  estimate->add_option("--spec", cfg.spec, "System file: expression text or JSON {expr, params, blocks}")->required();
  estimate->add_option("--samples", cfg.samples, "Samples (CSV with header, or JSON)")->required();
  estimate->add_option("--blocks", cfg.blocks, "JSON {argIndex: sampleName}");
  estimate->add_option("--param", cfg.params, "Parameter name=value");
  estimate->add_option("--t", cfg.t, "Shorthand for --param t=...");
  estimate->add_option("--r", cfg.r, "Realizations")->check(CLI::PositiveNumber);
  estimate->add_flag("--enumerate", cfg.enumerate, "Average over every admissible resample");
  estimate->add_option("--gen", cfg.gen, "Generators per sample for the unconditional variance");
  seed_opt(estimate);

  auto* wave = app.add_subcommand("wave", "Hierarchical (wave) resampling estimate");
  wave->add_option("--spec", cfg.spec)->required();
  wave->add_option("--samples", cfg.samples)->required();
  wave->add_option("--blocks", cfg.blocks);
  wave->add_option("--param", cfg.params);
  wave->add_option("--t", cfg.t);
  wave->add_option("--size", cfg.node_sizes, "Stage size node=n");
  wave->add_flag("--variance", cfg.variance, "Exact variance of the wave estimator");
  wave->add_flag("--pairs", cfg.pairs, "Report the propagated pair probabilities");
  seed_opt(wave);

  auto* damage = app.add_subcommand("damage", "Resampling estimates for the damage process");
  damage->add_option("--ha", cfg.ha, "Intervals between initial failures")->required();
  damage->add_option("--hb", cfg.hb, "Degeneration times")->required();
  damage->add_option("--t", cfg.t)->required();
  damage->add_option("--r", cfg.r)->check(CLI::PositiveNumber);
  damage->add_option("--max-i", cfg.max_i, "Largest count in the plug-in law");
  seed_opt(damage);

  auto* damage_truth = app.add_subcommand("damage-truth", "Poisson truth and estimator expectations");
  damage_truth->add_option("--lambda", cfg.lambda)->required();
  damage_truth->add_option("--deg", cfg.deg, "Degeneration law, e.g. triangular:0,2,4")->required();
  damage_truth->add_option("--t", cfg.t)->required();
  damage_truth->add_option("--max-i", cfg.max_i);
  damage_truth->add_option("--na", cfg.n_a, "Sample sizes n_A, e.g. 3..8");
  damage_truth->add_option("--replications", cfg.replications, "Simulated sample redraws per n_A");
  damage_truth->add_option("--r", cfg.r);
  seed_opt(damage_truth);

  auto* renewal = app.add_subcommand("renewal", "Resampling estimate of P{D_mX > S_mY}");
  renewal->add_option("--hx", cfg.hx)->required();
  renewal->add_option("--hy", cfg.hy)->required();
  renewal->add_option("--m", cfg.m)->required();
  renewal->add_option("--k", cfg.k_range, "Threshold K (m_Y = m - K)");
  renewal->add_option("--r", cfg.r)->check(CLI::PositiveNumber);
  renewal->add_flag("--variance", cfg.variance, "Var Theta* with the empirical laws as generators");
  seed_opt(renewal);

  auto* renewal_truth = app.add_subcommand("renewal-truth", "Theta and Var Theta* for known laws");
  renewal_truth->add_option("--x", cfg.x)->required();
  renewal_truth->add_option("--y", cfg.y)->required();
  renewal_truth->add_option("--m", cfg.m)->required();
  renewal_truth->add_option("--k", cfg.k_range, "K values, e.g. 0..3");
  renewal_truth->add_option("--n", cfg.n, "Sample size (default 2m)");
  renewal_truth->add_option("--r", cfg.r);
  renewal_truth->add_option("--replications", cfg.replications, "Simulated comparator replications");
  seed_opt(renewal_truth);

  auto* coverage = app.add_subcommand("coverage", "Coverage probability of the resampling interval");
  coverage->add_option("--spec", cfg.spec)->required();
  coverage->add_option("--gen", cfg.gen)->required();
  coverage->add_option("--sizes", cfg.sizes)->required();
  coverage->add_option("--gamma", cfg.gamma);
  coverage->add_option("--k", cfg.k);
  coverage->add_option("--r", cfg.r);
  coverage->add_option("--theta", cfg.theta, "Override the computed Theta");
  coverage->add_option("--mode", cfg.mode)->check(CLI::IsMember({"exact", "mc"}));
  coverage->add_option("--replications", cfg.replications);
  coverage->add_option("--rows-csv", cfg.rows_csv, "Write the per-ordering table (exact mode)");
  seed_opt(coverage);

  auto* repro = app.add_subcommand("repro", "Regenerate a table with pinned seeds");
  repro->require_subcommand(1);
  for (const char* name : {"table-coverage", "table-damage", "table-renewal"}) repro->add_subcommand(name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", 2, e.what());
  }

  try {
    Output out;
    if (*repro) {
      cfg.subcommand = "repro";
      out = run_repro(cfg, repro->get_subcommands().front()->get_name());
    } else {
      const auto* sub = app.get_subcommands().front();
      cfg.subcommand = sub->get_name();
      if (sub == estimate) out = run_estimate(cfg);
      else if (sub == wave) out = run_wave(cfg);
      else if (sub == damage) out = run_damage(cfg);
      else if (sub == damage_truth) out = run_damage_truth(cfg);
      else if (sub == renewal) out = run_renewal(cfg);
      else if (sub == renewal_truth) out = run_renewal_truth(cfg);
      else out = run_coverage(cfg);
    }
    emit(out, cfg.format);
  } catch (const Error& e) {
    return report_error(to_string(e.code()), exit_code(e.code()), e.what());
  } catch (const json::exception& e) {
    return report_error(to_string(ErrorCode::schema), exit_code(ErrorCode::schema), e.what());
  } catch (const std::exception& e) {
    return report_error("internal", 1, e.what());
  }
  return 0;
}
