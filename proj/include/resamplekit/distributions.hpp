#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "resamplekit/error.hpp"
#include "resamplekit/random.hpp"
#include "resamplekit/stats.hpp"

namespace resamplekit {

struct Exponential {
  double rate;
};

struct Normal {
  double mean;
  double sd;
};

struct Uniform {
  double lower;
  double upper;
};

struct Triangular {
  double lower;
  double mode;
  double upper;
};

/// Equal-weight point masses; a single value is a degenerate (point-mass) law.
struct Empirical {
  std::vector<double> values;  // sorted
};

/// A fully specified distribution of a scalar random variable.
class KnownDistribution {
 public:
  using Family = std::variant<Exponential, Normal, Uniform, Triangular, Empirical>;

  KnownDistribution(Family family) : family_(std::move(family)) { validate(); }  // NOLINT

  static KnownDistribution exponential(double rate) { return {Exponential{rate}}; }
  static KnownDistribution normal(double mean, double sd) { return {Normal{mean, sd}}; }
  static KnownDistribution uniform(double a, double b) { return {Uniform{a, b}}; }
  static KnownDistribution triangular(double a, double c, double b) { return {Triangular{a, c, b}}; }
  static KnownDistribution empirical(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    return {Empirical{std::move(values)}};
  }
  static KnownDistribution point(double value) { return empirical({value}); }

  const Family& family() const { return family_; }

  bool continuous() const { return !std::holds_alternative<Empirical>(family_); }

  /// Equally weighted atoms of a finite distribution (duplicates kept).
  const std::vector<double>& support() const {
    const auto* e = std::get_if<Empirical>(&family_);
    require(e != nullptr, ErrorCode::invalid_argument, "support() needs a finite distribution");
    return e->values;
  }

  double cdf(double x) const {
    return std::visit(
        [x](const auto& d) -> double {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, Exponential>) {
            return x <= 0.0 ? 0.0 : -std::expm1(-d.rate * x);
          } else if constexpr (std::is_same_v<T, Normal>) {
            return normal_cdf((x - d.mean) / d.sd);
          } else if constexpr (std::is_same_v<T, Uniform>) {
            if (x < d.lower) return 0.0;
            if (x >= d.upper) return 1.0;
            return (x - d.lower) / (d.upper - d.lower);
          } else if constexpr (std::is_same_v<T, Triangular>) {
            if (x <= d.lower) return 0.0;
            if (x >= d.upper) return 1.0;
            const double w = d.upper - d.lower;
            if (x <= d.mode) return (x - d.lower) * (x - d.lower) / (w * (d.mode - d.lower));
            return 1.0 - (d.upper - x) * (d.upper - x) / (w * (d.upper - d.mode));
          } else {
            const auto it = std::upper_bound(d.values.begin(), d.values.end(), x);
            return static_cast<double>(it - d.values.begin()) / static_cast<double>(d.values.size());
          }
        },
        family_);
  }

  /// P{X >= x}; equals 1 - cdf(x) for continuous families.
  double survival(double x) const {
    if (const auto* e = std::get_if<Empirical>(&family_)) {
      const auto it = std::lower_bound(e->values.begin(), e->values.end(), x);
      return static_cast<double>(e->values.end() - it) / static_cast<double>(e->values.size());
    }
    if (const auto* e = std::get_if<Exponential>(&family_)) return x <= 0.0 ? 1.0 : std::exp(-e->rate * x);
    if (const auto* n = std::get_if<Normal>(&family_)) return normal_sf((x - n->mean) / n->sd);
    return 1.0 - cdf(x);
  }

  double pdf(double x) const {
    return std::visit(
        [x](const auto& d) -> double {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, Exponential>) {
            return x < 0.0 ? 0.0 : d.rate * std::exp(-d.rate * x);
          } else if constexpr (std::is_same_v<T, Normal>) {
            return normal_pdf((x - d.mean) / d.sd) / d.sd;
          } else if constexpr (std::is_same_v<T, Uniform>) {
            return (x < d.lower || x > d.upper) ? 0.0 : 1.0 / (d.upper - d.lower);
          } else if constexpr (std::is_same_v<T, Triangular>) {
            if (x < d.lower || x > d.upper) return 0.0;
            const double w = d.upper - d.lower;
            if (x <= d.mode) return d.mode == d.lower ? 2.0 / w : 2.0 * (x - d.lower) / (w * (d.mode - d.lower));
            return 2.0 * (d.upper - x) / (w * (d.upper - d.mode));
          } else {
            fail(ErrorCode::invalid_argument, "empirical distribution has no density");
          }
        },
        family_);
  }

  /// Points where the cdf has a kink or jump; used to split integrals.
  std::vector<double> kinks() const {
    return std::visit(
        [](const auto& d) -> std::vector<double> {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, Exponential>) return {0.0};
          else if constexpr (std::is_same_v<T, Normal>) return {};
          else if constexpr (std::is_same_v<T, Uniform>) return {d.lower, d.upper};
          else if constexpr (std::is_same_v<T, Triangular>) return {d.lower, d.mode, d.upper};
          else return d.values;
        },
        family_);
  }

  double mean() const {
    return std::visit(
        [](const auto& d) -> double {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, Exponential>) return 1.0 / d.rate;
          else if constexpr (std::is_same_v<T, Normal>) return d.mean;
          else if constexpr (std::is_same_v<T, Uniform>) return 0.5 * (d.lower + d.upper);
          else if constexpr (std::is_same_v<T, Triangular>) return (d.lower + d.mode + d.upper) / 3.0;
          else {
            double s = 0.0;
            for (double v : d.values) s += v;
            return s / static_cast<double>(d.values.size());
          }
        },
        family_);
  }

  /// Smallest x with cdf(x) >= p, for p in (0, 1).
  double quantile(double p) const {
    return std::visit(
        [p](const auto& d) -> double {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, Exponential>) {
            return -std::log1p(-p) / d.rate;
          } else if constexpr (std::is_same_v<T, Normal>) {
            // Bisection on the cdf; only used off the hot path.
            double lo = d.mean - 40 * d.sd, hi = d.mean + 40 * d.sd;
            for (int i = 0; i < 200; ++i) {
              const double mid = 0.5 * (lo + hi);
              (normal_cdf((mid - d.mean) / d.sd) < p ? lo : hi) = mid;
            }
            return 0.5 * (lo + hi);
          } else if constexpr (std::is_same_v<T, Uniform>) {
            return d.lower + p * (d.upper - d.lower);
          } else if constexpr (std::is_same_v<T, Triangular>) {
            const double w = d.upper - d.lower;
            const double split = (d.mode - d.lower) / w;
            if (p <= split) return d.lower + std::sqrt(p * w * (d.mode - d.lower));
            return d.upper - std::sqrt((1.0 - p) * w * (d.upper - d.mode));
          } else {
            const auto n = d.values.size();
            auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
            k = std::clamp<std::size_t>(k, 1, n);
            return d.values[k - 1];
          }
        },
        family_);
  }

  double sample(Stream& rng) const {
    if (const auto* n = std::get_if<Normal>(&family_)) {
      // Box-Muller, one variate per call so a stream's consumption is fixed.
      const double u1 = rng.uniform();
      const double u2 = rng.uniform();
      return n->mean + n->sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
    if (const auto* e = std::get_if<Empirical>(&family_)) return e->values[rng.index(e->values.size())];
    return quantile(rng.uniform());
  }

  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    std::visit(
        [&os](const auto& d) {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, Exponential>) os << "exponential:" << d.rate;
          else if constexpr (std::is_same_v<T, Normal>) os << "normal:" << d.mean << ',' << d.sd;
          else if constexpr (std::is_same_v<T, Uniform>) os << "uniform:" << d.lower << ',' << d.upper;
          else if constexpr (std::is_same_v<T, Triangular>)
            os << "triangular:" << d.lower << ',' << d.mode << ',' << d.upper;
          else {
            os << "empirical:";
            for (std::size_t i = 0; i < d.values.size(); ++i) os << (i ? "," : "") << d.values[i];
          }
        },
        family_);
    return os.str();
  }

 private:
  void validate() const {
    std::visit(
        [](const auto& d) {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, Exponential>) {
            require(d.rate > 0.0 && std::isfinite(d.rate), ErrorCode::invalid_argument,
                    "exponential rate must be positive");
          } else if constexpr (std::is_same_v<T, Normal>) {
            require(d.sd > 0.0 && std::isfinite(d.mean), ErrorCode::invalid_argument,
                    "normal sd must be positive");
          } else if constexpr (std::is_same_v<T, Uniform>) {
            require(d.lower < d.upper, ErrorCode::invalid_argument, "uniform requires lower < upper");
          } else if constexpr (std::is_same_v<T, Triangular>) {
            require(d.lower <= d.mode && d.mode <= d.upper && d.lower < d.upper,
                    ErrorCode::invalid_argument, "triangular requires lower <= mode <= upper, lower < upper");
          } else {
            require(!d.values.empty(), ErrorCode::invalid_argument, "empirical distribution needs values");
          }
        },
        family_);
  }

  Family family_;
};

namespace detail {

inline std::vector<double> parse_numbers(std::string_view text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string token(text.substr(pos, comma == std::string_view::npos ? text.npos : comma - pos));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      fail(ErrorCode::schema, "malformed number '" + token + "'");
    }
    require(used == token.size(), ErrorCode::schema, "malformed number '" + token + "'");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace detail

/// Parses "exp:3", "exponential:3", "normal:2,1", "uniform:0,1",
/// "triangular:0,2,4" or "empirical:1,2,3".
inline KnownDistribution parse_distribution(std::string_view text) {
  const auto colon = text.find(':');
  require(colon != std::string_view::npos, ErrorCode::schema,
          "distribution must look like family:params, got '" + std::string(text) + "'");
  const std::string family(text.substr(0, colon));
  const auto p = detail::parse_numbers(text.substr(colon + 1));
  auto arity = [&](std::size_t n) {
    require(p.size() == n, ErrorCode::schema,
            family + " expects " + std::to_string(n) + " parameter(s)");
  };
  if (family == "exp" || family == "exponential") {
    arity(1);
    return KnownDistribution::exponential(p[0]);
  }
  if (family == "normal" || family == "norm") {
    arity(2);
    return KnownDistribution::normal(p[0], p[1]);
  }
  if (family == "uniform" || family == "unif") {
    arity(2);
    return KnownDistribution::uniform(p[0], p[1]);
  }
  if (family == "triangular" || family == "tri") {
    arity(3);
    return KnownDistribution::triangular(p[0], p[1], p[2]);
  }
  if (family == "empirical" || family == "point") return KnownDistribution::empirical(p);
  fail(ErrorCode::schema, "unknown distribution family '" + family + "'");
}

/// JSON form: {"family":"exponential","rate":2.0}, {"family":"normal","mean":0,"sd":1},
/// {"family":"uniform","lower":0,"upper":1}, {"family":"triangular","lower":0,"mode":2,"upper":4},
/// {"family":"empirical","values":[...]}.
inline KnownDistribution distribution_from_json(const nlohmann::json& j) {
  try {
    const auto family = j.at("family").get<std::string>();
    if (family == "exponential") return KnownDistribution::exponential(j.at("rate").get<double>());
    if (family == "normal") return KnownDistribution::normal(j.at("mean").get<double>(), j.at("sd").get<double>());
    if (family == "uniform") return KnownDistribution::uniform(j.at("lower").get<double>(), j.at("upper").get<double>());
    if (family == "triangular")
      return KnownDistribution::triangular(j.at("lower").get<double>(), j.at("mode").get<double>(),
                                           j.at("upper").get<double>());
    if (family == "empirical") return KnownDistribution::empirical(j.at("values").get<std::vector<double>>());
    fail(ErrorCode::schema, "unknown distribution family '" + family + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::schema, std::string("distribution JSON: ") + e.what());
  }
}

}  // namespace resamplekit
