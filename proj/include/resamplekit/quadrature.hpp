#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "resamplekit/error.hpp"

namespace resamplekit {

struct QuadratureOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  unsigned max_depth = 18;
};

/// Adaptive 31-point Gauss-Kronrod on a finite interval.
template <typename F>
double integrate(F&& f, double a, double b, QuadratureOptions opt = {}) {
  if (a == b) return 0.0;
  double error = 0.0;
  double l1 = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      std::forward<F>(f), a, b, opt.max_depth, opt.rel_tol, &error, &l1);
  if (!std::isfinite(value) || error > std::max(opt.abs_tol, opt.rel_tol * l1) * 1e3) {
    fail(ErrorCode::quadrature, "adaptive quadrature did not converge (estimated error " +
                                    std::to_string(error) + ")");
  }
  return value;
}

/// integrate() on [a, b] split at the given interior points (kinks or jumps
/// of the integrand).
template <typename F>
double integrate_split(F&& f, double a, double b, std::vector<double> cuts, QuadratureOptions opt = {}) {
  if (a >= b) return 0.0;
  std::erase_if(cuts, [&](double c) { return !(c > a && c < b); });
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  double total = 0.0, lo = a;
  for (double c : cuts) {
    total += integrate(f, lo, c, opt);
    lo = c;
  }
  return total + integrate(f, lo, b, opt);
}

/// Integrates f over the whole real line through z = center + scale * tan(theta).
template <typename F>
double integrate_real_line(F&& f, double center, double scale, QuadratureOptions opt = {}) {
  constexpr double half_pi = std::numbers::pi / 2;
  auto mapped = [&](double theta) {
    const double c = std::cos(theta);
    if (c <= 0.0) return 0.0;
    const double z = center + scale * std::tan(theta);
    const double value = f(z) * scale / (c * c);
    return std::isfinite(value) ? value : 0.0;
  };
  return integrate(mapped, -half_pi, half_pi, opt);
}

}  // namespace resamplekit
