#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace resamplekit {

/// log C(n, k); -inf when k > n (the convention C(n, k) = 0 for k > n).
inline double log_choose(std::uint64_t n, std::uint64_t k) {
  if (k > n) return -INFINITY;
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

/// Probability that two independent uniformly chosen m-subsets of an
/// n-element population share exactly `overlap` elements.
inline double hypergeometric_overlap(std::uint64_t n, std::uint64_t m, std::uint64_t overlap) {
  if (overlap > m || m > n) return 0.0;
  const double lp = log_choose(m, overlap) + log_choose(n - m, m - overlap) - log_choose(n, m);
  return std::isinf(lp) ? 0.0 : std::exp(lp);
}

inline double binomial_pmf(std::uint64_t n, std::uint64_t k, double p) {
  if (k > n) return 0.0;
  if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return k == n ? 1.0 : 0.0;
  return std::exp(log_choose(n, k) + static_cast<double>(k) * std::log(p) +
                  static_cast<double>(n - k) * std::log1p(-p));
}

/// P{lo <= Bin(n, p) <= hi}, with hi clipped to n. Empty range gives 0.
inline double binomial_range(std::uint64_t n, double p, std::int64_t lo, std::int64_t hi) {
  if (lo < 0) lo = 0;
  if (hi > static_cast<std::int64_t>(n)) hi = static_cast<std::int64_t>(n);
  double sum = 0.0;
  for (std::int64_t k = lo; k <= hi; ++k) sum += binomial_pmf(n, static_cast<std::uint64_t>(k), p);
  return sum;
}

inline double poisson_pmf(double mean, std::uint64_t i) {
  if (mean <= 0.0) return i == 0 ? 1.0 : 0.0;
  return std::exp(static_cast<double>(i) * std::log(mean) - mean -
                  std::lgamma(static_cast<double>(i) + 1.0));
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }
inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

/// Running mean and second/fourth central moments (Welford/Terriberry).
class MomentAccumulator {
 public:
  void add(double x) {
    const double n1 = static_cast<double>(n_);
    ++n_;
    const double n = static_cast<double>(n_);
    const double delta = x - mean_;
    const double delta_n = delta / n;
    const double delta_n2 = delta_n * delta_n;
    const double term1 = delta * delta_n * n1;
    mean_ += delta_n;
    m4_ += term1 * delta_n2 * (n * n - 3 * n + 3) + 6 * delta_n2 * m2_ - 4 * delta_n * m3_;
    m3_ += term1 * delta_n * (n - 2) - 3 * delta_n * m2_;
    m2_ += term1;
  }

  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  /// Unbiased sample variance; 0 for fewer than two observations.
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double mean_se() const {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }
  /// Large-sample standard error of the sample variance.
  double variance_se() const {
    if (n_ < 2) return 0.0;
    const double n = static_cast<double>(n_);
    const double mu2 = m2_ / n;
    const double mu4 = m4_ / n;
    return std::sqrt(std::max(0.0, mu4 - mu2 * mu2) / n);
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  double m3_ = 0.0;
  double m4_ = 0.0;
};

inline MomentAccumulator accumulate(std::span<const double> values) {
  MomentAccumulator acc;
  for (double v : values) acc.add(v);
  return acc;
}

}  // namespace resamplekit
