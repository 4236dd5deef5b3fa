#pragma once

// Small statistics toolkit: moments, batch means, least squares,
// Kolmogorov-Smirnov tests and Holm's step-down correction.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "phi42/error.hpp"

namespace phi42::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Unbiased sample variance.
inline double variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double acc = 0.0;
  for (double v : x) acc += (v - m) * (v - m);
  return acc / static_cast<double>(x.size() - 1);
}

/// Standard error of the mean for independent samples.
inline double standard_error(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  return std::sqrt(variance(x) / static_cast<double>(x.size()));
}

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

/// Mean with a batch-means standard error for a correlated series.
inline Estimate batch_means(std::span<const double> x, int batches = 20) {
  if (batches < 2) throw Error(ErrorCode::InvalidArgument, "need at least two batches");
  const std::size_t len = x.size() / static_cast<std::size_t>(batches);
  if (len == 0) return {mean(x), 0.0};
  std::vector<double> means;
  for (int b = 0; b < batches; ++b) means.push_back(mean(x.subspan(b * len, len)));
  return {mean(x.first(len * batches)), standard_error(means)};
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LineFit least_squares(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) return {0.0, my};
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

/// Asymptotic Kolmogorov survival function Q(l) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 l^2).
inline double kolmogorov_q(double l) {
  if (l <= 0.0) return 1.0;
  if (l < 1.18) {
    // Jacobi-transformed series, fast for small arguments.
    const double y = std::exp(-std::numbers::pi * std::numbers::pi / (8.0 * l * l));
    double sum = 0.0;
    for (int j = 1; j <= 9; j += 2) sum += std::pow(y, j * j);
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / l * sum, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * l * l);
    sum += (j % 2 == 1) ? term : -term;
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// p-value for a KS distance with effective sample size n (Stephens' correction).
inline double ks_p_value(double d, double n_eff) {
  const double sq = std::sqrt(n_eff);
  return kolmogorov_q((sq + 0.12 + 0.11 / sq) * d);
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::InvalidArgument, "empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return {d, ks_p_value(d, na * nb / (na + nb))};
}

/// One-sample KS distance against a continuous CDF.
inline KsResult ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
  if (x.empty()) throw Error(ErrorCode::InvalidArgument, "empty sample");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return {d, ks_p_value(d, n)};
}

/// Holm step-down procedure; returns which hypotheses are rejected at family level `level`.
inline std::vector<bool> holm_reject(std::span<const double> p_values, double level) {
  std::vector<std::size_t> order(p_values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return p_values[a] < p_values[b]; });
  std::vector<bool> reject(p_values.size(), false);
  const double m = static_cast<double>(p_values.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (p_values[order[r]] > level / (m - r)) break;
    reject[order[r]] = true;
  }
  return reject;
}

/// Empirical q-quantile (linear interpolation).
inline double quantile(std::vector<double> x, double q) {
  if (x.empty()) return 0.0;
  std::sort(x.begin(), x.end());
  const double pos = q * (x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (pos - lo) * (x[hi] - x[lo]);
}

inline double median(std::vector<double> x) { return quantile(std::move(x), 0.5); }

}  // namespace phi42::stats
