#pragma once

// Small numeric helpers shared across modules.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "rtm/error.hpp"

namespace rtm::math {

inline constexpr double inf = std::numeric_limits<double>::infinity();
inline constexpr double nan = std::numeric_limits<double>::quiet_NaN();
inline constexpr double log_sqrt_2pi = 0.91893853320467274178;

// log(1 - exp(-a)) for a > 0, accurate at both ends.
inline double log1m_exp_neg(double a) {
    if (a <= 0.0) return -inf;
    if (a < std::numbers::ln2) return std::log(-std::expm1(-a));
    return std::log1p(-std::exp(-a));
}

inline double log_sum_exp(double a, double b) {
    if (a == -inf) return b;
    if (b == -inf) return a;
    double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double log_factorial(long long x) { return std::lgamma(static_cast<double>(x) + 1.0); }

inline double normal_lpdf(double x, double loc, double scale) {
    double z = (x - loc) / scale;
    return -0.5 * z * z - std::log(scale) - log_sqrt_2pi;
}

// Mean of a sequence; NaN when empty.
inline double mean(std::span<const double> v) {
    if (v.empty()) return nan;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Sample variance with denominator n - 1.
inline double sample_variance(std::span<const double> v) {
    if (v.size() < 2) return nan;
    double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline double sample_sd(std::span<const double> v) { return std::sqrt(sample_variance(v)); }

// Linear-interpolation quantile of pre-sorted data (Hyndman-Fan type 7).
inline double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw DomainError("quantile of empty sample");
    if (p < 0.0 || p > 1.0) throw DomainError("quantile probability outside [0, 1]");
    double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    auto lo = static_cast<std::size_t>(std::floor(h));
    auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    return quantile_sorted(v, p);
}

// Equal-tailed interval summary used by every report in the project.
struct IntervalSummary {
    double mean = nan;
    double q025 = nan, q05 = nan, q25 = nan, q50 = nan, q75 = nan, q95 = nan, q975 = nan;
    std::size_t n = 0;
};

inline IntervalSummary summarize(std::vector<double> v) {
    IntervalSummary s;
    s.n = v.size();
    if (v.empty()) return s;
    std::sort(v.begin(), v.end());
    s.mean = mean(v);
    s.q025 = quantile_sorted(v, 0.025);
    s.q05 = quantile_sorted(v, 0.05);
    s.q25 = quantile_sorted(v, 0.25);
    s.q50 = quantile_sorted(v, 0.5);
    s.q75 = quantile_sorted(v, 0.75);
    s.q95 = quantile_sorted(v, 0.95);
    s.q975 = quantile_sorted(v, 0.975);
    return s;
}

}  // namespace rtm::math
