#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace sbr {

inline constexpr double kLogSqrtTwoPi = 0.91893853320467274178;
inline constexpr double kLogTwo = 0.69314718055994530942;

double normal_cdf(double z);
double normal_quantile(double p);

/// Log density of N(mean, variance) at x.
double normal_log_density(double x, double mean, double variance);

double logistic(double x);
/// log(1 + exp(x)) without overflow.
double log1p_exp(double x);
double log_sum_exp(double a, double b);
double log_sum_exp(std::span<const double> values);

double mean(std::span<const double> values);
/// Sample variance with n - 1 denominator.
double variance(std::span<const double> values);
double sd(std::span<const double> values);

/// Linear-interpolation quantile (R type 7). `prob` in [0, 1].
double quantile(std::span<const double> values, double prob);
double median(std::span<const double> values);

/// Quantile of a discrete distribution with the given (non-negative) weights.
/// Uses the inverse of the weighted empirical CDF.
double weighted_quantile(std::span<const double> values, std::span<const double> weights, double prob);

/// Deterministic stream seed derived from a root seed (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

}  // namespace sbr
