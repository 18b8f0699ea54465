#pragma once

#include <cstdint>
#include <vector>

#include "sbr/domain.hpp"

namespace sbr {

/// Delta-method variance of log(y) under a Poisson count model: 1 / (B y), y a fraction.
double log_sbr_variance(double total_births, double sbr_fraction);

struct RatioVarianceInput {
  double stillbirths = 0;      ///< z
  double total_births = 0;     ///< t
  double neonatal_deaths = 0;  ///< m
  double live_births = 0;      ///< q
  std::size_t n_samples = 100000;
  std::uint64_t seed = 0;
};

struct RatioVariance {
  double variance = 0.0;           ///< v^2, sample variance of log r over accepted draws
  double rejected_fraction = 0.0;  ///< share of draws redrawn because a count was zero
};

/// Monte Carlo variance of the log SBR:NMR ratio with binomial stillbirth and
/// neonatal-death counts at the observed rates. Draws with a zero count are
/// rejected and redrawn.
RatioVariance mc_log_ratio_variance(const RatioVarianceInput& input);

/// Fills every missing log_se with the largest known log_se of the same source type.
std::vector<Observation> impute_max_error(std::vector<Observation> observations);

/// Attaches log_se from the Poisson delta method wherever total births and the rate
/// allow it and log_se is absent; survey rows are left untouched (their errors come
/// from the survey design).
std::vector<Observation> attach_poisson_errors(std::vector<Observation> observations);

}  // namespace sbr
