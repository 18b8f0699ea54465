#pragma once

#include "sbr/domain.hpp"
#include "sbr/ingest.hpp"

namespace sbr {

struct Redistribution {
  bool excluded = false;  ///< unknown share above the threshold, or nothing known
  double unknown_fraction = 0.0;
  double inflation = 1.0;  ///< total / known-total applied to each known category
  RawStillbirthBreakdown breakdown;
};

/// Spreads the unknown-category count over known categories in proportion to their
/// counts. Counts stay fractional (no re-rounding). Breakdowns whose unknown share
/// exceeds `max_unknown_fraction` are flagged for exclusion instead.
Redistribution redistribute_unknowns(const RawStillbirthBreakdown& breakdown, double max_unknown_fraction = 0.5);

/// Applies the optional log transform and z-scores each covariate over all
/// (country, year) cells using the population standard deviation.
CovariateMatrix standardize_covariates(const RawCovariates& raw, const std::vector<std::string>& country_names = {},
                                       int year_start = 0);

}  // namespace sbr
