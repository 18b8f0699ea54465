#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sbr/model.hpp"
#include "sbr/sampler.hpp"

namespace sbr {

/// Median and central interval of a positive quantity.
struct IntervalSummary {
  double median = 0, lower = 0, upper = 0;
};

/// Per-draw exp(varsigma_c + sum_k X beta) for country `c`, window year index `t`,
/// summarized by the median and the 5% / 95% quantiles.
IntervalSummary covariate_only_estimate(const PosteriorDraws& draws, const ModelSpec& spec, int c, int t);

/// One country-year of the final SBR estimates (per 1000 total births).
struct EstimateRow {
  std::string country;
  int year = 0;
  IntervalSummary sbr;
  IntervalSummary covariate_only;
};

/// Posterior median and 90% interval of exp(Theta) and of the covariate-only
/// level for every country and window year, countries in index order.
std::vector<EstimateRow> estimate_table(const PosteriorDraws& draws, const ModelSpec& spec);

/// estimates.csv: country, year, median, lower_5, upper_95, covariate_median,
/// covariate_lower_5, covariate_upper_95.
void write_estimates(const std::filesystem::path& path, const std::vector<EstimateRow>& rows);
std::vector<EstimateRow> read_estimates(const std::filesystem::path& path);

}  // namespace sbr
