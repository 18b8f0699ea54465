#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sbr/domain.hpp"

namespace sbr {

/// Maps canonical observation fields to CSV column names. Absent entries use the
/// canonical name itself.
struct ObservationSchema {
  std::map<std::string, std::string> columns;
  EstimationWindow window;
  double consistency_tolerance = 0.5;  ///< |sbr - 1000 D / B| allowed

  std::string column_for(const std::string& field) const;
};

struct Rejection {
  std::size_t row = 0;  ///< 1-based data row (header excluded)
  std::string column;
  std::string reason;
};

struct IngestResult {
  std::vector<Observation> observations;
  std::vector<Rejection> rejections;
  std::size_t input_rows = 0;
};

IngestResult ingest_observations(const std::filesystem::path& path, const ObservationSchema& schema);
IngestResult parse_observations(const std::string& csv_text, const ObservationSchema& schema);

/// Canonical observations.csv layout (the default schema reads it back unchanged).
void write_observations(const std::filesystem::path& path, const std::vector<Observation>& observations);

void write_rejections(const std::filesystem::path& path, const std::vector<Rejection>& rejections);

/// regions.csv (country, region) joined with income_groups.csv (country, income_group).
CountryIndex read_country_index(const std::filesystem::path& regions, const std::filesystem::path& income_groups);

struct CovariateSpec {
  std::string name;
  bool log_transform = false;
};

/// Untransformed covariate values, (C*T x K), row = c * T + t.
struct RawCovariates {
  std::vector<CovariateSpec> specs;
  Eigen::MatrixXd values;
  int n_countries = 0;
  int n_years = 0;
};

/// Reads covariates.csv in long format (covariate, country, year, value). Every
/// (covariate, country, year) cell in the window must be present.
RawCovariates read_covariates(const std::filesystem::path& path, const std::vector<CovariateSpec>& specs,
                              const CountryIndex& countries, const EstimationWindow& window);

/// breakdowns.csv (id, category, count); category "Unknown" is the unknown bucket.
std::map<long long, RawStillbirthBreakdown> read_breakdowns(const std::filesystem::path& path);

}  // namespace sbr
