#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace sbr {

enum class SourceType { Administrative = 0, HMIS = 1, PopulationStudy = 2, Survey = 3 };
inline constexpr std::size_t kSourceTypeCount = 4;
inline constexpr std::array<SourceType, kSourceTypeCount> kAllSourceTypes = {
    SourceType::Administrative, SourceType::HMIS, SourceType::PopulationStudy, SourceType::Survey};

enum class Definition { Ge28Weeks, Ge24Weeks, Ge22Weeks, Ge1000g, Ge500g };
inline constexpr std::array<Definition, 5> kAllDefinitions = {
    Definition::Ge28Weeks, Definition::Ge24Weeks, Definition::Ge22Weeks, Definition::Ge1000g,
    Definition::Ge500g};

enum class IncomeGroup { High, LowMiddle };
inline constexpr std::array<IncomeGroup, 2> kAllIncomeGroups = {IncomeGroup::High, IncomeGroup::LowMiddle};

std::string_view to_string(SourceType s);
std::string_view to_string(Definition d);
std::string_view to_string(IncomeGroup g);

/// Accepts the canonical names plus common aliases ("admin", "VR", "DHS", ...).
SourceType parse_source_type(std::string_view text);
/// "7months" / "seven_months" (survey pregnancy-duration wording) map to Ge28Weeks.
Definition parse_definition(std::string_view text);
IncomeGroup parse_income_group(std::string_view text);

/// One stillbirth-rate datapoint.
struct Observation {
  long long id = 0;
  std::string country;
  int year = 0;
  SourceType source_type = SourceType::Administrative;
  Definition definition = Definition::Ge28Weeks;
  double sbr = 0.0;  ///< stillbirths per 1000 total births
  std::optional<double> total_births;
  std::optional<double> stillbirth_count;
  std::optional<double> log_se;  ///< sd of log(sbr)
  std::optional<double> nmr;     ///< neonatal deaths per 1000 live births
  std::optional<double> live_births;
};

struct CountryIndex {
  std::vector<std::string> countries;
  std::vector<std::string> regions;
  std::vector<int> region_of;  ///< index into `regions`, per country
  std::vector<IncomeGroup> income_group_of;

  std::size_t size() const { return countries.size(); }
  std::optional<int> find(const std::string& country) const;
  int index_of(const std::string& country) const;  ///< throws on unknown country
};

struct EstimationWindow {
  int year_start = 2000;
  int year_end = 2019;
  int n_years() const { return year_end - year_start + 1; }
  bool contains(int year) const { return year >= year_start && year <= year_end; }
};

/// Standardized covariates X[k, c, t] stored as one (C*T x K) matrix; row = c * T + t.
struct CovariateMatrix {
  std::vector<std::string> names;
  std::vector<bool> log_transformed;
  Eigen::MatrixXd values;
  Eigen::VectorXd transformed_mean;  ///< mean after the optional log, before scaling
  Eigen::VectorXd raw_sd;            ///< sd after the optional log, before scaling
  int n_countries = 0;
  int n_years = 0;

  std::size_t n_covariates() const { return names.size(); }
  double at(std::size_t k, int c, int t) const { return values(c * n_years + t, static_cast<Eigen::Index>(k)); }
  std::optional<std::size_t> find(const std::string& name) const;
};

/// Stillbirth counts by gestational-age / birthweight category plus an unknown bucket.
struct RawStillbirthBreakdown {
  std::map<std::string, double> known;
  double unknown = 0.0;

  double known_total() const;
  double total() const { return known_total() + unknown; }
};

}  // namespace sbr
