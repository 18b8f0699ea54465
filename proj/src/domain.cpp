#include "sbr/domain.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "sbr/errors.hpp"

namespace sbr {

namespace {

std::string normalize(std::string_view text) {
  std::string out;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '<' || ch == '>' || ch == '=') {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(SourceType s) {
  switch (s) {
    case SourceType::Administrative: return "Administrative";
    case SourceType::HMIS: return "HMIS";
    case SourceType::PopulationStudy: return "PopulationStudy";
    case SourceType::Survey: return "Survey";
  }
  return "?";
}

std::string_view to_string(Definition d) {
  switch (d) {
    case Definition::Ge28Weeks: return "Ge28Weeks";
    case Definition::Ge24Weeks: return "Ge24Weeks";
    case Definition::Ge22Weeks: return "Ge22Weeks";
    case Definition::Ge1000g: return "Ge1000g";
    case Definition::Ge500g: return "Ge500g";
  }
  return "?";
}

std::string_view to_string(IncomeGroup g) { return g == IncomeGroup::High ? "High" : "LowMiddle"; }

SourceType parse_source_type(std::string_view text) {
  const auto n = normalize(text);
  if (n == "administrative" || n == "admin" || n == "vr" || n == "crvs") return SourceType::Administrative;
  if (n == "hmis") return SourceType::HMIS;
  if (n == "populationstudy" || n == "population" || n == "study" || n == "populationbasedstudy") {
    return SourceType::PopulationStudy;
  }
  if (n == "survey" || n == "dhs" || n == "mics") return SourceType::Survey;
  throw ParseError("unknown source type '" + std::string(text) + "'");
}

Definition parse_definition(std::string_view text) {
  const auto n = normalize(text);
  if (n == "ge28weeks" || n == "28weeks" || n == ">=28weeks" || n == "28wk" || n == "7months" ||
      n == "sevenmonths") {
    return Definition::Ge28Weeks;
  }
  if (n == "ge24weeks" || n == "24weeks" || n == ">=24weeks" || n == "24wk") return Definition::Ge24Weeks;
  if (n == "ge22weeks" || n == "22weeks" || n == ">=22weeks" || n == "22wk") return Definition::Ge22Weeks;
  if (n == "ge1000g" || n == "1000g" || n == ">=1000g" || n == "1000grams") return Definition::Ge1000g;
  if (n == "ge500g" || n == "500g" || n == ">=500g" || n == "500grams") return Definition::Ge500g;
  throw ParseError("unknown definition '" + std::string(text) + "'");
}

IncomeGroup parse_income_group(std::string_view text) {
  const auto n = normalize(text);
  if (n == "high" || n == "hic" || n == "highincome") return IncomeGroup::High;
  if (n == "lowmiddle" || n == "low" || n == "lmic" || n == "lowandmiddle" || n == "middle") {
    return IncomeGroup::LowMiddle;
  }
  throw ParseError("unknown income group '" + std::string(text) + "'");
}

std::optional<int> CountryIndex::find(const std::string& country) const {
  auto it = std::find(countries.begin(), countries.end(), country);
  if (it == countries.end()) return std::nullopt;
  return static_cast<int>(it - countries.begin());
}

int CountryIndex::index_of(const std::string& country) const {
  if (auto c = find(country)) return *c;
  throw DataError("unknown country '" + country + "'");
}

std::optional<std::size_t> CovariateMatrix::find(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names.begin());
}

double RawStillbirthBreakdown::known_total() const {
  return std::accumulate(known.begin(), known.end(), 0.0,
                         [](double acc, const auto& kv) { return acc + kv.second; });
}

}  // namespace sbr
