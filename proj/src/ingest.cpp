#include "sbr/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <set>
#include <sstream>

#include "sbr/csv.hpp"
#include "sbr/errors.hpp"

namespace sbr {

std::string ObservationSchema::column_for(const std::string& field) const {
  auto it = columns.find(field);
  return it == columns.end() ? field : it->second;
}

namespace {

struct RowError {
  std::string column;
  std::string reason;
};

IngestResult parse_table(const CsvTable& table, const ObservationSchema& schema) {
  static const std::vector<std::string> required = {"id", "country", "year", "source_type", "definition", "sbr"};
  static const std::vector<std::string> optional = {"total_births", "stillbirth_count", "log_se", "nmr",
                                                    "live_births"};
  std::map<std::string, std::size_t> col;
  for (const auto& f : required) col[f] = table.require_column(schema.column_for(f));
  for (const auto& f : optional) {
    if (auto c = table.column(schema.column_for(f))) col[f] = *c;
  }

  IngestResult result;
  result.input_rows = table.size();
  for (std::size_t r = 0; r < table.size(); ++r) {
    const auto& cells = table.rows()[r];
    std::string field;
    try {
      auto cell = [&](const std::string& f) -> const std::string& {
        field = f;
        return cells[col.at(f)];
      };
      auto opt = [&](const std::string& f) -> std::optional<double> {
        if (!col.count(f)) return std::nullopt;
        return parse_optional_double(cell(f));
      };
      Observation obs;
      obs.id = parse_integer(cell("id"));
      obs.country = cell("country");
      if (obs.country.empty()) throw RowError{"country", "empty country code"};
      obs.year = static_cast<int>(parse_integer(cell("year")));
      obs.source_type = parse_source_type(cell("source_type"));
      obs.definition = parse_definition(cell("definition"));
      obs.sbr = parse_double(cell("sbr"));
      obs.total_births = opt("total_births");
      obs.stillbirth_count = opt("stillbirth_count");
      obs.log_se = opt("log_se");
      obs.nmr = opt("nmr");
      obs.live_births = opt("live_births");

      if (!(obs.sbr > 0.0) || !std::isfinite(obs.sbr)) throw RowError{"sbr", "sbr must be positive"};
      if (!schema.window.contains(obs.year)) {
        throw RowError{"year", "year " + std::to_string(obs.year) + " outside estimation window"};
      }
      if (obs.total_births && obs.stillbirth_count) {
        if (!(*obs.total_births > 0.0)) throw RowError{"total_births", "total births must be positive"};
        const double implied = 1000.0 * *obs.stillbirth_count / *obs.total_births;
        if (std::abs(obs.sbr - implied) > schema.consistency_tolerance) {
          std::ostringstream msg;
          msg << "sbr " << obs.sbr << " inconsistent with 1000*D/B = " << implied;
          throw RowError{"sbr", msg.str()};
        }
      }
      if (obs.log_se && !(*obs.log_se > 0.0)) throw RowError{"log_se", "log_se must be positive"};
      if (obs.nmr && !(*obs.nmr > 0.0)) throw RowError{"nmr", "nmr must be positive"};
      result.observations.push_back(std::move(obs));
    } catch (const RowError& e) {
      result.rejections.push_back({r + 1, schema.column_for(e.column), e.reason});
    } catch (const ParseError& e) {
      result.rejections.push_back({r + 1, schema.column_for(field), e.what()});
    }
  }
  return result;
}

}  // namespace

IngestResult ingest_observations(const std::filesystem::path& path, const ObservationSchema& schema) {
  return parse_table(CsvTable::read(path), schema);
}

IngestResult parse_observations(const std::string& csv_text, const ObservationSchema& schema) {
  return parse_table(CsvTable::parse(csv_text), schema);
}

void write_observations(const std::filesystem::path& path, const std::vector<Observation>& observations) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  CsvWriter w(out);
  w.row({"id", "country", "year", "source_type", "definition", "sbr", "total_births", "stillbirth_count", "log_se",
         "nmr", "live_births"});
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  for (const auto& o : observations) {
    w.row({std::to_string(o.id), o.country, std::to_string(o.year), std::string(to_string(o.source_type)),
           std::string(to_string(o.definition)), format_number(o.sbr), opt(o.total_births), opt(o.stillbirth_count),
           opt(o.log_se), opt(o.nmr), opt(o.live_births)});
  }
}

void write_rejections(const std::filesystem::path& path, const std::vector<Rejection>& rejections) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  CsvWriter w(out);
  w.row({"row", "column", "reason"});
  for (const auto& r : rejections) w.row({std::to_string(r.row), r.column, r.reason});
}

CountryIndex read_country_index(const std::filesystem::path& regions, const std::filesystem::path& income_groups) {
  const auto reg = CsvTable::read(regions);
  const auto inc = CsvTable::read(income_groups);
  const auto rc = reg.require_column("country");
  const auto rr = reg.require_column("region");
  const auto ic = inc.require_column("country");
  const auto ig = inc.require_column("income_group");

  std::map<std::string, IncomeGroup> income;
  for (const auto& row : inc.rows()) {
    if (income.count(row[ic])) throw DataError("country '" + row[ic] + "' has more than one income group");
    income[row[ic]] = parse_income_group(row[ig]);
  }

  CountryIndex index;
  for (const auto& row : reg.rows()) {
    const auto& country = row[rc];
    if (index.find(country)) throw DataError("country '" + country + "' has more than one region");
    auto it = income.find(country);
    if (it == income.end()) throw DataError("country '" + country + "' has no income group");
    auto region_it = std::find(index.regions.begin(), index.regions.end(), row[rr]);
    if (region_it == index.regions.end()) {
      index.regions.push_back(row[rr]);
      region_it = index.regions.end() - 1;
    }
    index.countries.push_back(country);
    index.region_of.push_back(static_cast<int>(region_it - index.regions.begin()));
    index.income_group_of.push_back(it->second);
  }
  if (index.countries.empty()) throw DataError("regions file lists no countries");
  return index;
}

RawCovariates read_covariates(const std::filesystem::path& path, const std::vector<CovariateSpec>& specs,
                              const CountryIndex& countries, const EstimationWindow& window) {
  const auto table = CsvTable::read(path);
  const auto ck = table.require_column("covariate");
  const auto cc = table.require_column("country");
  const auto cy = table.require_column("year");
  const auto cv = table.require_column("value");

  RawCovariates raw;
  raw.specs = specs;
  raw.n_countries = static_cast<int>(countries.size());
  raw.n_years = window.n_years();
  raw.values = Eigen::MatrixXd::Constant(raw.n_countries * raw.n_years, static_cast<Eigen::Index>(specs.size()),
                                         std::numeric_limits<double>::quiet_NaN());
  std::map<std::string, std::size_t> which;
  for (std::size_t k = 0; k < specs.size(); ++k) which[specs[k].name] = k;

  for (std::size_t r = 0; r < table.size(); ++r) {
    const auto& row = table.rows()[r];
    auto k = which.find(row[ck]);
    if (k == which.end()) continue;
    auto c = countries.find(row[cc]);
    if (!c) continue;
    const int year = static_cast<int>(parse_integer(row[cy]));
    if (!window.contains(year)) continue;
    raw.values(*c * raw.n_years + (year - window.year_start), static_cast<Eigen::Index>(k->second)) =
        parse_double(row[cv]);
  }
  for (std::size_t k = 0; k < specs.size(); ++k) {
    for (int c = 0; c < raw.n_countries; ++c) {
      for (int t = 0; t < raw.n_years; ++t) {
        if (std::isnan(raw.values(c * raw.n_years + t, static_cast<Eigen::Index>(k)))) {
          throw DataError("covariate '" + specs[k].name + "' missing for " + countries.countries[c] + " " +
                          std::to_string(window.year_start + t));
        }
      }
    }
  }
  return raw;
}

std::map<long long, RawStillbirthBreakdown> read_breakdowns(const std::filesystem::path& path) {
  const auto table = CsvTable::read(path);
  const auto ci = table.require_column("id");
  const auto cc = table.require_column("category");
  const auto cn = table.require_column("count");
  std::map<long long, RawStillbirthBreakdown> out;
  for (const auto& row : table.rows()) {
    auto& b = out[parse_integer(row[ci])];
    const double n = parse_double(row[cn]);
    if (n < 0) throw DataError("negative stillbirth count in breakdown for id " + row[ci]);
    if (row[cc] == "Unknown" || row[cc] == "unknown") {
      b.unknown += n;
    } else {
      b.known[row[cc]] += n;
    }
  }
  return out;
}

}  // namespace sbr
