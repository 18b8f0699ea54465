#include "sbr/estimates.hpp"

#include <cmath>
#include <fstream>

#include "sbr/csv.hpp"
#include "sbr/errors.hpp"
#include "sbr/stats.hpp"

namespace sbr {

namespace {

/// Summary of exp(x) over the draws; interpolated quantiles are taken after exp.
IntervalSummary summarize_exp(std::vector<double>& log_values) {
  for (auto& v : log_values) v = std::exp(v);
  return {median(log_values), quantile(log_values, 0.05), quantile(log_values, 0.95)};
}

std::vector<ModelParameters> unpack_all(const PosteriorDraws& draws, const ModelSpec& spec) {
  const ParameterLayout layout(spec);
  if (draws.names != layout.names()) throw std::invalid_argument("draws do not belong to this model spec");
  std::vector<ModelParameters> out;
  out.reserve(draws.n_pooled());
  for (std::size_t s = 0; s < draws.n_pooled(); ++s) out.push_back(layout.unpack(draws.pooled_row(s)));
  return out;
}

}  // namespace

IntervalSummary covariate_only_estimate(const PosteriorDraws& draws, const ModelSpec& spec, int c, int t) {
  if (c < 0 || c >= spec.n_countries() || t < 0 || t >= spec.n_years()) throw std::out_of_range("country/year outside the estimation grid");
  std::vector<double> v;
  for (const auto& p : unpack_all(draws, spec)) {
    double level = p.varsigma(c);
    for (int k = 0; k < spec.n_covariates(); ++k) level += spec.covariates.at(static_cast<std::size_t>(k), c, t) * p.beta(k);
    v.push_back(level);
  }
  return summarize_exp(v);
}

std::vector<EstimateRow> estimate_table(const PosteriorDraws& draws, const ModelSpec& spec) {
  const auto params = unpack_all(draws, spec);
  const int C = spec.n_countries(), T = spec.n_years();
  std::vector<Eigen::MatrixXd> full, cov;
  full.reserve(params.size());
  cov.reserve(params.size());
  for (const auto& p : params) {
    full.push_back(theta_grid(p, spec));
    cov.push_back(covariate_only_grid(p, spec));
  }
  std::vector<EstimateRow> rows;
  std::vector<double> a(params.size()), b(params.size());
  for (int c = 0; c < C; ++c) {
    for (int t = 0; t < T; ++t) {
      for (std::size_t s = 0; s < params.size(); ++s) {
        a[s] = full[s](c, t);
        b[s] = cov[s](c, t);
      }
      EstimateRow row;
      row.country = spec.countries.countries[c];
      row.year = spec.basis.year_start + t;
      row.sbr = summarize_exp(a);
      row.covariate_only = summarize_exp(b);
      rows.push_back(row);
    }
  }
  return rows;
}

void write_estimates(const std::filesystem::path& path, const std::vector<EstimateRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  CsvWriter w(out);
  w.row({"country", "year", "median", "lower_5", "upper_95", "covariate_median", "covariate_lower_5",
         "covariate_upper_95"});
  for (const auto& r : rows) {
    w.row({r.country, std::to_string(r.year), format_number(r.sbr.median), format_number(r.sbr.lower),
           format_number(r.sbr.upper), format_number(r.covariate_only.median), format_number(r.covariate_only.lower),
           format_number(r.covariate_only.upper)});
  }
}

std::vector<EstimateRow> read_estimates(const std::filesystem::path& path) {
  const auto t = CsvTable::read(path);
  const auto cc = t.require_column("country"), cy = t.require_column("year");
  const auto m = t.require_column("median"), lo = t.require_column("lower_5"), hi = t.require_column("upper_95");
  const auto cm = t.require_column("covariate_median"), cl = t.require_column("covariate_lower_5"),
             ch = t.require_column("covariate_upper_95");
  std::vector<EstimateRow> rows;
  for (const auto& r : t.rows()) {
    EstimateRow e;
    e.country = r[cc];
    e.year = static_cast<int>(parse_integer(r[cy]));
    e.sbr = {parse_double(r[m]), parse_double(r[lo]), parse_double(r[hi])};
    e.covariate_only = {parse_double(r[cm]), parse_double(r[cl]), parse_double(r[ch])};
    rows.push_back(e);
  }
  return rows;
}

}  // namespace sbr
