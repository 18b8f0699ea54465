#include "sbr/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sbr/errors.hpp"

namespace sbr {

Redistribution redistribute_unknowns(const RawStillbirthBreakdown& breakdown, double max_unknown_fraction) {
  for (const auto& [category, n] : breakdown.known) {
    if (n < 0) throw DataError("negative count in category " + category);
  }
  if (breakdown.unknown < 0) throw DataError("negative unknown count");

  Redistribution out;
  out.breakdown = breakdown;
  const double known = breakdown.known_total();
  const double total = known + breakdown.unknown;
  out.unknown_fraction = total > 0 ? breakdown.unknown / total : 0.0;
  if (!(known > 0.0) || out.unknown_fraction > max_unknown_fraction) {
    out.excluded = true;
    return out;
  }
  out.inflation = total / known;
  for (auto& [category, n] : out.breakdown.known) n *= out.inflation;
  out.breakdown.unknown = 0.0;
  return out;
}

CovariateMatrix standardize_covariates(const RawCovariates& raw, const std::vector<std::string>& country_names,
                                       int year_start) {
  const auto n_cov = raw.specs.size();
  if (static_cast<std::size_t>(raw.values.cols()) != n_cov) {
    throw std::invalid_argument("covariate spec count does not match value columns");
  }
  CovariateMatrix out;
  out.n_countries = raw.n_countries;
  out.n_years = raw.n_years;
  out.values = raw.values;
  out.transformed_mean.resize(static_cast<Eigen::Index>(n_cov));
  out.raw_sd.resize(static_cast<Eigen::Index>(n_cov));

  auto cell_name = [&](Eigen::Index row) {
    std::ostringstream s;
    const auto c = static_cast<int>(row) / raw.n_years;
    const auto t = static_cast<int>(row) % raw.n_years;
    if (static_cast<std::size_t>(c) < country_names.size()) {
      s << country_names[c] << " " << year_start + t;
    } else {
      s << "country " << c << ", year index " << t;
    }
    return s.str();
  };

  for (std::size_t k = 0; k < n_cov; ++k) {
    const auto& spec = raw.specs[k];
    out.names.push_back(spec.name);
    out.log_transformed.push_back(spec.log_transform);
    auto col = out.values.col(static_cast<Eigen::Index>(k));
    if (spec.log_transform) {
      for (Eigen::Index i = 0; i < col.size(); ++i) {
        if (!(col(i) > 0.0)) {
          std::ostringstream s;
          s << "covariate '" << spec.name << "' has non-positive value " << col(i) << " at " << cell_name(i)
            << " but is log-transformed";
          throw DataError(s.str());
        }
        col(i) = std::log(col(i));
      }
    }
    const double m = col.mean();
    const double sd = std::sqrt((col.array() - m).square().mean());
    if (!(sd > 1e-12 * std::max(1.0, std::abs(m))) || !std::isfinite(sd)) {
      throw DataError("covariate '" + spec.name + "' has zero variance and cannot be standardized");
    }
    col = (col.array() - m) / sd;
    out.transformed_mean(static_cast<Eigen::Index>(k)) = m;
    out.raw_sd(static_cast<Eigen::Index>(k)) = sd;
  }
  return out;
}

}  // namespace sbr
