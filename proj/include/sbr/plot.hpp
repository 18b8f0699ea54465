#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sbr/domain.hpp"
#include "sbr/estimates.hpp"

namespace sbr {

/// One observation as drawn on a country plot (SBR per 1000 total births).
struct PlotPoint {
  int year = 0;
  double raw = 0.0;       ///< as reported, drawn hollow
  double adjusted = 0.0;  ///< after definition and source bias adjustment, drawn filled
  double lower = 0.0;     ///< 95% error bar of the adjusted value
  double upper = 0.0;
  Definition definition = Definition::Ge28Weeks;
};

/// Writes an SVG with the 90% posterior band and median, the dashed
/// covariate-only median with its band, adjusted observations with 95% error
/// bars coloured by definition, and the unadjusted values as hollow markers.
/// Throws std::invalid_argument when `estimates` holds no row for `country`.
void emit_country_plot(const std::string& country, const std::vector<EstimateRow>& estimates,
                       const std::vector<PlotPoint>& points, const std::filesystem::path& out_path);

/// Scatter of Pareto k against observation order with the 0.5 and 0.7 reference lines.
void emit_pareto_k_plot(const std::vector<long long>& ids, const std::vector<double>& k,
                        const std::filesystem::path& out_path);

/// index.html linking every country plot (file names `<country>.svg`).
void write_plot_index(const std::vector<std::string>& countries, bool has_pareto_plot,
                      const std::filesystem::path& out_path);

}  // namespace sbr
