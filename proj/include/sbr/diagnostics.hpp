#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sbr/sampler.hpp"

namespace sbr {

enum class EssKind { Bulk, Tail };

/// Rank-normalized split R-hat: the larger of the bulk (rank-normalized) and tail
/// (rank-normalized folded draws) potential scale reduction factors. `draws` is
/// (n_draws x n_chains). NaN (with a warning on std::clog) for constant input.
double split_rhat(const Eigen::MatrixXd& draws);

/// Split R-hat on the raw draws, no rank normalization.
double basic_rhat(const Eigen::MatrixXd& draws);

/// Autocorrelation-based effective sample size with Geyer's initial monotone
/// sequence. Bulk uses rank-normalized split chains; Tail is the minimum over the 5%
/// and 95% quantile exceedance indicators.
double ess(const Eigen::MatrixXd& draws, EssKind kind);

/// ESS of the raw split chains.
double basic_ess(const Eigen::MatrixXd& draws);

/// Pooled rank normalization: Phi^-1((rank - 3/8) / (S + 1/4)), average ranks for ties.
Eigen::MatrixXd rank_normalize(const Eigen::MatrixXd& draws);

struct ParameterSummary {
  std::string name;
  double mean = 0, median = 0, sd = 0, q025 = 0, q975 = 0;
  double rhat = 0, ess_bulk = 0, ess_tail = 0;
};

std::vector<ParameterSummary> summarize(const PosteriorDraws& draws);
void write_summary_csv(const std::filesystem::path& path, const std::vector<ParameterSummary>& rows);

}  // namespace sbr
