#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sbr/model.hpp"
#include "sbr/psis.hpp"
#include "sbr/sampler.hpp"

namespace sbr {

enum class HoldoutMode { Random20, LastPerCountry };

struct HoldoutSplit {
  std::vector<std::size_t> train;  ///< positions in the observation list, ascending
  std::vector<std::size_t> test;
};

/// Random20 leaves out round(0.2 n) observations chosen uniformly without
/// replacement (seeded from derive_seed(seed, replicate)); LastPerCountry leaves
/// out each country's latest observation, ties broken by the largest id.
HoldoutSplit holdout_split(const std::vector<ModelObservation>& observations, HoldoutMode mode, int replicate,
                           std::uint64_t seed);

/// Standardized log-scale residual (log y - log y_pred) / S.
double prediction_error(double y, double pred_median, double pred_sd);

enum class Exercise { Recent, Random, InSample };
std::string_view to_string(Exercise e);

struct ValidationReport {
  Exercise exercise = Exercise::Random;
  double mean_error = 0.0;
  double mean_abs_error = 0.0;
  double pct_below_5 = 0.0;
  double pct_below_10 = 0.0;
  double pct_above_90 = 0.0;
  double pct_above_95 = 0.0;
  std::size_t n_test = 0;
};

/// Per test point: observed log y and predictive draws of log y.
struct PredictivePoint {
  double log_y = 0.0;
  std::vector<double> draws;
  std::vector<double> log_weights;  ///< optional importance weights (in-sample exercise)
};

/// Errors and tail shares against the 5/10/90/95% predictive quantiles. The
/// median and S come from the (weighted) predictive draws of log y.
ValidationReport interval_coverage(Exercise exercise, const std::vector<PredictivePoint>& points);

/// Predictive draws of log y for each listed observation: Theta + psi + gamma plus
/// N(0, s^2 + phi^2 + sigma_j^2) noise, one per posterior draw. Returns (draws x obs).
Eigen::MatrixXd predictive_log_draws(const PosteriorDraws& draws, const ModelSpec& spec,
                                     const std::vector<ModelObservation>& observations, std::uint64_t seed);

/// (draws x observations) pointwise log-likelihood of the model's own observations.
Eigen::MatrixXd pointwise_loglik_matrix(const PosteriorDraws& draws, const ModelSpec& spec);

struct ValidationConfig {
  bool recent = true;
  bool random = true;
  bool in_sample = true;
  int random_replicates = 20;
  int max_concurrency = 1;  ///< simultaneous training fits
  SamplerConfig sampler;
  std::uint64_t seed = 0;
};

struct ValidationOutcome {
  std::vector<ValidationReport> reports;
  LooResult loo;  ///< filled by the in-sample exercise
  std::vector<long long> loo_ids;
};

/// Runs the requested exercises. Holdout exercises refit the model on each
/// training set; the in-sample exercise reuses `full_fit` with PSIS weights.
ValidationOutcome run_validation(const ModelSpec& spec, const PosteriorDraws& full_fit, const ValidationConfig& config);

void write_validation_report(const std::filesystem::path& path, const std::vector<ValidationReport>& reports);
/// loo_report.csv: id, elpd_i, pareto_k.
void write_loo_report(const std::filesystem::path& path, const std::vector<long long>& ids, const LooResult& loo);

}  // namespace sbr
