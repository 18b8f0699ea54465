#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace sbr {

struct PsisResult {
  std::vector<double> log_weights;  ///< normalized (log-sum-exp 0)
  double pareto_k = 0.0;            ///< NaN when the tail is too short to fit
};

/// Pareto-smoothed importance weights from log importance ratios. The largest
/// M = ceil(min(0.2 S, 3 sqrt S)) ratios are replaced by expected order statistics
/// of a generalized Pareto fit when k >= 0, then everything is truncated at the
/// largest raw ratio.
PsisResult psis(std::span<const double> log_ratios);

/// Generalized Pareto fit (Zhang-Stephens profile estimator with a weakly
/// informative prior pulling k toward 0.5) to positive exceedances sorted ascending.
struct GpdFit {
  double k = 0.0;
  double sigma = 0.0;
};
GpdFit fit_generalized_pareto(std::span<const double> sorted_exceedances);

struct LooResult {
  double elpd_loo = 0.0;
  double se = 0.0;
  std::vector<double> pointwise;
  std::vector<double> pareto_k;
};

/// Approximate leave-one-out from a (draws x observations) log-likelihood matrix.
LooResult psis_loo(const Eigen::MatrixXd& loglik);

struct ElpdDifference {
  double difference = 0.0;  ///< elpd(a) - elpd(b)
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Paired pointwise comparison with a normal 95% interval.
ElpdDifference elpd_compare(const LooResult& a, const LooResult& b);

}  // namespace sbr
