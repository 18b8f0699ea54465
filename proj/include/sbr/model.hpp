#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sbr/domain.hpp"
#include "sbr/sampler.hpp"
#include "sbr/spline.hpp"

namespace sbr {

enum class PriorMode { RegularizedHorseshoe, SubsettedVague };
/// How `g` enters the inverse-gamma prior on rho^2: as the scale, or as a rate (scale 1/g).
enum class RhoConvention { Scale, Rate };

struct PriorConfig {
  PriorMode mode = PriorMode::RegularizedHorseshoe;
  double tau0 = 1.0;
  double q = 2.0;
  double g = 8.0;
  RhoConvention rho_convention = RhoConvention::Scale;
  double vague_beta_sd = 5.0;  ///< subsetted model: beta_k ~ N(0, sd^2)

  double rho2_scale() const { return rho_convention == RhoConvention::Scale ? g : 1.0 / g; }
};

/// Global scale guess tau0 = p0 / (D - p0) * sigma / sqrt(n) for a horseshoe with
/// p0 expected relevant predictors out of D.
double tau0_from_sparsity_guess(double p0, double n_predictors, double sigma, double n_obs);

/// An observation ready for the likelihood, with definition adjustment attached.
struct ModelObservation {
  long long id = 0;
  int country = 0;
  int year_index = 0;
  SourceType source = SourceType::Administrative;
  Definition definition = Definition::Ge28Weeks;
  double log_y = 0.0;
  double s2 = 0.0;     ///< sampling variance of log y
  double gamma = 0.0;  ///< definitional adjustment (log scale)
  double phi2 = 0.0;   ///< definitional adjustment variance
};

struct ModelSpec {
  std::vector<ModelObservation> observations;
  CountryIndex countries;
  CovariateMatrix covariates;         ///< only the included covariates
  std::vector<std::size_t> included;  ///< positions of those covariates in the full candidate list
  SplineBasis basis;
  PriorConfig prior;

  int n_countries() const { return static_cast<int>(countries.size()); }
  int n_regions() const { return static_cast<int>(countries.regions.size()); }
  int n_years() const { return basis.evaluations.rows(); }
  int n_basis() const { return basis.n_basis; }
  int n_covariates() const { return static_cast<int>(covariates.n_covariates()); }
  void validate() const;
};

/// Constrained model parameters.
struct ModelParameters {
  Eigen::VectorXd beta;
  Eigen::VectorXd lambda;  ///< empty for the subsetted model
  double tau = 0, rho2 = 0;
  Eigen::VectorXd varsigma;  ///< country intercepts
  Eigen::VectorXd eta;       ///< regional means
  double xi = 0, sigma_varsigma = 0, sigma_eta = 0;
  Eigen::MatrixXd alpha;  ///< (C x H) spline coefficients, each row sums to zero
  double sigma_delta = 0;
  double psi_survey = 0;
  std::array<double, kSourceTypeCount> sigma_source{};

  double psi(SourceType s) const { return s == SourceType::Survey ? psi_survey : 0.0; }
};

/// Positions of each block in the unconstrained state and in the constrained
/// (reported) parameter vector.
class ParameterLayout {
 public:
  explicit ParameterLayout(const ModelSpec& spec);

  int unconstrained_dim() const { return unconstrained_dim_; }
  int constrained_dim() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  bool horseshoe() const { return horseshoe_; }

  ModelParameters constrain(const Eigen::VectorXd& u) const;
  Eigen::VectorXd pack(const ModelParameters& p) const;
  ModelParameters unpack(const Eigen::VectorXd& constrained) const;

  struct Offsets {
    int beta_z = 0, log_lambda = -1, log_tau = -1, log_rho2 = -1;
    int xi = 0, log_sigma_eta = 0, log_sigma_varsigma = 0, eta_z = 0, varsigma = 0;
    int logit_sigma_delta = 0, innovations = 0, log_neg_psi = 0, log_sigma_source = 0;
  };
  const Offsets& offsets() const { return off_; }

 private:
  int K_, C_, R_, H_;
  bool horseshoe_;
  double vague_sd_;
  std::vector<int> region_of_;
  Offsets off_;
  int unconstrained_dim_ = 0;
  std::vector<std::string> names_;
};

/// log SBR Theta_{c,t} = varsigma_c + sum_k X_{k,c,t} beta_k + delta_{c,t}.
double theta(const ModelParameters& p, const ModelSpec& spec, int country, int year_index);
/// (C x T) grid of Theta.
Eigen::MatrixXd theta_grid(const ModelParameters& p, const ModelSpec& spec);
/// (C x T) grid of varsigma_c + X beta (smoother omitted).
Eigen::MatrixXd covariate_only_grid(const ModelParameters& p, const ModelSpec& spec);

/// Per-observation normal log likelihood at constrained parameters.
double pointwise_log_likelihood(const ModelParameters& p, const ModelSpec& spec, const ModelObservation& obs);

/// Joint log density of the unconstrained state (likelihood, priors and the
/// Jacobians of all transforms, normalizing constants included) with its exact
/// gradient. Throws NonFiniteError naming the offending block.
double log_posterior(const ModelSpec& spec, const ParameterLayout& layout, const Eigen::VectorXd& u,
                     Eigen::VectorXd& grad);

/// Spec + layout bundled as a sampler target.
class SbrModel {
 public:
  explicit SbrModel(ModelSpec spec);
  const ModelSpec& spec() const { return spec_; }
  const ParameterLayout& layout() const { return layout_; }
  Target target() const;

 private:
  ModelSpec spec_;
  ParameterLayout layout_;
};

/// Positions (within ModelSpec::covariates) whose |posterior median beta| >= cutoff.
/// Throws when nothing survives.
std::vector<std::size_t> subset_covariates(const std::vector<double>& beta_medians, double cutoff);
std::vector<std::size_t> subset_covariates(const PosteriorDraws& draws, const ModelSpec& spec, double cutoff);

/// Same model restricted to `included` (positions within spec.covariates) with
/// vague N(0, 5^2) priors on the retained coefficients.
ModelSpec make_subsetted_spec(const ModelSpec& spec, const std::vector<std::size_t>& included);

}  // namespace sbr
