#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sbr/def_adjust.hpp"
#include "sbr/domain.hpp"
#include "sbr/ingest.hpp"
#include "sbr/model.hpp"

namespace sbr {

/// Settings for simulating a dataset from the full generative model.
struct SyntheticConfig {
  int n_countries = 8;
  int n_regions = 2;
  int year_start = 2000;
  int year_end = 2019;
  int n_observations = 120;
  std::vector<double> beta = {0.4, -0.15, 0.0, 0.0};
  double xi = 2.5;
  double sigma_eta = 0.2;
  double sigma_varsigma = 0.3;
  double sigma_delta = 0.05;
  double psi_survey = -0.165;
  std::array<double, kSourceTypeCount> sigma_source = {0.017, 0.045, 0.239, 0.135};
  std::array<double, kSourceTypeCount> source_weights = {0.4, 0.2, 0.15, 0.25};
  double min_births = 2000, max_births = 50000;  ///< total births for count-based sources
  double min_survey_se = 0.08, max_survey_se = 0.25;
  std::uint64_t seed = 1;
};

struct SyntheticDataset {
  CountryIndex countries;
  RawCovariates raw_covariates;
  std::vector<Observation> observations;  ///< every observation uses the 28-week definition
  ModelSpec spec;                         ///< horseshoe prior, s^2 from the simulated errors
  ModelParameters truth;
  Eigen::MatrixXd theta;  ///< (C x T) true log SBR
};

SyntheticDataset generate_synthetic(const SyntheticConfig& config);

/// Paired counts from the binomial containing model: z_alt ~ Poisson(mean_alt),
/// logit omega_i ~ N(logit(expit_mu), sigma^2), z ~ Bin(z_alt, omega_i).
std::vector<PairedCounts> simulate_containing_pairs(Definition d, IncomeGroup g, int n, double expit_mu, double sigma,
                                                    double mean_alt, std::mt19937_64& rng);
/// Paired counts from the overlapping model: N ~ Poisson(mean_n), Gamma_i ~ N(mu, sigma^2),
/// position s_i ~ U(0,1) on the feasible interval, (a,b,c) ~ Mult(N, omega).
std::vector<PairedCounts> simulate_overlapping_pairs(Definition d, IncomeGroup g, int n, double mu, double sigma,
                                                     double mean_n, std::mt19937_64& rng);

/// Writes a complete pipeline input set (observations, regions, income groups,
/// covariates, paired counts, high-quality ratios and config.json) into `dir`.
/// The config points its output directory at `dir/out`.
void write_synthetic_fixture(const std::filesystem::path& dir, std::uint64_t seed);

}  // namespace sbr
