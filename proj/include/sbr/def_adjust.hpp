#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "sbr/domain.hpp"
#include "sbr/sampler.hpp"

namespace sbr {

enum class PairKind { Containing, Overlapping };

/// Ge22Weeks / Ge24Weeks contain the 28-week set; birthweight cutoffs overlap it.
PairKind pair_kind(Definition d);

/// Stillbirths counted in one setting under the 28-week definition (z) and an
/// alternative definition (z_alt). Overlapping pairs also carry the split
/// a = both, b = alternative only, c = 28 weeks only.
struct PairedCounts {
  long long id = 0;
  Definition definition = Definition::Ge22Weeks;
  IncomeGroup income_group = IncomeGroup::High;
  double z = 0, z_alt = 0;
  double a = 0, b = 0, c = 0;

  PairKind kind() const { return pair_kind(definition); }
  double n() const { return a + b + c; }
  /// Throws DataError when counts are negative or inconsistent with the kind.
  void validate() const;
};

/// Posterior of one definition's adjustment model.
struct DefinitionFit {
  PairKind kind = PairKind::Containing;
  std::vector<double> mu;     ///< mu_omega (logit scale) or mu_Gamma
  std::vector<double> sigma;  ///< sigma_omega or sigma_Gamma
  Eigen::MatrixXd unit;       ///< (draws x pairs): omega_i (containing) or Gamma_i (overlapping)
  Eigen::MatrixXd omega_a, omega_b, omega_c;  ///< overlapping only
  PosteriorDraws draws;
};

/// Unconstrained targets behind the two fits: (logit-scale mu, log sigma, u_i) for
/// the binomial model and (mu, log sigma, u_i, v_i) for the multinomial model.
Target containing_target(std::vector<PairedCounts> pairs);
Target overlapping_target(std::vector<PairedCounts> pairs);

/// Binomial model z_i ~ Bin(z_alt_i, omega_i), logit omega_i ~ N(mu, sigma^2),
/// expit(mu) ~ U(0,1), sigma ~ N+(0,1).
DefinitionFit fit_containing(const std::vector<PairedCounts>& pairs, const SamplerConfig& sampler);

/// Multinomial model (a,b,c) ~ Mult(N, omega) with Gamma_i = log((wa+wb)/(wa+wc)) ~ N(mu, sigma^2),
/// mu ~ N(0, 20), sigma ~ N+(0,1), and wa+wc uniform on its feasible interval given Gamma.
DefinitionFit fit_overlapping(const std::vector<PairedCounts>& pairs, const SamplerConfig& sampler);

/// Simplex point for a given Gamma and position s in (0,1) along the feasible interval of wa+wc.
struct OverlapSimplex {
  double a, b, c;
};
OverlapSimplex overlap_simplex(double gamma, double s);
/// Feasible interval of wa+wc given Gamma.
std::pair<double, double> overlap_interval(double gamma);

struct Adjustment {
  double gamma = 0.0;  ///< median of the predictive kappa
  double phi2 = 0.0;   ///< variance of the predictive kappa
  std::vector<double> kappa;
};

/// Predictive kappa for a new setting: one new unit per posterior draw of the
/// hyperparameters; kappa = -log omega (containing) or Gamma (overlapping).
Adjustment predictive_adjustment(const DefinitionFit& fit, std::uint64_t seed);

struct AdjustmentRow {
  Definition definition = Definition::Ge22Weeks;
  IncomeGroup income_group = IncomeGroup::High;
  double gamma = 0.0;
  double phi2 = 0.0;
  std::size_t n_pairs = 0;
  std::vector<double> kappa;
};

struct AdjustmentTable {
  std::vector<AdjustmentRow> rows;
  const AdjustmentRow* find(Definition d, IncomeGroup g) const;
};

struct AdjustmentRowSpec {
  Definition definition;
  IncomeGroup income_group;
};
/// 22 weeks (high and low/middle income), 24 weeks (low/middle), 1000 g and 500 g (high).
std::vector<AdjustmentRowSpec> default_adjustment_rows();

/// Fits every requested row from the pairs with matching definition and income
/// group. Rows are independent and run concurrently; row k is seeded from
/// derive_seed(seed, k).
AdjustmentTable fit_adjustment_table(const std::vector<PairedCounts>& pairs, const std::vector<AdjustmentRowSpec>& rows,
                                     SamplerConfig sampler, std::uint64_t seed);

enum class AdjustmentStatus { Reference, Adjusted, Unadjustable };

struct AdjustmentLookup {
  AdjustmentStatus status = AdjustmentStatus::Reference;
  std::optional<Definition> row_definition;  ///< table row used after equivalences
  double gamma = 0.0;
  double phi2 = 0.0;
};

/// Definition whose row applies after the equivalence rules, or nullopt when the
/// observation needs no adjustment (28 weeks anywhere, 1000 g in LMICs).
std::optional<Definition> effective_definition(Definition d, IncomeGroup g);
AdjustmentLookup apply_equivalences(Definition d, IncomeGroup g, const AdjustmentTable& table);

std::vector<PairedCounts> read_paired_counts(const std::filesystem::path& path);
void write_paired_counts(const std::filesystem::path& path, const std::vector<PairedCounts>& pairs);
/// adjustment_table.csv: definition, income_group, gamma, phi, phi2, n_pairs.
void write_adjustment_table(const std::filesystem::path& path, const AdjustmentTable& table);
AdjustmentTable read_adjustment_table(const std::filesystem::path& path);

}  // namespace sbr
