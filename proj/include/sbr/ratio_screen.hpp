#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sbr/domain.hpp"
#include "sbr/sampler.hpp"

namespace sbr {

struct RatioPriors {
  double mu_sd = 10.0;    ///< mu_theta ~ N(0, mu_sd^2)
  double sigma_sd = 1.0;  ///< sigma_theta ~ N+(0, sigma_sd^2)
};

/// One high-quality SBR:NMR ratio with the sampling variance of its log.
struct RatioDatum {
  long long id = 0;
  double r = 0.0;
  double v2 = 0.0;
};

struct RatioModelFit {
  double mu_median = 0.0;
  double mu_lower = 0.0;  ///< 2.5% posterior quantile
  double mu_upper = 0.0;  ///< 97.5% posterior quantile
  double sigma2_median = 0.0;
  std::vector<double> mu_draws;
  std::vector<double> sigma2_draws;
  std::vector<double> theta_mean;  ///< posterior mean of each setting's expected log ratio
};

/// Normal hierarchy on log ratios, log r_i ~ N(theta_i, v_i^2), theta_i ~ N(mu, sigma^2),
/// with theta integrated out analytically. A 1e-8 variance floor keeps the
/// marginal proper when every v_i^2 is zero.
RatioModelFit fit_ratio_model(const std::vector<RatioDatum>& data, const SamplerConfig& sampler,
                              const RatioPriors& priors = {});

/// One-sided predictive tail probability Phi((log r - mu) / sqrt(sigma^2 + v2)).
double exclusion_tail_probability(double r, double v2, double mu, double sigma2);
double exclusion_tail_probability(double r, double v2, const RatioModelFit& fit);

/// Ratio at which p equals `threshold` for v2 = 0.
double exclusion_boundary(double mu, double sigma2, double threshold = 0.05);

/// Where NMR values come from when an observation carries none of its own.
struct NmrPolicy {
  std::map<std::pair<std::string, int>, double> national_nmr;  ///< (country, year) -> per 1000
  std::size_t mc_samples = 100000;
  std::uint64_t seed = 0;
};

/// An observation to screen, with its definitional adjustment (zero for 28 weeks).
struct ScreenInput {
  Observation observation;
  double gamma = 0.0;
  double phi2 = 0.0;
};

enum class ScreenDecision { Kept, Excluded, CannotScreen };
std::string_view to_string(ScreenDecision d);

struct ScreenResult {
  long long id = 0;
  std::optional<double> r;
  double v2 = 0.0;
  std::optional<double> p;
  ScreenDecision decision = ScreenDecision::CannotScreen;
  std::string note;  ///< NMR source, or the reason screening was impossible
};

/// Ratio and log-ratio variance for one observation. Same-source NMR is used when
/// present, with a Monte Carlo variance if all four counts are known and s^2
/// otherwise; the national estimate is the fallback. No NMR at all leaves `r` empty.
ScreenResult resolve_ratio(const ScreenInput& input, const NmrPolicy& policy);

/// Every input lands in exactly one bucket; p < threshold is excluded.
std::vector<ScreenResult> apply_exclusion(const std::vector<ScreenInput>& inputs, const RatioModelFit& fit,
                                          const NmrPolicy& policy, double threshold = 0.05);

/// exclusions.csv: id, r, v2, p, decision, note.
void write_exclusions(const std::filesystem::path& path, const std::vector<ScreenResult>& results);

}  // namespace sbr
