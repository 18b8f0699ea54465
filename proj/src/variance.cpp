#include "sbr/variance.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "sbr/errors.hpp"

namespace sbr {

double log_sbr_variance(double total_births, double sbr_fraction) {
  if (!(total_births > 0.0)) throw std::domain_error("log_sbr_variance: total births must be positive");
  if (!(sbr_fraction > 0.0)) throw std::domain_error("log_sbr_variance: rate must be positive");
  return 1.0 / (total_births * sbr_fraction);
}

RatioVariance mc_log_ratio_variance(const RatioVarianceInput& in) {
  if (!(in.total_births >= in.stillbirths && in.stillbirths >= 0)) {
    throw std::invalid_argument("ratio variance: need total_births >= stillbirths >= 0");
  }
  if (!(in.live_births >= in.neonatal_deaths && in.neonatal_deaths >= 0)) {
    throw std::invalid_argument("ratio variance: need live_births >= neonatal_deaths >= 0");
  }
  if (in.n_samples < 1000) throw std::invalid_argument("ratio variance: n_samples must be at least 1000");
  if (in.stillbirths == 0 || in.neonatal_deaths == 0) {
    throw std::domain_error("ratio variance undefined for zero counts");
  }

  const auto t = static_cast<long long>(std::llround(in.total_births));
  const auto q = static_cast<long long>(std::llround(in.live_births));
  std::mt19937_64 rng(in.seed);
  std::binomial_distribution<long long> sb(t, in.stillbirths / in.total_births);
  std::binomial_distribution<long long> nd(q, in.neonatal_deaths / in.live_births);

  // Welford accumulation of log r.
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t accepted = 0;
  std::size_t attempts = 0;
  const std::size_t max_attempts = in.n_samples * 1000;
  const double offset = std::log(static_cast<double>(q)) - std::log(static_cast<double>(t));
  while (accepted < in.n_samples) {
    if (++attempts > max_attempts) throw std::runtime_error("ratio variance: almost every draw had a zero count");
    const auto z = sb(rng);
    const auto m = nd(rng);
    if (z == 0 || m == 0) continue;
    const double x = std::log(static_cast<double>(z)) - std::log(static_cast<double>(m)) + offset;
    ++accepted;
    const double d = x - mean;
    mean += d / static_cast<double>(accepted);
    m2 += d * (x - mean);
  }
  return {m2 / static_cast<double>(accepted - 1),
          static_cast<double>(attempts - accepted) / static_cast<double>(attempts)};
}

std::vector<Observation> impute_max_error(std::vector<Observation> observations) {
  std::array<double, kSourceTypeCount> max_se{};
  std::array<bool, kSourceTypeCount> known{};
  std::array<bool, kSourceTypeCount> needed{};
  for (const auto& o : observations) {
    const auto j = static_cast<std::size_t>(o.source_type);
    if (o.log_se) {
      max_se[j] = known[j] ? std::max(max_se[j], *o.log_se) : *o.log_se;
      known[j] = true;
    } else {
      needed[j] = true;
    }
  }
  std::string missing;
  for (auto s : kAllSourceTypes) {
    const auto j = static_cast<std::size_t>(s);
    if (needed[j] && !known[j]) missing += (missing.empty() ? "" : ", ") + std::string(to_string(s));
  }
  if (!missing.empty()) {
    throw DataError("cannot impute maximum error: no known log_se for source type(s) " + missing);
  }
  for (auto& o : observations) {
    if (!o.log_se) o.log_se = max_se[static_cast<std::size_t>(o.source_type)];
  }
  return observations;
}

std::vector<Observation> attach_poisson_errors(std::vector<Observation> observations) {
  for (auto& o : observations) {
    if (o.log_se || o.source_type == SourceType::Survey) continue;
    std::optional<double> births = o.total_births;
    if (!births && o.live_births && o.stillbirth_count) births = *o.live_births + *o.stillbirth_count;
    if (!births || !(*births > 0.0)) continue;
    o.log_se = std::sqrt(log_sbr_variance(*births, o.sbr / 1000.0));
  }
  return observations;
}

}  // namespace sbr
