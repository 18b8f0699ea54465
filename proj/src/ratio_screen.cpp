#include "sbr/ratio_screen.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "sbr/csv.hpp"
#include "sbr/errors.hpp"
#include "sbr/stats.hpp"
#include "sbr/variance.hpp"

namespace sbr {

namespace {

constexpr double kVarianceFloor = 1e-8;

}  // namespace

RatioModelFit fit_ratio_model(const std::vector<RatioDatum>& data, const SamplerConfig& sampler,
                              const RatioPriors& priors) {
  if (data.size() < 2) throw std::invalid_argument("ratio model needs at least 2 observations");
  std::vector<double> log_r, v2;
  for (const auto& d : data) {
    if (!(d.r > 0) || !(d.v2 >= 0)) {
      throw DataError("ratio observation " + std::to_string(d.id) + " needs r > 0 and v2 >= 0");
    }
    log_r.push_back(std::log(d.r));
    v2.push_back(d.v2);
  }

  // state: (mu, log sigma)
  Target target;
  target.dimension = 2;
  target.names = {"mu_theta", "sigma_theta"};
  target.log_density = [&, priors](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double mu = x(0);
    const double sigma = std::exp(x(1));
    g = Eigen::VectorXd::Zero(2);
    double lp = normal_log_density(mu, 0.0, priors.mu_sd * priors.mu_sd);
    g(0) = -mu / (priors.mu_sd * priors.mu_sd);
    const double s = sigma / priors.sigma_sd;
    lp += kLogTwo - kLogSqrtTwoPi - std::log(priors.sigma_sd) - 0.5 * s * s + x(1);
    g(1) = 1.0 - s * s;
    for (std::size_t i = 0; i < log_r.size(); ++i) {
      const double V = sigma * sigma + v2[i] + kVarianceFloor;
      const double r = log_r[i] - mu;
      lp += -kLogSqrtTwoPi - 0.5 * std::log(V) - 0.5 * r * r / V;
      g(0) += r / V;
      g(1) += sigma * sigma * (r * r / V - 1.0) / V;
    }
    return lp;
  };
  target.constrain = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd c(2);
    c << x(0), std::exp(x(1));
    return c;
  };
  const double centre = mean(log_r);
  target.initialize = [centre](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd x(2);
    x << centre + 0.1 * u(rng), -1.0 + u(rng);
    return x;
  };

  const auto draws = sample(target, sampler);
  RatioModelFit fit;
  fit.mu_draws = draws.pooled(0);
  for (double s : draws.pooled(1)) fit.sigma2_draws.push_back(s * s);
  fit.mu_median = median(fit.mu_draws);
  fit.mu_lower = quantile(fit.mu_draws, 0.025);
  fit.mu_upper = quantile(fit.mu_draws, 0.975);
  fit.sigma2_median = median(fit.sigma2_draws);

  // E[theta_i | mu, sigma, data] averaged over draws
  fit.theta_mean.assign(log_r.size(), 0.0);
  for (std::size_t s = 0; s < fit.mu_draws.size(); ++s) {
    const double mu = fit.mu_draws[s];
    const double s2 = fit.sigma2_draws[s] + kVarianceFloor;
    for (std::size_t i = 0; i < log_r.size(); ++i) {
      fit.theta_mean[i] += mu + s2 / (s2 + v2[i]) * (log_r[i] - mu);
    }
  }
  for (auto& t : fit.theta_mean) t /= static_cast<double>(fit.mu_draws.size());
  return fit;
}

double exclusion_tail_probability(double r, double v2, double mu, double sigma2) {
  if (!(r > 0)) throw std::invalid_argument("ratio must be positive");
  if (!(v2 >= 0) || !(sigma2 + v2 > 0)) throw std::invalid_argument("predictive variance must be positive");
  return normal_cdf((std::log(r) - mu) / std::sqrt(sigma2 + v2));
}

double exclusion_tail_probability(double r, double v2, const RatioModelFit& fit) {
  return exclusion_tail_probability(r, v2, fit.mu_median, fit.sigma2_median);
}

double exclusion_boundary(double mu, double sigma2, double threshold) {
  return std::exp(mu + normal_quantile(threshold) * std::sqrt(sigma2));
}

std::string_view to_string(ScreenDecision d) {
  switch (d) {
    case ScreenDecision::Kept: return "kept";
    case ScreenDecision::Excluded: return "excluded";
    case ScreenDecision::CannotScreen: return "cannot_screen";
  }
  return "";
}

ScreenResult resolve_ratio(const ScreenInput& input, const NmrPolicy& policy) {
  const auto& o = input.observation;
  ScreenResult out;
  out.id = o.id;
  const double sbr = o.sbr * std::exp(-input.gamma);
  const double s2 = o.log_se ? *o.log_se * *o.log_se : 0.0;

  if (o.nmr) {
    out.r = sbr / *o.nmr;
    if (o.stillbirth_count && o.total_births && o.live_births) {
      RatioVarianceInput mc;
      mc.stillbirths = *o.stillbirth_count;
      mc.total_births = *o.total_births;
      mc.live_births = *o.live_births;
      mc.neonatal_deaths = *o.nmr * *o.live_births / 1000.0;
      mc.n_samples = policy.mc_samples;
      mc.seed = derive_seed(policy.seed, static_cast<std::uint64_t>(o.id));
      out.v2 = mc_log_ratio_variance(mc).variance;
      out.note = "same-source counts";
    } else {
      out.v2 = s2;
      out.note = "same-source rate";
    }
  } else if (auto it = policy.national_nmr.find({o.country, o.year}); it != policy.national_nmr.end()) {
    out.r = sbr / it->second;
    out.v2 = s2;
    out.note = "national estimate";
  } else {
    out.note = "no NMR available";
    return out;
  }
  out.v2 += input.phi2;
  return out;
}

std::vector<ScreenResult> apply_exclusion(const std::vector<ScreenInput>& inputs, const RatioModelFit& fit,
                                          const NmrPolicy& policy, double threshold) {
  std::vector<ScreenResult> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto res = resolve_ratio(in, policy);
    if (res.r && *res.r > 0 && std::isfinite(*res.r)) {
      res.p = exclusion_tail_probability(*res.r, res.v2, fit);
      res.decision = *res.p < threshold ? ScreenDecision::Excluded : ScreenDecision::Kept;
    } else {
      res.decision = ScreenDecision::CannotScreen;
      if (res.r) res.note = "non-positive ratio";
    }
    out.push_back(std::move(res));
  }
  return out;
}

void write_exclusions(const std::filesystem::path& path, const std::vector<ScreenResult>& results) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  CsvWriter w(out);
  w.row({"id", "r", "v2", "p", "decision", "note"});
  for (const auto& r : results) {
    w.row({std::to_string(r.id), r.r ? format_number(*r.r) : "NA", format_number(r.v2),
           r.p ? format_number(*r.p) : "NA", std::string(to_string(r.decision)), r.note});
  }
}

}  // namespace sbr
