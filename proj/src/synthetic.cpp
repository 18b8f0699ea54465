#include "sbr/synthetic.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "sbr/preprocess.hpp"
#include "sbr/spline.hpp"

namespace sbr {

namespace {

std::string country_code(int c) {
  std::string code = "C";
  if (c < 10) code += '0';
  return code + std::to_string(c);
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
  if (config.n_countries < 1 || config.n_regions < 1 || config.n_regions > config.n_countries) {
    throw std::invalid_argument("synthetic: need 1 <= regions <= countries");
  }
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const int C = config.n_countries;
  const int R = config.n_regions;
  const int K = static_cast<int>(config.beta.size());
  SyntheticDataset out;

  for (int r = 0; r < R; ++r) out.countries.regions.push_back("R" + std::to_string(r + 1));
  for (int c = 0; c < C; ++c) {
    out.countries.countries.push_back(country_code(c + 1));
    out.countries.region_of.push_back(c % R);
    out.countries.income_group_of.push_back(c < C / 2 ? IncomeGroup::High : IncomeGroup::LowMiddle);
  }

  const auto basis = build_basis(config.year_start, config.year_end);
  const int T = basis.evaluations.rows();
  const int H = basis.n_basis;

  auto& raw = out.raw_covariates;
  raw.n_countries = C;
  raw.n_years = T;
  raw.values.resize(static_cast<Eigen::Index>(C) * T, K);
  for (int k = 0; k < K; ++k) {
    raw.specs.push_back({"x" + std::to_string(k + 1), false});
    for (int c = 0; c < C; ++c) {
      const double level = normal(rng);
      const double slope = 0.05 * normal(rng);
      for (int t = 0; t < T; ++t) raw.values(c * T + t, k) = level + slope * t + 0.1 * normal(rng);
    }
  }
  const auto covariates = standardize_covariates(raw, out.countries.countries, config.year_start);

  auto& p = out.truth;
  p.beta = Eigen::Map<const Eigen::VectorXd>(config.beta.data(), K);
  p.xi = config.xi;
  p.sigma_eta = config.sigma_eta;
  p.sigma_varsigma = config.sigma_varsigma;
  p.eta.resize(R);
  for (int r = 0; r < R; ++r) p.eta(r) = p.xi + p.sigma_eta * normal(rng);
  p.varsigma.resize(C);
  for (int c = 0; c < C; ++c) p.varsigma(c) = p.eta(c % R) + p.sigma_varsigma * normal(rng);
  p.sigma_delta = config.sigma_delta;
  p.alpha.resize(C, H);
  for (int c = 0; c < C; ++c) {
    double w = 0.0;
    p.alpha(c, 0) = 0.0;
    for (int h = 1; h < H; ++h) {
      w += p.sigma_delta * normal(rng);
      p.alpha(c, h) = w;
    }
    p.alpha.row(c).array() -= p.alpha.row(c).mean();
  }
  p.psi_survey = config.psi_survey;
  p.sigma_source = config.sigma_source;

  auto& spec = out.spec;
  spec.countries = out.countries;
  spec.covariates = covariates;
  for (int k = 0; k < K; ++k) spec.included.push_back(static_cast<std::size_t>(k));
  spec.basis = basis;
  out.theta = theta_grid(p, spec);

  std::discrete_distribution<int> source_dist(config.source_weights.begin(), config.source_weights.end());
  std::uniform_int_distribution<int> country_dist(0, C - 1);
  std::uniform_int_distribution<int> year_dist(0, T - 1);
  for (int i = 0; i < config.n_observations; ++i) {
    const int c = i < C ? i : country_dist(rng);
    const int t = year_dist(rng);
    const auto source = static_cast<SourceType>(source_dist(rng));
    const auto j = static_cast<std::size_t>(source);
    const double th = out.theta(c, t);

    Observation obs;
    obs.id = i + 1;
    obs.country = out.countries.countries[c];
    obs.year = config.year_start + t;
    obs.source_type = source;
    double s = 0.0;
    if (source == SourceType::Survey) {
      s = config.min_survey_se + (config.max_survey_se - config.min_survey_se) * unif(rng);
    } else {
      const double births = std::round(config.min_births + (config.max_births - config.min_births) * unif(rng));
      obs.total_births = births;
      s = std::sqrt(1.0 / (births * std::exp(th) / 1000.0));
    }
    const double sd = std::sqrt(s * s + config.sigma_source[j] * config.sigma_source[j]);
    const double log_y = th + p.psi(source) + sd * normal(rng);
    obs.sbr = std::exp(log_y);
    obs.log_se = s;
    if (obs.total_births) obs.stillbirth_count = obs.sbr * *obs.total_births / 1000.0;
    out.observations.push_back(obs);

    ModelObservation mo;
    mo.id = obs.id;
    mo.country = c;
    mo.year_index = t;
    mo.source = source;
    mo.log_y = log_y;
    mo.s2 = s * s;
    spec.observations.push_back(mo);
  }
  spec.validate();
  return out;
}

std::vector<PairedCounts> simulate_containing_pairs(Definition d, IncomeGroup g, int n, double expit_mu, double sigma,
                                                    double mean_alt, std::mt19937_64& rng) {
  if (pair_kind(d) != PairKind::Containing) throw std::invalid_argument("definition does not contain 28 weeks");
  std::normal_distribution<double> z(0.0, 1.0);
  std::poisson_distribution<long long> births(mean_alt);
  const double mu = std::log(expit_mu / (1 - expit_mu));
  std::vector<PairedCounts> out;
  for (int i = 0; i < n; ++i) {
    PairedCounts p;
    p.id = i + 1;
    p.definition = d;
    p.income_group = g;
    p.z_alt = static_cast<double>(births(rng));
    const double omega = 1.0 / (1.0 + std::exp(-(mu + sigma * z(rng))));
    p.z = static_cast<double>(std::binomial_distribution<long long>(static_cast<long long>(p.z_alt), omega)(rng));
    out.push_back(p);
  }
  return out;
}

std::vector<PairedCounts> simulate_overlapping_pairs(Definition d, IncomeGroup g, int n, double mu, double sigma,
                                                     double mean_n, std::mt19937_64& rng) {
  if (pair_kind(d) != PairKind::Overlapping) throw std::invalid_argument("definition does not overlap 28 weeks");
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::poisson_distribution<long long> births(mean_n);
  std::vector<PairedCounts> out;
  for (int i = 0; i < n; ++i) {
    const auto w = overlap_simplex(mu + sigma * z(rng), unif(rng));
    const auto total = births(rng);
    const auto a = std::binomial_distribution<long long>(total, w.a)(rng);
    const double rest = w.b + w.c;
    const auto b = rest > 0 ? std::binomial_distribution<long long>(total - a, std::min(1.0, w.b / rest))(rng) : 0;
    PairedCounts p;
    p.id = i + 1;
    p.definition = d;
    p.income_group = g;
    p.a = static_cast<double>(a);
    p.b = static_cast<double>(b);
    p.c = static_cast<double>(total - a - b);
    p.z = p.a + p.c;
    p.z_alt = p.a + p.b;
    out.push_back(p);
  }
  return out;
}

}  // namespace sbr
