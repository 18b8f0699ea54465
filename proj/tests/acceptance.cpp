// Acceptance suite. Prints one PASS/FAIL line per criterion; exit status is the
// number of failures. Arguments select criteria by number (default: all).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "sbr/def_adjust.hpp"
#include "sbr/diagnostics.hpp"
#include "sbr/model.hpp"
#include "sbr/pipeline.hpp"
#include "sbr/psis.hpp"
#include "sbr/ratio_screen.hpp"
#include "sbr/sampler.hpp"
#include "sbr/spline.hpp"
#include "sbr/stats.hpp"
#include "sbr/synthetic.hpp"
#include "sbr/validation.hpp"

using namespace sbr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double log_normal(double x, double m, double var) {
  return -0.5 * std::log(2 * std::numbers::pi * var) - 0.5 * (x - m) * (x - m) / var;
}

struct Interval {
  double lo, hi;
  bool covers(double v) const { return lo <= v && v <= hi; }
};

Interval interval95(const std::vector<double>& v) { return {quantile(v, 0.025), quantile(v, 0.975)}; }

// 1 -----------------------------------------------------------------------------

Outcome exclusion_identity() {
  const double mu = -0.180, sigma2 = 0.083;
  const double direct = std::exp(mu - 1.645 * std::sqrt(sigma2));
  const double boundary = exclusion_boundary(mu, sigma2, 0.05);
  const bool pass = std::abs(direct - 0.52) <= 0.01 && std::abs(boundary - 0.52) <= 0.01 &&
                    std::abs(exclusion_tail_probability(boundary, 0.0, mu, sigma2) - 0.05) < 1e-12;
  return {pass, fmt("boundary %.4f (formula %.4f)", boundary, direct)};
}

// 2 -----------------------------------------------------------------------------

Outcome gradient_check() {
  SyntheticConfig cfg;
  cfg.n_countries = 5;
  cfg.year_end = 2009;
  cfg.beta = {0.3, -0.2, 0.05};
  cfg.n_observations = 40;
  cfg.seed = 3;
  auto spec = generate_synthetic(cfg).spec;
  for (std::size_t i = 0; i < spec.observations.size(); i += 7) {
    spec.observations[i].gamma = 0.2;
    spec.observations[i].phi2 = 0.01;
  }
  double worst = 0.0;
  int points = 0;
  for (auto mode : {PriorMode::RegularizedHorseshoe, PriorMode::SubsettedVague}) {
    spec.prior.mode = mode;
    ParameterLayout layout(spec);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int rep = 0; rep < 20; ++rep, ++points) {
      Eigen::VectorXd x(layout.unconstrained_dim()), grad, scratch;
      for (auto& v : x) v = u(rng);
      log_posterior(spec, layout, x, grad);
      for (int i = 0; i < x.size(); ++i) {
        const double h = 1e-5;
        Eigen::VectorXd up = x, dn = x;
        up(i) += h;
        dn(i) -= h;
        const double fd = (log_posterior(spec, layout, up, scratch) - log_posterior(spec, layout, dn, scratch)) / (2 * h);
        worst = std::max(worst, std::abs(fd - grad(i)) / std::max(1.0, std::abs(grad(i))));
      }
    }
  }
  return {worst < 1e-5, fmt("max relative error %.2e over %d points", worst, points)};
}

// 3 -----------------------------------------------------------------------------

Target gaussian_target(const Eigen::MatrixXd& cov) {
  const Eigen::MatrixXd prec = cov.inverse();
  Target t;
  t.dimension = static_cast<int>(cov.rows());
  t.log_density = [prec](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = -prec * x;
    return 0.5 * x.dot(g);
  };
  return t;
}

Outcome sampler_check() {
  SamplerConfig sc;
  sc.n_chains = 4;
  sc.n_iter = 11000;
  sc.n_warmup = 1000;
  sc.seed = 11;
  std::vector<Eigen::MatrixXd> targets = {Eigen::MatrixXd::Identity(10, 10), Eigen::MatrixXd(2, 2)};
  targets[1] << 1.0, 0.9, 0.9, 1.0;
  double worst_mean = 0, worst_cov = 0, worst_rhat = 0, min_ess = 1e300;
  bool pass = true;
  for (const auto& cov : targets) {
    const auto draws = sample(gaussian_target(cov), sc);
    const int d = static_cast<int>(cov.rows());
    Eigen::MatrixXd all(static_cast<Eigen::Index>(draws.n_pooled()), d);
    for (std::size_t s = 0; s < draws.n_pooled(); ++s) all.row(static_cast<Eigen::Index>(s)) = draws.pooled_row(s);
    const Eigen::RowVectorXd m = all.colwise().mean();
    const Eigen::MatrixXd centred = all.rowwise() - m;
    const Eigen::MatrixXd emp = centred.transpose() * centred / double(all.rows() - 1);
    for (int i = 0; i < d; ++i) {
      worst_mean = std::max(worst_mean, std::abs(m(i)));
      for (int j = 0; j < d; ++j) {
        // 5% of the variance scale for every entry
        const double err = std::abs(emp(i, j) - cov(i, j)) / std::sqrt(cov(i, i) * cov(j, j));
        worst_cov = std::max(worst_cov, err);
      }
      const auto p = draws.parameter(static_cast<std::size_t>(i));
      worst_rhat = std::max(worst_rhat, split_rhat(p));
      min_ess = std::min(min_ess, ess(p, EssKind::Bulk));
    }
  }
  pass = worst_mean < 0.05 && worst_cov < 0.05 && worst_rhat < 1.01 && min_ess > 400;
  return {pass, fmt("max |mean| %.3f, max cov error %.3f, max R-hat %.4f, min bulk ESS %.0f", worst_mean, worst_cov,
                    worst_rhat, min_ess)};
}

// 4 -----------------------------------------------------------------------------

SamplerConfig model_sampler(std::uint64_t seed) {
  SamplerConfig sc;
  sc.n_chains = 4;
  sc.n_iter = 1000;
  sc.n_warmup = 500;
  sc.target_accept = 0.9;
  sc.seed = seed;
  return sc;
}

Outcome parameter_recovery() {
  const int reps = 20;
  int beta_in = 0, beta_n = 0, psi_in = 0, sig_in = 0, sig_n = 0, th_in = 0, th_n = 0;
  double worst_zero = 0.0;
  std::set<SourceType> seen;
  for (int rep = 0; rep < reps; ++rep) {
    SyntheticConfig cfg;  // 8 countries, 2 regions, 20 years, 4 covariates (two zero), 120 obs
    cfg.seed = 1000 + rep;
    const auto data = generate_synthetic(cfg);
    auto spec = data.spec;
    for (const auto& o : spec.observations) seen.insert(o.source);
    spec.prior.tau0 = tau0_from_sparsity_guess(2, spec.n_covariates(), 1.0, double(spec.observations.size()));
    SbrModel model(spec);
    const auto draws = sample(model.target(), model_sampler(derive_seed(77, rep)));
    const auto& layout = model.layout();
    const int K = spec.n_covariates(), C = spec.n_countries(), T = spec.n_years();
    const std::size_t S = draws.n_pooled();
    std::vector<std::vector<double>> beta(K), sig(kSourceTypeCount), th(static_cast<std::size_t>(C * T));
    std::vector<double> psi;
    for (std::size_t s = 0; s < S; ++s) {
      const auto p = layout.unpack(draws.pooled_row(s));
      for (int k = 0; k < K; ++k) beta[k].push_back(p.beta(k));
      for (std::size_t j = 0; j < kSourceTypeCount; ++j) sig[j].push_back(p.sigma_source[j]);
      psi.push_back(p.psi_survey);
      const auto grid = theta_grid(p, spec);
      for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t) th[c * T + t].push_back(grid(c, t));
    }
    for (int k = 0; k < K; ++k) {
      beta_in += interval95(beta[k]).covers(data.truth.beta(k));
      ++beta_n;
      if (data.truth.beta(k) == 0.0) worst_zero = std::max(worst_zero, std::abs(median(beta[k])));
    }
    psi_in += interval95(psi).covers(data.truth.psi_survey);
    for (std::size_t j = 0; j < kSourceTypeCount; ++j, ++sig_n) sig_in += interval95(sig[j]).covers(data.truth.sigma_source[j]);
    for (int c = 0; c < C; ++c)
      for (int t = 0; t < T; ++t, ++th_n) th_in += interval95(th[c * T + t]).covers(data.theta(c, t));
    std::cerr << fmt("  replication %2d: beta %d/%d psi %d sigma %d/%d theta %d/%d\n", rep + 1, beta_in, beta_n, psi_in,
                     sig_in, sig_n, th_in, th_n);
  }
  const double floor = 0.85;
  const double rb = double(beta_in) / beta_n, rp = double(psi_in) / reps, rs = double(sig_in) / sig_n,
               rt = double(th_in) / th_n;
  const bool pass = rb >= floor && rp >= floor && rs >= floor && rt >= floor && worst_zero < 0.05 &&
                    seen.size() == kSourceTypeCount;
  return {pass, fmt("coverage beta %.3f, psi_survey %.3f, sigma_j %.3f, theta %.3f; max |median| of zero beta %.4f",
                    rb, rp, rs, rt, worst_zero)};
}

// 5 -----------------------------------------------------------------------------

Outcome adjustment_recovery() {
  const int reps = 50;
  SamplerConfig sc;
  sc.n_chains = 2;
  sc.n_iter = 1000;
  sc.n_warmup = 500;
  sc.target_accept = 0.9;
  const double c_mu = std::log(0.8 / 0.2), c_sigma = 0.15;  // containing: expit(mu) = 0.8
  const double o_mu = 0.15, o_sigma = 0.1;
  int cm = 0, cs = 0, om = 0, os = 0;
  double worst_simplex = 0.0, worst_constraint = 0.0;
  for (int rep = 0; rep < reps; ++rep) {
    std::mt19937_64 rng(derive_seed(505, rep));
    sc.seed = derive_seed(506, rep);
    const auto cpairs = simulate_containing_pairs(Definition::Ge22Weeks, IncomeGroup::High, 30, 0.8, c_sigma, 200, rng);
    const auto cfit = fit_containing(cpairs, sc);
    cm += interval95(cfit.mu).covers(c_mu);
    cs += interval95(cfit.sigma).covers(c_sigma);

    const auto opairs = simulate_overlapping_pairs(Definition::Ge1000g, IncomeGroup::High, 30, o_mu, o_sigma, 300, rng);
    const auto ofit = fit_overlapping(opairs, sc);
    om += interval95(ofit.mu).covers(o_mu);
    os += interval95(ofit.sigma).covers(o_sigma);
    for (Eigen::Index s = 0; s < ofit.unit.rows(); ++s) {
      for (Eigen::Index i = 0; i < ofit.unit.cols(); ++i) {
        const double a = ofit.omega_a(s, i), b = ofit.omega_b(s, i), c = ofit.omega_c(s, i);
        worst_simplex = std::max({worst_simplex, std::abs(a + b + c - 1.0), -std::min({a, b, c})});
        worst_constraint = std::max(worst_constraint, std::abs(std::log((a + b) / (a + c)) - ofit.unit(s, i)));
      }
    }
  }
  const int need = 45;  // 90% of 50
  const bool pass = cm >= need && cs >= need && om >= need && os >= need && worst_simplex < 1e-12 &&
                    worst_constraint < 1e-9;
  return {pass, fmt("covered of %d: mu_omega %d, sigma_omega %d, mu_Gamma %d, sigma_Gamma %d; simplex error %.1e, "
                    "Gamma constraint error %.1e",
                    reps, cm, cs, om, os, worst_simplex, worst_constraint)};
}

// 6 -----------------------------------------------------------------------------

Outcome validation_calibration() {
  const int reps = 20;
  double below5 = 0, below10 = 0, above90 = 0, above95 = 0, n = 0;
  for (int rep = 0; rep < reps; ++rep) {
    SyntheticConfig cfg;
    cfg.seed = 6000 + rep;
    auto spec = generate_synthetic(cfg).spec;
    spec.prior.tau0 = tau0_from_sparsity_guess(2, spec.n_covariates(), 1.0, double(spec.observations.size()));
    ValidationConfig vc;
    vc.recent = false;
    vc.in_sample = false;
    vc.random_replicates = 1;
    vc.sampler = model_sampler(derive_seed(66, rep));
    vc.seed = derive_seed(67, rep);
    const auto outcome = run_validation(spec, PosteriorDraws{}, vc);
    const auto& r = outcome.reports.at(0);
    const double m = double(r.n_test);
    below5 += r.pct_below_5 / 100 * m;
    below10 += r.pct_below_10 / 100 * m;
    above90 += r.pct_above_90 / 100 * m;
    above95 += r.pct_above_95 / 100 * m;
    n += m;
    std::cerr << fmt("  replication %2d: n %.0f tails %.0f %.0f %.0f %.0f\n", rep + 1, n, below5, below10, above90, above95);
  }
  bool pass = true;
  std::string detail = fmt("n=%.0f;", n);
  const std::pair<double, double> shares[] = {{below5, 0.05}, {below10, 0.10}, {above90, 0.10}, {above95, 0.05}};
  for (const auto& [count, p] : shares) {
    const double share = std::round(count) / n;
    const double se = std::sqrt(p * (1 - p) / n);
    pass = pass && std::abs(share - p) <= 2 * se;
    detail += fmt(" %.1f%% (nominal %.0f%%, 2 SE %.1f)", 100 * share, 100 * p, 200 * se);
  }
  return {pass, detail};
}

// 7 -----------------------------------------------------------------------------

Outcome loo_oracle() {
  // y_i ~ N(mu, 1), mu ~ N(0, 100): exact posterior draws, exact leave-one-out predictive
  const int n = 50, S = 4000;
  const double prior_var = 100.0, obs_var = 1.0;
  std::mt19937_64 rng(71);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> y(n);
  for (auto& v : y) v = 1.0 + z(rng);
  const double sum = std::accumulate(y.begin(), y.end(), 0.0);
  auto posterior = [&](double total, int count) {
    const double prec = 1.0 / prior_var + count / obs_var;
    return std::pair{total / obs_var / prec, 1.0 / prec};
  };
  const auto [m, v] = posterior(sum, n);
  Eigen::MatrixXd ll(S, n);
  for (int s = 0; s < S; ++s) {
    const double mu = m + std::sqrt(v) * z(rng);
    for (int i = 0; i < n; ++i) ll(s, i) = log_normal(y[i], mu, obs_var);
  }
  double exact = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto [mi, vi] = posterior(sum - y[i], n - 1);
    exact += log_normal(y[i], mi, obs_var + vi);
  }
  const auto loo = psis_loo(ll);
  const double kmax = *std::max_element(loo.pareto_k.begin(), loo.pareto_k.end());
  const bool pass = std::abs(loo.elpd_loo - exact) < 2 * loo.se && kmax < 0.7;
  return {pass, fmt("elpd_loo %.3f vs exact %.3f (SE %.3f), max Pareto k %.3f", loo.elpd_loo, exact, loo.se, kmax)};
}

// 8 -----------------------------------------------------------------------------

Outcome spline_properties() {
  const auto b = build_basis(2000, 2019);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(2000.0, 2019.0);
  double unity = 0.0, linear = 0.0;
  // coefficients h - 1 reproduce t - knot offset: sum_h (h + c) k_h(x) is affine in x
  std::vector<double> ramp(b.n_basis);
  for (int h = 0; h < b.n_basis; ++h) ramp[h] = h;
  const auto r0 = b.evaluate(2000.0);
  double offset = 0.0;
  for (int h = 0; h < b.n_basis; ++h) offset += ramp[h] * r0(h);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    const auto row = b.evaluate(x);
    unity = std::max(unity, std::abs(row.sum() - 1.0));
    double val = 0.0;
    for (int h = 0; h < b.n_basis; ++h) val += ramp[h] * row(h);
    linear = std::max(linear, std::abs(val - (offset + (x - 2000.0))));
  }
  const std::vector<double> knots = {0, 1, 2, 3};
  const double at_knot = quadratic_bspline(knots, 0, 1.0);
  const double mid = quadratic_bspline(knots, 0, 1.5);
  const bool pass = unity < 1e-12 && linear < 1e-10 && std::abs(at_knot - 0.5) < 1e-15 && std::abs(mid - 0.75) < 1e-15;
  return {pass, fmt("unity error %.1e, linear error %.1e, knot %.3f, midpoint %.3f", unity, linear, at_knot, mid)};
}

// 9 -----------------------------------------------------------------------------

Outcome subsetting() {
  const std::vector<std::pair<std::string, double>> medians = {
      {"log(nmr)", 0.414}, {"log(gni)", -0.102}, {"log(lbw)", 0.078}, {"edu", -0.037},  {"csec", -0.027},
      {"anc4", -0.025},    {"pab", -0.018},      {"abr", -0.017},     {"urban", -0.012}, {"gini", 0.010},
      {"sab", -0.010},     {"anc1", -0.009},     {"mmr", 0.003},      {"pfpr", -0.002},  {"gdp", 0.001},
      {"gfr", 0.000}};
  std::vector<double> values;
  for (const auto& m : medians) values.push_back(m.second);
  std::set<std::string> chosen;
  for (auto k : subset_covariates(values, 0.025)) chosen.insert(medians[k].first);
  const std::set<std::string> expected = {"log(nmr)", "log(gni)", "log(lbw)", "edu", "csec", "anc4"};
  std::string names;
  for (const auto& c : chosen) names += (names.empty() ? "" : " ") + c;
  return {chosen == expected, "selected {" + names + "}"};
}

// 10 ----------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome reproducibility() {
  const auto root = fs::temp_directory_path() / "sbr_acceptance_repro";
  fs::remove_all(root);
  write_synthetic_fixture(root, 2024);
  std::string first, second;
  for (const char* run : {"run_a", "run_b"}) {
    auto cfg = load_pipeline_config(root / "config.json");
    cfg.output_dir = root / run;
    run_pipeline(cfg);
    (first.empty() ? first : second) = slurp(root / run / "estimates.csv");
  }
  const bool pass = !first.empty() && first == second;
  const auto bytes = first.size();
  fs::remove_all(root);
  return {pass, fmt("estimates.csv %zu bytes, %s", bytes, pass ? "identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"exclusion boundary identity", exclusion_identity},
      {"log posterior gradient", gradient_check},
      {"sampler on Gaussian targets", sampler_check},
      {"parameter recovery", parameter_recovery},
      {"definitional adjustment recovery", adjustment_recovery},
      {"validation calibration", validation_calibration},
      {"PSIS-LOO oracle", loo_oracle},
      {"spline properties", spline_properties},
      {"covariate subsetting", subsetting},
      {"end-to-end reproducibility", reproducibility},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.contains(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !out.pass;
    std::cout << "criterion " << id << ' ' << (out.pass ? "PASS" : "FAIL") << " (" << criteria[i].first
              << "): " << out.detail << fmt(" [%.1fs]", secs) << std::endl;
  }
  return failures;
}
