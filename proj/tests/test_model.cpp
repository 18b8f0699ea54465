#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "sbr/errors.hpp"
#include "sbr/model.hpp"
#include "sbr/spline.hpp"
#include "sbr/synthetic.hpp"

using namespace sbr;

namespace {

ModelSpec small_spec(PriorMode mode, std::uint64_t seed = 3) {
  SyntheticConfig cfg;
  cfg.n_countries = 5;
  cfg.n_regions = 2;
  cfg.year_start = 2000;
  cfg.year_end = 2009;
  cfg.beta = {0.3, -0.2, 0.05};
  cfg.n_observations = 40;
  cfg.seed = seed;
  auto spec = generate_synthetic(cfg).spec;
  spec.prior.mode = mode;
  // give a few observations definitional shifts so every likelihood input is exercised
  for (std::size_t i = 0; i < spec.observations.size(); i += 7) {
    spec.observations[i].gamma = 0.2;
    spec.observations[i].phi2 = 0.01;
  }
  return spec;
}

Eigen::VectorXd random_point(int dim, std::mt19937_64& rng, double radius = 1.5) {
  std::uniform_real_distribution<double> u(-radius, radius);
  Eigen::VectorXd x(dim);
  for (int i = 0; i < dim; ++i) x(i) = u(rng);
  return x;
}

double log_normal(double x, double m, double sd) {
  return -0.5 * std::log(2 * std::numbers::pi) - std::log(sd) - 0.5 * (x - m) * (x - m) / (sd * sd);
}

double log_half_normal(double x, double sd) { return std::log(2.0) + log_normal(x, 0.0, sd); }

double log_half_cauchy(double x, double s) {
  return std::log(2.0 / (std::numbers::pi * s * (1 + (x / s) * (x / s))));
}

// Constrained-space densities plus the log Jacobian of every transform, written
// out directly from the model formulas.
double transcribed_log_posterior(const ModelSpec& spec, const ParameterLayout& layout, const Eigen::VectorXd& u) {
  const auto p = layout.constrain(u);
  const int K = spec.n_covariates(), C = spec.n_countries(), R = spec.n_regions(), H = spec.n_basis();
  double lp = 0.0;

  for (const auto& o : spec.observations) {
    double th = p.varsigma(o.country);
    for (int k = 0; k < K; ++k) th += spec.covariates.at(k, o.country, o.year_index) * p.beta(k);
    for (int h = 0; h < H; ++h) {
      th += quadratic_bspline(spec.basis.knots, h, spec.basis.year_start + o.year_index) * p.alpha(o.country, h);
    }
    const double psi = o.source == SourceType::Survey ? p.psi_survey : 0.0;
    const double sj = p.sigma_source[static_cast<int>(o.source)];
    lp += log_normal(o.log_y, th + psi + o.gamma, std::sqrt(o.s2 + o.phi2 + sj * sj));
  }

  if (layout.horseshoe()) {
    const double q = spec.prior.q, g = spec.prior.g;
    for (int k = 0; k < K; ++k) {
      const double l2 = p.lambda(k) * p.lambda(k);
      const double lt2 = p.rho2 * l2 / (p.rho2 + p.tau * p.tau * l2);
      const double sd = p.tau * std::sqrt(lt2);
      lp += log_normal(p.beta(k), 0.0, sd) + std::log(sd);
      lp += log_half_cauchy(p.lambda(k), 1.0) + std::log(p.lambda(k));
    }
    lp += log_half_cauchy(p.tau, spec.prior.tau0) + std::log(p.tau);
    lp += q * std::log(g) - std::lgamma(q) - (q + 1) * std::log(p.rho2) - g / p.rho2 + std::log(p.rho2);
  } else {
    for (int k = 0; k < K; ++k) lp += log_normal(p.beta(k), 0.0, 5.0) + std::log(5.0);
  }

  lp += log_normal(p.xi, 2.5, 2.0);
  lp += log_half_normal(p.sigma_eta, 1.0) + std::log(p.sigma_eta);
  lp += log_half_normal(p.sigma_varsigma, 1.0) + std::log(p.sigma_varsigma);
  for (int r = 0; r < R; ++r) lp += log_normal(p.eta(r), p.xi, p.sigma_eta) + std::log(p.sigma_eta);
  for (int c = 0; c < C; ++c) {
    lp += log_normal(p.varsigma(c), p.eta(spec.countries.region_of[c]), p.sigma_varsigma);
  }

  // sigma_delta ~ U(0, 3); Jacobian of 3 * logistic
  const double s = p.sigma_delta / 3.0;
  lp += -std::log(3.0) + std::log(3.0 * s * (1 - s));
  for (int c = 0; c < C; ++c) {
    for (int h = 1; h < H; ++h) {
      lp += log_normal(p.alpha(c, h) - p.alpha(c, h - 1), 0.0, p.sigma_delta) + std::log(p.sigma_delta);
    }
  }

  lp += log_half_normal(-p.psi_survey, 5.0) + std::log(-p.psi_survey);
  for (double sj : p.sigma_source) lp += log_half_normal(sj, 1.0) + std::log(sj);
  return lp;
}

}  // namespace

TEST_CASE("theta: intercept only and linearity") {
  auto spec = small_spec(PriorMode::RegularizedHorseshoe);
  ParameterLayout layout(spec);
  ModelParameters p;
  p.beta = Eigen::VectorXd::Zero(spec.n_covariates());
  p.varsigma = Eigen::VectorXd::Constant(spec.n_countries(), 2.5);
  p.alpha = Eigen::MatrixXd::Zero(spec.n_countries(), spec.n_basis());
  CHECK(theta(p, spec, 1, 4) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(std::exp(theta(p, spec, 1, 4)) == doctest::Approx(12.182).epsilon(1e-4));

  spec.covariates.values(1 * spec.n_years() + 4, 0) = 2.0;
  p.beta(0) = 0.5;
  CHECK(theta(p, spec, 1, 4) == doctest::Approx(3.5).epsilon(1e-15));
}

TEST_CASE("theta matches an independent evaluation at random parameters") {
  const auto spec = small_spec(PriorMode::RegularizedHorseshoe);
  ParameterLayout layout(spec);
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    const auto p = layout.constrain(random_point(layout.unconstrained_dim(), rng));
    const auto grid = theta_grid(p, spec);
    for (int c = 0; c < spec.n_countries(); ++c) {
      for (int t = 0; t < spec.n_years(); ++t) {
        double expected = p.varsigma(c);
        for (int k = 0; k < spec.n_covariates(); ++k) expected += spec.covariates.at(k, c, t) * p.beta(k);
        for (int h = 0; h < spec.n_basis(); ++h) {
          expected += quadratic_bspline(spec.basis.knots, h, 2000 + t) * p.alpha(c, h);
        }
        CHECK(grid(c, t) == doctest::Approx(expected).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("log_posterior equals a direct transcription of the densities") {
  for (auto mode : {PriorMode::RegularizedHorseshoe, PriorMode::SubsettedVague}) {
    SyntheticConfig cfg;
    cfg.n_countries = 2;
    cfg.n_regions = 1;
    cfg.year_start = 2000;
    cfg.year_end = 2002;
    cfg.beta = {0.2};
    cfg.n_observations = 4;
    cfg.source_weights = {1, 1, 1, 1};
    auto spec = generate_synthetic(cfg).spec;
    spec.prior.mode = mode;
    spec.observations[0].gamma = -0.1;
    spec.observations[0].phi2 = 0.02;
    ParameterLayout layout(spec);
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 10; ++rep) {
      const auto u = random_point(layout.unconstrained_dim(), rng);
      Eigen::VectorXd grad;
      const double lp = log_posterior(spec, layout, u, grad);
      CHECK(lp == doctest::Approx(transcribed_log_posterior(spec, layout, u)).epsilon(1e-10));
      CHECK(std::abs(lp - transcribed_log_posterior(spec, layout, u)) < 1e-10);
    }
  }
}

TEST_CASE("log_posterior gradient matches central finite differences") {
  for (auto mode : {PriorMode::RegularizedHorseshoe, PriorMode::SubsettedVague}) {
    const auto spec = small_spec(mode);
    ParameterLayout layout(spec);
    std::mt19937_64 rng(17);
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      const auto u = random_point(layout.unconstrained_dim(), rng);
      Eigen::VectorXd grad, scratch;
      log_posterior(spec, layout, u, grad);
      for (int i = 0; i < u.size(); ++i) {
        const double h = 1e-5;
        Eigen::VectorXd up = u, dn = u;
        up(i) += h;
        dn(i) -= h;
        const double fd = (log_posterior(spec, layout, up, scratch) - log_posterior(spec, layout, dn, scratch)) / (2 * h);
        worst = std::max(worst, std::abs(fd - grad(i)) / std::max(1.0, std::abs(grad(i))));
      }
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("doubling s^2 rescales each likelihood term in closed form") {
  auto spec = small_spec(PriorMode::RegularizedHorseshoe);
  ParameterLayout layout(spec);
  std::mt19937_64 rng(2);
  auto p = layout.constrain(random_point(layout.unconstrained_dim(), rng));
  p.psi_survey = 0.0;
  p.sigma_source.fill(0.0);
  for (auto o : spec.observations) {
    o.gamma = 0.0;
    o.phi2 = 0.0;
    const double before = pointwise_log_likelihood(p, spec, o);
    const double r2 = std::pow(o.log_y - theta(p, spec, o.country, o.year_index), 2);
    auto doubled = o;
    doubled.s2 *= 2.0;
    const double after = pointwise_log_likelihood(p, spec, doubled);
    CHECK(after - before == doctest::Approx(-0.5 * std::log(2.0) + 0.25 * r2 / o.s2).epsilon(1e-9));
  }
}

TEST_CASE("regularized local scale limits") {
  ModelSpec spec = small_spec(PriorMode::RegularizedHorseshoe);
  ParameterLayout layout(spec);
  const auto& off = layout.offsets();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(layout.unconstrained_dim());
  u(off.beta_z) = 1.0;  // beta_0 = tau * lambda_tilde_0
  const double rho2 = 4.0;
  u(off.log_rho2) = std::log(rho2);

  // tau * lambda -> 0: lambda_tilde^2 -> lambda^2
  u(off.log_tau) = std::log(1e-6);
  u(off.log_lambda) = std::log(2.0);
  auto p = layout.constrain(u);
  const double small_lt = p.beta(0) / p.tau;
  CHECK(small_lt * small_lt == doctest::Approx(4.0).epsilon(1e-9));

  // tau * lambda -> infinity: lambda_tilde^2 -> rho^2 / tau^2
  u(off.log_tau) = std::log(3.0);
  u(off.log_lambda) = std::log(1e8);
  p = layout.constrain(u);
  const double big_lt = p.beta(0) / p.tau;
  CHECK(big_lt * big_lt == doctest::Approx(rho2 / 9.0).epsilon(1e-9));
}

TEST_CASE("definitional shift moved into the intercept leaves likelihood terms unchanged") {
  auto spec = small_spec(PriorMode::RegularizedHorseshoe);
  ParameterLayout layout(spec);
  std::mt19937_64 rng(9);
  const auto p = layout.constrain(random_point(layout.unconstrained_dim(), rng));
  const double shift = 0.37;
  auto shifted = spec;
  for (auto& o : shifted.observations) o.gamma += shift;
  auto q = p;
  q.varsigma.array() -= shift;
  for (std::size_t i = 0; i < spec.observations.size(); ++i) {
    CHECK(pointwise_log_likelihood(p, spec, spec.observations[i]) ==
          doctest::Approx(pointwise_log_likelihood(q, shifted, shifted.observations[i])).epsilon(1e-12));
  }
}

TEST_CASE("xi enters the density only through the regional prior") {
  const auto spec = small_spec(PriorMode::RegularizedHorseshoe);
  ParameterLayout layout(spec);
  std::mt19937_64 rng(4);
  const auto u = random_point(layout.unconstrained_dim(), rng);
  Eigen::VectorXd grad;
  log_posterior(spec, layout, u, grad);
  const auto p = layout.constrain(u);
  // eta_r = xi + sigma_eta z_r moves with xi; countries are centered on eta
  double expected = -(p.xi - 2.5) / 4.0;
  for (int c = 0; c < spec.n_countries(); ++c) {
    expected += (p.varsigma(c) - p.eta(spec.countries.region_of[c])) / (p.sigma_varsigma * p.sigma_varsigma);
  }
  CHECK(grad(layout.offsets().xi) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("constrained draws satisfy the parameter invariants") {
  const auto spec = small_spec(PriorMode::RegularizedHorseshoe);
  ParameterLayout layout(spec);
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    const auto p = layout.constrain(random_point(layout.unconstrained_dim(), rng, 4.0));
    for (int c = 0; c < spec.n_countries(); ++c) CHECK(std::abs(p.alpha.row(c).mean()) < 1e-12);
    CHECK(p.sigma_delta > 0.0);
    CHECK(p.sigma_delta < 3.0);
    CHECK(p.psi_survey <= 0.0);
    CHECK(p.tau > 0.0);
    CHECK(p.rho2 > 0.0);
    CHECK((p.lambda.array() > 0).all());
    for (double s : p.sigma_source) CHECK(s > 0.0);
    // pack/unpack round trip
    const auto v = layout.pack(p);
    CHECK(v.size() == layout.constrained_dim());
    CHECK(layout.pack(layout.unpack(v)).isApprox(v, 0.0));
  }
}

TEST_CASE("non-finite density names its block") {
  auto spec = small_spec(PriorMode::RegularizedHorseshoe);
  spec.observations[0].log_y = std::numeric_limits<double>::infinity();
  ParameterLayout layout(spec);
  Eigen::VectorXd grad;
  try {
    log_posterior(spec, layout, Eigen::VectorXd::Zero(layout.unconstrained_dim()), grad);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.block() == "likelihood");
  }
}

TEST_CASE("covariate subsetting") {
  const std::vector<double> medians = {0.3, -0.01, 0.025, -0.025, 0.0};
  CHECK(subset_covariates(medians, 0.0).size() == 5);
  CHECK(subset_covariates(medians, 0.025) == std::vector<std::size_t>{0, 2, 3});
  CHECK_THROWS_AS(subset_covariates(medians, 10.0), std::invalid_argument);
}

TEST_CASE("subsetted spec") {
  const auto spec = small_spec(PriorMode::RegularizedHorseshoe);
  const auto all = make_subsetted_spec(spec, {0, 1, 2});
  CHECK(all.prior.mode == PriorMode::SubsettedVague);
  CHECK(all.covariates.values == spec.covariates.values);

  const auto sub = make_subsetted_spec(spec, {2, 0});
  CHECK(sub.n_covariates() == 2);
  CHECK(sub.covariates.names == std::vector<std::string>{"x3", "x1"});
  CHECK(sub.included == std::vector<std::size_t>{2, 0});
  CHECK(sub.covariates.values.col(0) == spec.covariates.values.col(2));

  ParameterLayout full_layout(spec), sub_layout(sub);
  std::mt19937_64 rng(1);
  auto p = full_layout.constrain(random_point(full_layout.unconstrained_dim(), rng));
  p.beta.setZero();
  auto q = p;
  q.beta = Eigen::VectorXd::Zero(2);
  CHECK(theta_grid(p, spec).isApprox(theta_grid(q, sub), 0.0));
  CHECK_THROWS(make_subsetted_spec(spec, {}));
}

TEST_CASE("global scale from a sparsity guess") {
  CHECK(tau0_from_sparsity_guess(5, 16, 0.094, 1531) == doctest::Approx(0.001).epsilon(0.1));
  CHECK(tau0_from_sparsity_guess(5, 16, 0.094, 1531) == doctest::Approx(5.0 / 11 * 0.094 / std::sqrt(1531.0)));
  CHECK_THROWS(tau0_from_sparsity_guess(16, 16, 0.1, 10));
}
