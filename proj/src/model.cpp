#include "sbr/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "sbr/errors.hpp"
#include "sbr/stats.hpp"

namespace sbr {

double tau0_from_sparsity_guess(double p0, double n_predictors, double sigma, double n_obs) {
  if (!(p0 > 0 && p0 < n_predictors && sigma > 0 && n_obs > 0)) {
    throw std::invalid_argument("tau0 helper needs 0 < p0 < D, sigma > 0, n > 0");
  }
  return p0 / (n_predictors - p0) * sigma / std::sqrt(n_obs);
}

void ModelSpec::validate() const {
  if (basis.n_basis < 2) throw std::invalid_argument("model spec: spline basis not built");
  if (covariates.n_countries != n_countries() || covariates.n_years != n_years()) {
    throw std::invalid_argument("model spec: covariate matrix does not cover every country-year");
  }
  if (prior.tau0 <= 0 || prior.q <= 0 || prior.g <= 0 || prior.vague_beta_sd <= 0) {
    throw std::invalid_argument("model spec: prior hyperparameters must be positive");
  }
  for (const auto& o : observations) {
    if (o.country < 0 || o.country >= n_countries() || o.year_index < 0 || o.year_index >= n_years()) {
      throw std::invalid_argument("model spec: observation " + std::to_string(o.id) + " outside the country-year grid");
    }
    if (!(o.s2 >= 0 && o.phi2 >= 0) || !std::isfinite(o.log_y)) {
      throw std::invalid_argument("model spec: observation " + std::to_string(o.id) + " has invalid values");
    }
  }
}

ParameterLayout::ParameterLayout(const ModelSpec& spec)
    : K_(spec.n_covariates()),
      C_(spec.n_countries()),
      R_(spec.n_regions()),
      H_(spec.n_basis()),
      horseshoe_(spec.prior.mode == PriorMode::RegularizedHorseshoe),
      vague_sd_(spec.prior.vague_beta_sd),
      region_of_(spec.countries.region_of) {
  int pos = 0;
  off_.beta_z = pos;
  pos += K_;
  if (horseshoe_) {
    off_.log_lambda = pos;
    pos += K_;
    off_.log_tau = pos++;
    off_.log_rho2 = pos++;
  }
  off_.xi = pos++;
  off_.log_sigma_eta = pos++;
  off_.log_sigma_varsigma = pos++;
  off_.eta_z = pos;
  pos += R_;
  off_.varsigma = pos;
  pos += C_;
  off_.logit_sigma_delta = pos++;
  off_.innovations = pos;
  pos += C_ * (H_ - 1);
  off_.log_neg_psi = pos++;
  off_.log_sigma_source = pos;
  pos += static_cast<int>(kSourceTypeCount);
  unconstrained_dim_ = pos;

  const auto& cov = spec.covariates.names;
  for (const auto& n : cov) names_.push_back("beta[" + n + "]");
  if (horseshoe_) {
    for (const auto& n : cov) names_.push_back("lambda[" + n + "]");
    names_.push_back("tau");
    names_.push_back("rho2");
  }
  names_.push_back("xi");
  names_.push_back("sigma_eta");
  names_.push_back("sigma_varsigma");
  for (const auto& r : spec.countries.regions) names_.push_back("eta[" + r + "]");
  for (const auto& c : spec.countries.countries) names_.push_back("varsigma[" + c + "]");
  names_.push_back("sigma_delta");
  for (const auto& c : spec.countries.countries) {
    for (int h = 0; h < H_; ++h) names_.push_back("alpha[" + c + "," + std::to_string(h + 1) + "]");
  }
  names_.push_back("psi_survey");
  for (auto s : kAllSourceTypes) names_.push_back("sigma_source[" + std::string(to_string(s)) + "]");
}

namespace {

/// Horseshoe scale tau * lambda_tilde and the shrinkage factor rho^2 / (rho^2 + tau^2 lambda^2).
struct HorseshoeScale {
  double scale;
  double f;
};

HorseshoeScale horseshoe_scale(double lambda, double tau, double rho2) {
  const double tl2 = tau * tau * lambda * lambda;
  const double denom = rho2 + tl2;
  const double f = rho2 / denom;
  return {tau * lambda * std::sqrt(f), f};
}

}  // namespace

ModelParameters ParameterLayout::constrain(const Eigen::VectorXd& u) const {
  if (u.size() != unconstrained_dim_) throw std::invalid_argument("unconstrained vector has the wrong length");
  ModelParameters p;
  p.beta.resize(K_);
  if (horseshoe_) {
    p.lambda.resize(K_);
    p.tau = std::exp(u(off_.log_tau));
    p.rho2 = std::exp(u(off_.log_rho2));
    for (int k = 0; k < K_; ++k) {
      p.lambda(k) = std::exp(u(off_.log_lambda + k));
      p.beta(k) = horseshoe_scale(p.lambda(k), p.tau, p.rho2).scale * u(off_.beta_z + k);
    }
  } else {
    for (int k = 0; k < K_; ++k) p.beta(k) = vague_sd_ * u(off_.beta_z + k);
  }
  p.xi = u(off_.xi);
  p.sigma_eta = std::exp(u(off_.log_sigma_eta));
  p.sigma_varsigma = std::exp(u(off_.log_sigma_varsigma));
  p.eta.resize(R_);
  for (int r = 0; r < R_; ++r) p.eta(r) = p.xi + p.sigma_eta * u(off_.eta_z + r);
  p.varsigma.resize(C_);
  for (int c = 0; c < C_; ++c) {
    p.varsigma(c) = u(off_.varsigma + c);
  }
  p.sigma_delta = 3.0 * logistic(u(off_.logit_sigma_delta));
  p.alpha.resize(C_, H_);
  Eigen::VectorXd w(H_);
  for (int c = 0; c < C_; ++c) {
    w(0) = 0.0;
    for (int h = 1; h < H_; ++h) w(h) = w(h - 1) + u(off_.innovations + c * (H_ - 1) + h - 1);
    p.alpha.row(c) = (p.sigma_delta * (w.array() - w.mean())).transpose();
  }
  p.psi_survey = -std::exp(u(off_.log_neg_psi));
  for (std::size_t j = 0; j < kSourceTypeCount; ++j) {
    p.sigma_source[j] = std::exp(u(off_.log_sigma_source + static_cast<int>(j)));
  }
  return p;
}

Eigen::VectorXd ParameterLayout::pack(const ModelParameters& p) const {
  Eigen::VectorXd out(constrained_dim());
  int i = 0;
  for (int k = 0; k < K_; ++k) out(i++) = p.beta(k);
  if (horseshoe_) {
    for (int k = 0; k < K_; ++k) out(i++) = p.lambda(k);
    out(i++) = p.tau;
    out(i++) = p.rho2;
  }
  out(i++) = p.xi;
  out(i++) = p.sigma_eta;
  out(i++) = p.sigma_varsigma;
  for (int r = 0; r < R_; ++r) out(i++) = p.eta(r);
  for (int c = 0; c < C_; ++c) out(i++) = p.varsigma(c);
  out(i++) = p.sigma_delta;
  for (int c = 0; c < C_; ++c) {
    for (int h = 0; h < H_; ++h) out(i++) = p.alpha(c, h);
  }
  out(i++) = p.psi_survey;
  for (double s : p.sigma_source) out(i++) = s;
  return out;
}

ModelParameters ParameterLayout::unpack(const Eigen::VectorXd& v) const {
  if (v.size() != constrained_dim()) throw std::invalid_argument("constrained vector has the wrong length");
  ModelParameters p;
  int i = 0;
  p.beta.resize(K_);
  for (int k = 0; k < K_; ++k) p.beta(k) = v(i++);
  if (horseshoe_) {
    p.lambda.resize(K_);
    for (int k = 0; k < K_; ++k) p.lambda(k) = v(i++);
    p.tau = v(i++);
    p.rho2 = v(i++);
  }
  p.xi = v(i++);
  p.sigma_eta = v(i++);
  p.sigma_varsigma = v(i++);
  p.eta.resize(R_);
  for (int r = 0; r < R_; ++r) p.eta(r) = v(i++);
  p.varsigma.resize(C_);
  for (int c = 0; c < C_; ++c) p.varsigma(c) = v(i++);
  p.sigma_delta = v(i++);
  p.alpha.resize(C_, H_);
  for (int c = 0; c < C_; ++c) {
    for (int h = 0; h < H_; ++h) p.alpha(c, h) = v(i++);
  }
  p.psi_survey = v(i++);
  for (auto& s : p.sigma_source) s = v(i++);
  return p;
}

double theta(const ModelParameters& p, const ModelSpec& spec, int c, int t) {
  const auto& X = spec.covariates.values;
  const Eigen::Index row = static_cast<Eigen::Index>(c) * spec.n_years() + t;
  double value = p.varsigma(c) + X.row(row).dot(p.beta);
  value += spec.basis.evaluations.row(t).dot(p.alpha.row(c));
  return value;
}

Eigen::MatrixXd theta_grid(const ModelParameters& p, const ModelSpec& spec) {
  Eigen::MatrixXd grid(spec.n_countries(), spec.n_years());
  for (int c = 0; c < spec.n_countries(); ++c) {
    for (int t = 0; t < spec.n_years(); ++t) grid(c, t) = theta(p, spec, c, t);
  }
  return grid;
}

Eigen::MatrixXd covariate_only_grid(const ModelParameters& p, const ModelSpec& spec) {
  Eigen::MatrixXd grid(spec.n_countries(), spec.n_years());
  for (int c = 0; c < spec.n_countries(); ++c) {
    for (int t = 0; t < spec.n_years(); ++t) {
      grid(c, t) = p.varsigma(c) + spec.covariates.values.row(static_cast<Eigen::Index>(c) * spec.n_years() + t).dot(p.beta);
    }
  }
  return grid;
}

double pointwise_log_likelihood(const ModelParameters& p, const ModelSpec& spec, const ModelObservation& o) {
  const double sigma = p.sigma_source[static_cast<std::size_t>(o.source)];
  const double mu = theta(p, spec, o.country, o.year_index) + p.psi(o.source) + o.gamma;
  return normal_log_density(o.log_y, mu, o.s2 + o.phi2 + sigma * sigma);
}

namespace {

void check_block(double value, const char* block) {
  if (!std::isfinite(value)) {
    throw NonFiniteError(block, std::string("non-finite log density in block '") + block + "'");
  }
}

double half_normal_log(double u, double& grad) {
  // x = exp(u), x ~ N+(0, 1), Jacobian u.
  const double x2 = std::exp(2.0 * u);
  grad = 1.0 - x2;
  return kLogTwo - kLogSqrtTwoPi - 0.5 * x2 + u;
}

double half_cauchy_log(double u, double scale, double& grad) {
  const double r = std::exp(u) / scale;
  const double r2 = r * r;
  grad = 1.0 - 2.0 * r2 / (1.0 + r2);
  return kLogTwo - std::log(std::numbers::pi) - std::log(scale) - std::log1p(r2) + u;
}

}  // namespace

double log_posterior(const ModelSpec& spec, const ParameterLayout& layout, const Eigen::VectorXd& u,
                     Eigen::VectorXd& grad) {
  const auto& off = layout.offsets();
  const int K = spec.n_covariates();
  const int C = spec.n_countries();
  const int R = spec.n_regions();
  const int H = spec.n_basis();
  const int T = spec.n_years();
  grad = Eigen::VectorXd::Zero(layout.unconstrained_dim());

  // Forward pass.
  Eigen::VectorXd beta(K), scale(K), shrink(K);
  double tau = 0, rho2 = 0;
  if (layout.horseshoe()) {
    tau = std::exp(u(off.log_tau));
    rho2 = std::exp(u(off.log_rho2));
    for (int k = 0; k < K; ++k) {
      const auto hs = horseshoe_scale(std::exp(u(off.log_lambda + k)), tau, rho2);
      scale(k) = hs.scale;
      shrink(k) = hs.f;
      beta(k) = hs.scale * u(off.beta_z + k);
    }
  } else {
    scale.setConstant(spec.prior.vague_beta_sd);
    for (int k = 0; k < K; ++k) beta(k) = scale(k) * u(off.beta_z + k);
  }
  const double xi = u(off.xi);
  const double sigma_eta = std::exp(u(off.log_sigma_eta));
  const double sigma_varsigma = std::exp(u(off.log_sigma_varsigma));
  Eigen::VectorXd eta(R), varsigma(C);
  for (int r = 0; r < R; ++r) eta(r) = xi + sigma_eta * u(off.eta_z + r);
  for (int c = 0; c < C; ++c) {
    varsigma(c) = u(off.varsigma + c);
  }
  const double logit_sd = u(off.logit_sigma_delta);
  const double s_delta = logistic(logit_sd);
  const double sigma_delta = 3.0 * s_delta;
  Eigen::MatrixXd centered_walk(C, H);  // w - mean(w); alpha = sigma_delta * centered_walk
  for (int c = 0; c < C; ++c) {
    double w = 0.0;
    centered_walk(c, 0) = 0.0;
    for (int h = 1; h < H; ++h) {
      w += u(off.innovations + c * (H - 1) + h - 1);
      centered_walk(c, h) = w;
    }
    centered_walk.row(c).array() -= centered_walk.row(c).mean();
  }
  const double psi = -std::exp(u(off.log_neg_psi));
  std::array<double, kSourceTypeCount> sigma_source{};
  for (std::size_t j = 0; j < kSourceTypeCount; ++j) {
    sigma_source[j] = std::exp(u(off.log_sigma_source + static_cast<int>(j)));
  }

  // Likelihood and its adjoints.
  double loglik = 0.0;
  Eigen::VectorXd g_beta = Eigen::VectorXd::Zero(K);
  Eigen::VectorXd g_varsigma = Eigen::VectorXd::Zero(C);
  Eigen::MatrixXd g_alpha = Eigen::MatrixXd::Zero(C, H);
  double g_psi = 0.0;
  const auto& X = spec.covariates.values;
  const auto& B = spec.basis.evaluations;
  for (const auto& o : spec.observations) {
    const auto j = static_cast<std::size_t>(o.source);
    const Eigen::Index row = static_cast<Eigen::Index>(o.country) * T + o.year_index;
    const double delta = sigma_delta * B.row(o.year_index).dot(centered_walk.row(o.country));
    const double th = varsigma(o.country) + X.row(row).dot(beta) + delta;
    const double mu = th + (o.source == SourceType::Survey ? psi : 0.0) + o.gamma;
    const double V = o.s2 + o.phi2 + sigma_source[j] * sigma_source[j];
    const double r = o.log_y - mu;
    loglik += -kLogSqrtTwoPi - 0.5 * std::log(V) - 0.5 * r * r / V;
    const double g_theta = r / V;
    g_varsigma(o.country) += g_theta;
    g_beta += g_theta * X.row(row).transpose();
    g_alpha.row(o.country) += g_theta * B.row(o.year_index);
    if (o.source == SourceType::Survey) g_psi += g_theta;
    grad(off.log_sigma_source + static_cast<int>(j)) +=
        sigma_source[j] * sigma_source[j] * (r * r / V - 1.0) / V;
  }
  check_block(loglik, "likelihood");

  double logprior = 0.0;
  double g;

  // Regression coefficients.
  for (int k = 0; k < K; ++k) {
    const double z = u(off.beta_z + k);
    logprior += -kLogSqrtTwoPi - 0.5 * z * z;
    grad(off.beta_z + k) += g_beta(k) * scale(k) - z;
  }
  if (layout.horseshoe()) {
    double g_log_tau = 0.0, g_log_rho2 = 0.0;
    for (int k = 0; k < K; ++k) {
      const double gb = g_beta(k) * beta(k);
      grad(off.log_lambda + k) += gb * shrink(k);
      g_log_tau += gb * shrink(k);
      g_log_rho2 += gb * 0.5 * (1.0 - shrink(k));
      logprior += half_cauchy_log(u(off.log_lambda + k), 1.0, g);
      grad(off.log_lambda + k) += g;
    }
    logprior += half_cauchy_log(u(off.log_tau), spec.prior.tau0, g);
    grad(off.log_tau) += g_log_tau + g;
    // rho^2 ~ Inv-Gamma(q, scale) on x = exp(v): q log s - lgamma(q) - q v - s exp(-v).
    const double q = spec.prior.q;
    const double s = spec.prior.rho2_scale();
    const double v = u(off.log_rho2);
    logprior += q * std::log(s) - std::lgamma(q) - q * v - s * std::exp(-v);
    grad(off.log_rho2) += g_log_rho2 - q + s * std::exp(-v);
  }
  check_block(logprior, "regression");

  // Hierarchical intercepts: countries centered on their region, regions non-centered.
  Eigen::VectorXd g_eta = Eigen::VectorXd::Zero(R);
  double g_log_sigma_varsigma = 0.0;
  const double var_varsigma = sigma_varsigma * sigma_varsigma;
  for (int c = 0; c < C; ++c) {
    const int r = spec.countries.region_of[c];
    const double d = varsigma(c) - eta(r);
    logprior += -kLogSqrtTwoPi - u(off.log_sigma_varsigma) - 0.5 * d * d / var_varsigma;
    grad(off.varsigma + c) += g_varsigma(c) - d / var_varsigma;
    g_eta(r) += d / var_varsigma;
    g_log_sigma_varsigma += d * d / var_varsigma - 1.0;
  }
  double g_xi = 0.0, g_sigma_eta = 0.0;
  for (int r = 0; r < R; ++r) {
    const double z = u(off.eta_z + r);
    g_xi += g_eta(r);
    g_sigma_eta += g_eta(r) * z;
    logprior += -kLogSqrtTwoPi - 0.5 * z * z;
    grad(off.eta_z + r) += g_eta(r) * sigma_eta - z;
  }
  logprior += normal_log_density(xi, 2.5, 4.0);
  grad(off.xi) += g_xi - (xi - 2.5) / 4.0;
  logprior += half_normal_log(u(off.log_sigma_eta), g);
  grad(off.log_sigma_eta) += g_sigma_eta * sigma_eta + g;
  logprior += half_normal_log(u(off.log_sigma_varsigma), g);
  grad(off.log_sigma_varsigma) += g_log_sigma_varsigma + g;
  check_block(logprior, "intercepts");

  // Spline smoother: alpha_c = sigma_delta * center(cumsum(innovations)).
  double g_sigma_delta = 0.0;
  for (int c = 0; c < C; ++c) {
    g_sigma_delta += g_alpha.row(c).dot(centered_walk.row(c));
    Eigen::RowVectorXd g_w = sigma_delta * (g_alpha.row(c).array() - g_alpha.row(c).mean());
    double tail = 0.0;
    for (int h = H - 1; h >= 1; --h) {
      tail += g_w(h);
      const int idx = off.innovations + c * (H - 1) + h - 1;
      const double e = u(idx);
      logprior += -kLogSqrtTwoPi - 0.5 * e * e;
      grad(idx) += tail - e;
    }
  }
  // sigma_delta ~ U(0, 3) through sigma_delta = 3 logistic(v).
  logprior += -log1p_exp(-logit_sd) - log1p_exp(logit_sd);
  grad(off.logit_sigma_delta) += g_sigma_delta * 3.0 * s_delta * (1.0 - s_delta) + 1.0 - 2.0 * s_delta;
  check_block(logprior, "smoother");

  // Source-type bias and error scales.
  const double v_psi = u(off.log_neg_psi);
  logprior += kLogTwo - kLogSqrtTwoPi - std::log(5.0) - psi * psi / 50.0 + v_psi;
  grad(off.log_neg_psi) += g_psi * psi + 1.0 - psi * psi / 25.0;
  for (std::size_t j = 0; j < kSourceTypeCount; ++j) {
    const int idx = off.log_sigma_source + static_cast<int>(j);
    logprior += half_normal_log(u(idx), g);
    grad(idx) += g;
  }
  check_block(logprior, "source_types");

  if (!grad.allFinite()) throw NonFiniteError("gradient", "non-finite gradient");
  return loglik + logprior;
}

SbrModel::SbrModel(ModelSpec spec) : spec_(std::move(spec)), layout_(spec_) { spec_.validate(); }

Target SbrModel::target() const {
  Target t;
  t.dimension = layout_.unconstrained_dim();
  t.log_density = [this](const Eigen::VectorXd& u, Eigen::VectorXd& grad) {
    return log_posterior(spec_, layout_, u, grad);
  };
  t.constrain = [this](const Eigen::VectorXd& u) { return layout_.pack(layout_.constrain(u)); };
  t.names = layout_.names();
  double centre = 2.5;
  if (!spec_.observations.empty()) {
    centre = 0.0;
    for (const auto& o : spec_.observations) centre += o.log_y - o.gamma;
    centre /= static_cast<double>(spec_.observations.size());
  }
  const auto& off = layout_.offsets();
  const int dim = t.dimension;
  const int C = spec_.n_countries();
  t.initialize = [centre, off, dim, C](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    Eigen::VectorXd x(dim);
    for (int i = 0; i < dim; ++i) x(i) = u(rng);
    // levels start near the data; everything else uniform on (-2, 2)
    x(off.xi) = centre + 0.25 * x(off.xi);
    for (int c = 0; c < C; ++c) x(off.varsigma + c) = centre + 0.25 * x(off.varsigma + c);
    return x;
  };
  return t;
}

std::vector<std::size_t> subset_covariates(const std::vector<double>& beta_medians, double cutoff) {
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < beta_medians.size(); ++k) {
    if (std::abs(beta_medians[k]) >= cutoff) keep.push_back(k);
  }
  if (keep.empty()) {
    std::ostringstream msg;
    msg << "no covariate has |median beta| >= " << cutoff << "; lower the subset cutoff";
    throw std::invalid_argument(msg.str());
  }
  return keep;
}

std::vector<std::size_t> subset_covariates(const PosteriorDraws& draws, const ModelSpec& spec, double cutoff) {
  std::vector<double> medians;
  for (const auto& name : spec.covariates.names) {
    medians.push_back(median(draws.pooled(draws.index_of("beta[" + name + "]"))));
  }
  return subset_covariates(medians, cutoff);
}

ModelSpec make_subsetted_spec(const ModelSpec& spec, const std::vector<std::size_t>& included) {
  if (included.empty()) throw std::invalid_argument("subsetted model needs at least one covariate");
  ModelSpec out = spec;
  out.prior.mode = PriorMode::SubsettedVague;
  out.included.clear();
  auto& cov = out.covariates;
  cov.names.clear();
  cov.log_transformed.clear();
  cov.values.resize(spec.covariates.values.rows(), static_cast<Eigen::Index>(included.size()));
  cov.transformed_mean.resize(static_cast<Eigen::Index>(included.size()));
  cov.raw_sd.resize(static_cast<Eigen::Index>(included.size()));
  for (std::size_t i = 0; i < included.size(); ++i) {
    const auto k = included[i];
    if (k >= spec.covariates.n_covariates()) throw std::out_of_range("subset index outside covariate list");
    const auto ki = static_cast<Eigen::Index>(k);
    const auto ii = static_cast<Eigen::Index>(i);
    cov.names.push_back(spec.covariates.names[k]);
    cov.log_transformed.push_back(spec.covariates.log_transformed[k]);
    cov.values.col(ii) = spec.covariates.values.col(ki);
    cov.transformed_mean(ii) = spec.covariates.transformed_mean(ki);
    cov.raw_sd(ii) = spec.covariates.raw_sd(ki);
    out.included.push_back(spec.included.empty() ? k : spec.included[k]);
  }
  return out;
}

}  // namespace sbr
