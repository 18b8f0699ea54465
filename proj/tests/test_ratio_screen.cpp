#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "sbr/ratio_screen.hpp"
#include "sbr/stats.hpp"

using namespace sbr;

namespace {

SamplerConfig quick_sampler(std::uint64_t seed) {
  SamplerConfig c;
  c.n_chains = 2;
  c.n_warmup = 500;
  c.n_iter = 1500;
  c.seed = seed;
  c.parallel = false;
  return c;
}

RatioModelFit fixed_fit(double mu, double sigma2) {
  RatioModelFit f;
  f.mu_median = mu;
  f.sigma2_median = sigma2;
  return f;
}

double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

ScreenInput input_with_nmr(long long id, double sbr, double nmr, double log_se = 0.1) {
  ScreenInput in;
  in.observation.id = id;
  in.observation.country = "A";
  in.observation.year = 2010;
  in.observation.sbr = sbr;
  in.observation.nmr = nmr;
  in.observation.log_se = log_se;
  return in;
}

}  // namespace

TEST_CASE("exclusion boundary for the reference fit") {
  const double boundary = std::exp(-0.180 - 1.645 * std::sqrt(0.083));
  CHECK(std::abs(boundary - 0.52) <= 0.01);
  CHECK(exclusion_boundary(-0.180, 0.083) == doctest::Approx(boundary).epsilon(0.005));
}

TEST_CASE("tail probability examples") {
  const auto fit = fixed_fit(-0.180, 0.083);
  CHECK(exclusion_tail_probability(0.52, 0.0, fit) == doctest::Approx(0.05).epsilon(0.04));
  CHECK(exclusion_tail_probability(std::exp(-0.180), 0.0, fit) == doctest::Approx(0.5).epsilon(1e-12));
  const double wide = exclusion_tail_probability(0.52, 0.05, fit);
  CHECK(wide > 0.05);
  CHECK(wide == doctest::Approx(phi((std::log(0.52) + 0.180) / std::sqrt(0.133))).epsilon(1e-12));
}

TEST_CASE("tail probability is increasing in r and moves toward one half with v2") {
  const auto fit = fixed_fit(-0.18, 0.083);
  double prev = 0.0;
  for (double r = 0.1; r < 3.0; r += 0.05) {
    const double p = exclusion_tail_probability(r, 0.02, fit);
    CHECK(p > prev);
    prev = p;
  }
  prev = 0.0;
  for (double v2 = 0.0; v2 < 2.0; v2 += 0.1) {
    const double p = exclusion_tail_probability(0.4, v2, fit);
    CHECK(p > prev);
    CHECK(p < 0.5);
    prev = p;
  }
}

TEST_CASE("boundary matches the Gaussian quantile identity") {
  for (double mu : {-0.5, -0.18, 0.0, 0.3}) {
    for (double s2 : {0.01, 0.083, 0.5}) {
      const double b = exclusion_boundary(mu, s2);
      CHECK(b == doctest::Approx(std::exp(mu - 1.645 * std::sqrt(s2))).epsilon(0.005));
      CHECK(exclusion_tail_probability(b, 0.0, mu, s2) == doctest::Approx(0.05).epsilon(1e-9));
    }
  }
}

TEST_CASE("simulation recovery of the mean log ratio") {
  const double mu = -0.18, sigma2 = 0.083, v2 = 0.01;
  int covered = 0;
  const int reps = 50;
  for (int rep = 0; rep < reps; ++rep) {
    std::mt19937_64 rng(derive_seed(2024, rep));
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<RatioDatum> data;
    for (int i = 0; i < 200; ++i) {
      const double theta = mu + std::sqrt(sigma2) * z(rng);
      data.push_back({i, std::exp(theta + std::sqrt(v2) * z(rng)), v2});
    }
    const auto fit = fit_ratio_model(data, quick_sampler(rep));
    CHECK(fit.mu_lower < fit.mu_upper);
    CHECK(fit.sigma2_median > 0.0);
    covered += fit.mu_lower <= mu && mu <= fit.mu_upper;
  }
  CHECK(covered >= 45);
}

TEST_CASE("identical ratios without error concentrate the fit") {
  std::vector<RatioDatum> data;
  for (int i = 0; i < 20; ++i) data.push_back({i, 0.8, 0.0});
  const auto fit = fit_ratio_model(data, quick_sampler(1));
  CHECK(fit.mu_median == doctest::Approx(std::log(0.8)).epsilon(1e-3));
  CHECK(fit.sigma2_median < 0.01);
  CHECK(fit.sigma2_median > 0.0);
  for (double t : fit.theta_mean) CHECK(t == doctest::Approx(std::log(0.8)).epsilon(1e-3));
}

TEST_CASE("ratio model preconditions") {
  CHECK_THROWS_AS(fit_ratio_model({{1, 0.8, 0.0}}, quick_sampler(1)), std::invalid_argument);
  CHECK_THROWS(fit_ratio_model({{1, 0.8, 0.0}, {2, -1.0, 0.0}}, quick_sampler(1)));
}

TEST_CASE("threshold rule") {
  const auto fit = fixed_fit(0.0, 1.0);
  NmrPolicy policy;
  const double r_049 = std::exp(normal_quantile(0.049));
  const double r_051 = std::exp(normal_quantile(0.051));
  const auto res = apply_exclusion({input_with_nmr(1, r_049 * 20, 20, 0.0), input_with_nmr(2, r_051 * 20, 20, 0.0)},
                                   fit, policy);
  CHECK(*res[0].p == doctest::Approx(0.049).epsilon(1e-9));
  CHECK(res[0].decision == ScreenDecision::Excluded);
  CHECK(*res[1].p == doctest::Approx(0.051).epsilon(1e-9));
  CHECK(res[1].decision == ScreenDecision::Kept);
}

TEST_CASE("ratios at the predictive median are never excluded") {
  const auto fit = fixed_fit(-0.18, 0.083);
  NmrPolicy policy;
  std::vector<ScreenInput> inputs;
  for (int i = 0; i < 10; ++i) inputs.push_back(input_with_nmr(i, std::exp(-0.18) * (5 + i), 5 + i));
  for (const auto& r : apply_exclusion(inputs, fit, policy)) CHECK(r.decision == ScreenDecision::Kept);
}

TEST_CASE("partition is exhaustive and disjoint, with national fallback") {
  const auto fit = fixed_fit(-0.18, 0.083);
  NmrPolicy policy;
  policy.national_nmr[{"B", 2011}] = 10.0;
  std::vector<ScreenInput> inputs;
  inputs.push_back(input_with_nmr(1, 8.0, 10.0));  // kept
  inputs.push_back(input_with_nmr(2, 1.0, 10.0));  // excluded
  ScreenInput national;
  national.observation.id = 3;
  national.observation.country = "B";
  national.observation.year = 2011;
  national.observation.sbr = 8.0;
  national.observation.log_se = 0.2;
  inputs.push_back(national);
  ScreenInput missing = national;
  missing.observation.id = 4;
  missing.observation.year = 2012;
  inputs.push_back(missing);

  const auto res = apply_exclusion(inputs, fit, policy);
  REQUIRE(res.size() == inputs.size());
  CHECK(res[0].decision == ScreenDecision::Kept);
  CHECK(res[1].decision == ScreenDecision::Excluded);
  CHECK(res[2].decision == ScreenDecision::Kept);
  CHECK(res[2].note == "national estimate");
  CHECK(*res[2].r == doctest::Approx(0.8));
  CHECK(res[2].v2 == doctest::Approx(0.04));
  CHECK(res[3].decision == ScreenDecision::CannotScreen);
  CHECK_FALSE(res[3].p.has_value());
}

TEST_CASE("adjusted observations are screened on the 28-week scale with extra variance") {
  NmrPolicy policy;
  auto in = input_with_nmr(1, 15.0, 10.0, 0.1);
  in.gamma = std::log(1.5);
  in.phi2 = 0.02;
  const auto r = resolve_ratio(in, policy);
  CHECK(*r.r == doctest::Approx(1.0));
  CHECK(r.v2 == doctest::Approx(0.01 + 0.02));
}

TEST_CASE("same-source counts use the Monte Carlo variance") {
  NmrPolicy policy;
  policy.mc_samples = 20000;
  auto in = input_with_nmr(1, 10.0, 8.0);
  in.observation.total_births = 10000;
  in.observation.stillbirth_count = 100;
  in.observation.live_births = 9900;
  const auto r = resolve_ratio(in, policy);
  CHECK(r.note == "same-source counts");
  // delta method: 1/z + 1/m for small rates
  CHECK(r.v2 == doctest::Approx(1.0 / 100 + 1.0 / 79.2).epsilon(0.1));
  CHECK(resolve_ratio(in, policy).v2 == r.v2);
}

TEST_CASE("exclusions csv") {
  const auto path = std::filesystem::temp_directory_path() / "sbr_exclusions_test.csv";
  ScreenResult a;
  a.id = 7;
  a.r = 0.5;
  a.v2 = 0.01;
  a.p = 0.03;
  a.decision = ScreenDecision::Excluded;
  ScreenResult b;
  b.id = 8;
  write_exclusions(path, {a, b});
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "id,r,v2,p,decision,note");
  std::getline(in, line);
  CHECK(line.rfind("7,0.5,0.01,0.03,excluded", 0) == 0);
  std::getline(in, line);
  CHECK(line.rfind("8,NA,0,NA,cannot_screen", 0) == 0);
  std::filesystem::remove(path);
}
