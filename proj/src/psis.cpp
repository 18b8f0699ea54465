#include "sbr/psis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "sbr/stats.hpp"

namespace sbr {

GpdFit fit_generalized_pareto(std::span<const double> x) {
  const auto n = x.size();
  if (n < 2) throw std::invalid_argument("generalized Pareto fit needs at least 2 values");
  constexpr double prior = 3.0;
  const std::size_t m = 30 + static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  const double xstar = x[static_cast<std::size_t>(std::floor(n / 4.0 + 0.5)) - 1];
  std::vector<double> theta(m), l_theta(m);
  for (std::size_t j = 0; j < m; ++j) {
    theta[j] = 1.0 / x[n - 1] + (1.0 - std::sqrt(m / (j + 0.5))) / prior / xstar;
    double k = 0.0;
    for (double v : x) k += std::log1p(-theta[j] * v);
    k /= static_cast<double>(n);
    l_theta[j] = static_cast<double>(n) * (std::log(-theta[j] / k) - k - 1.0);
  }
  const double lse = log_sum_exp(l_theta);
  double theta_hat = 0.0;
  for (std::size_t j = 0; j < m; ++j) theta_hat += theta[j] * std::exp(l_theta[j] - lse);
  double k = 0.0;
  for (double v : x) k += std::log1p(-theta_hat * v);
  k /= static_cast<double>(n);
  const double sigma = -k / theta_hat;
  constexpr double a = 10.0;
  k = k * n / (n + a) + a * 0.5 / (n + a);
  return {k, sigma};
}

PsisResult psis(std::span<const double> log_ratios) {
  const std::size_t S = log_ratios.size();
  if (S < 2) throw std::invalid_argument("PSIS needs at least 2 draws");
  std::vector<double> lw(log_ratios.begin(), log_ratios.end());
  const double max_raw = *std::max_element(lw.begin(), lw.end());
  for (auto& v : lw) v -= max_raw;

  PsisResult out;
  const auto M = static_cast<std::size_t>(
      std::ceil(std::min(0.2 * static_cast<double>(S), 3.0 * std::sqrt(static_cast<double>(S)))));
  std::vector<std::size_t> order(S);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return lw[a] < lw[b]; });

  if (M < 5 || M + 1 > S) {
    out.pareto_k = std::numeric_limits<double>::quiet_NaN();
  } else {
    const double cutoff = lw[order[S - M - 1]];
    const double exp_cutoff = std::exp(cutoff);
    std::vector<double> tail(M);
    for (std::size_t i = 0; i < M; ++i) tail[i] = std::exp(lw[order[S - M + i]]) - exp_cutoff;
    if (tail.front() == tail.back() || !(tail.back() > 0)) {
      // a flat tail carries no shape information
      out.pareto_k = std::numeric_limits<double>::quiet_NaN();
    } else {
      const auto fit = fit_generalized_pareto(tail);
      out.pareto_k = fit.k;
      if (fit.k >= 0.0) {
        for (std::size_t i = 0; i < M; ++i) {
          const double p = (i + 0.5) / static_cast<double>(M);
          const double q = fit.k == 0.0 ? -fit.sigma * std::log1p(-p)
                                        : fit.sigma * (std::pow(1.0 - p, -fit.k) - 1.0) / fit.k;
          lw[order[S - M + i]] = std::log(q + exp_cutoff);
        }
      }
    }
  }
  for (auto& v : lw) v = std::min(v, 0.0);  // truncate at the largest raw ratio
  const double norm = log_sum_exp(lw);
  for (auto& v : lw) v -= norm;
  out.log_weights = std::move(lw);
  return out;
}

LooResult psis_loo(const Eigen::MatrixXd& loglik) {
  const auto S = static_cast<std::size_t>(loglik.rows());
  const auto n = static_cast<std::size_t>(loglik.cols());
  if (S < 2 || n < 1) throw std::invalid_argument("PSIS-LOO needs draws x observations log-likelihoods");
  LooResult out;
  std::vector<double> ratios(S), terms(S);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < S; ++s) ratios[s] = -loglik(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i));
    const auto w = psis(ratios);
    for (std::size_t s = 0; s < S; ++s) terms[s] = w.log_weights[s] - ratios[s];
    out.pointwise.push_back(log_sum_exp(terms));
    out.pareto_k.push_back(w.pareto_k);
  }
  out.elpd_loo = std::accumulate(out.pointwise.begin(), out.pointwise.end(), 0.0);
  out.se = n > 1 ? std::sqrt(static_cast<double>(n) * variance(out.pointwise)) : 0.0;
  return out;
}

ElpdDifference elpd_compare(const LooResult& a, const LooResult& b) {
  if (a.pointwise.size() != b.pointwise.size()) {
    throw std::invalid_argument("ELPD comparison needs the same observations in both results");
  }
  const auto n = a.pointwise.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a.pointwise[i] - b.pointwise[i];
  ElpdDifference out;
  out.difference = std::accumulate(diff.begin(), diff.end(), 0.0);
  out.se = n > 1 ? std::sqrt(static_cast<double>(n) * variance(diff)) : 0.0;
  out.lower = out.difference - 1.96 * out.se;
  out.upper = out.difference + 1.96 * out.se;
  return out;
}

}  // namespace sbr
