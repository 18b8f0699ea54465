#include "sbr/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>

#include "sbr/csv.hpp"
#include "sbr/errors.hpp"
#include "sbr/stats.hpp"

namespace sbr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::MatrixXd split_chains(const Eigen::MatrixXd& x) {
  const Eigen::Index half = x.rows() / 2;
  Eigen::MatrixXd out(half, 2 * x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    out.col(2 * c) = x.col(c).head(half);
    out.col(2 * c + 1) = x.col(c).tail(half);
  }
  return out;
}

bool unusable(const Eigen::MatrixXd& x, const char* what) {
  if (x.size() == 0 || !x.allFinite()) return true;
  if ((x.array() == x(0, 0)).all()) {
    std::clog << "warning: " << what << " undefined for constant draws; returning NaN\n";
    return true;
  }
  return false;
}

double rhat_of_split(const Eigen::MatrixXd& x) {
  const double n = static_cast<double>(x.rows());
  Eigen::VectorXd chain_mean = x.colwise().mean();
  double var_within = 0.0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    var_within += (x.col(c).array() - chain_mean(c)).square().sum() / (n - 1.0);
  }
  var_within /= static_cast<double>(x.cols());
  const double grand = chain_mean.mean();
  const double var_means = (chain_mean.array() - grand).square().sum() / static_cast<double>(x.cols() - 1);
  const double var_between = n * var_means;
  return std::sqrt((var_between / var_within + n - 1.0) / n);
}

double ess_of_split(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = x.cols();
  Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  std::vector<double> acov_cache;
  auto acov_mean = [&](Eigen::Index lag) {
    while (static_cast<Eigen::Index>(acov_cache.size()) <= lag) {
      const auto t = static_cast<Eigen::Index>(acov_cache.size());
      double total = 0.0;
      for (Eigen::Index c = 0; c < m; ++c) {
        total += centered.col(c).head(n - t).dot(centered.col(c).tail(n - t)) / static_cast<double>(n);
      }
      acov_cache.push_back(total / static_cast<double>(m));
    }
    return acov_cache[static_cast<std::size_t>(lag)];
  };

  const double nd = static_cast<double>(n);
  const double mean_var = acov_mean(0) * nd / (nd - 1.0);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) {
    Eigen::VectorXd means = x.colwise().mean();
    var_plus += (means.array() - means.mean()).square().sum() / static_cast<double>(m - 1);
  }

  std::vector<double> rho(static_cast<std::size_t>(n), 0.0);
  Eigen::Index t = 0;
  double rho_even = 1.0;
  rho[0] = rho_even;
  double rho_odd = n > 1 ? 1.0 - (mean_var - acov_mean(1)) / var_plus : 0.0;
  if (n > 1) rho[1] = rho_odd;
  while (t < n - 5 && !std::isnan(rho_even + rho_odd) && rho_even + rho_odd > 0) {
    t += 2;
    rho_even = 1.0 - (mean_var - acov_mean(t)) / var_plus;
    rho_odd = 1.0 - (mean_var - acov_mean(t + 1)) / var_plus;
    if (rho_even + rho_odd >= 0) {
      rho[static_cast<std::size_t>(t)] = rho_even;
      rho[static_cast<std::size_t>(t + 1)] = rho_odd;
    }
  }
  const Eigen::Index max_t = t;
  if (rho_even > 0) rho[static_cast<std::size_t>(max_t)] = rho_even;

  t = 0;
  while (t <= max_t - 4) {
    t += 2;
    const auto i = static_cast<std::size_t>(t);
    if (rho[i] + rho[i + 1] > rho[i - 2] + rho[i - 1]) {
      rho[i] = (rho[i - 2] + rho[i - 1]) / 2.0;
      rho[i + 1] = rho[i];
    }
  }
  const double total = static_cast<double>(n * m);
  double tau = -1.0 + rho[static_cast<std::size_t>(max_t)];
  for (Eigen::Index i = 0; i < max_t; ++i) tau += 2.0 * rho[static_cast<std::size_t>(i)];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

Eigen::MatrixXd indicator(const Eigen::MatrixXd& x, double threshold) {
  return (x.array() <= threshold).cast<double>();
}

void require_shape(const Eigen::MatrixXd& x) {
  if (x.cols() < 2 || x.rows() < 4) {
    throw std::invalid_argument("diagnostics need at least 2 chains of 4 draws");
  }
}

}  // namespace

Eigen::MatrixXd rank_normalize(const Eigen::MatrixXd& x) {
  const Eigen::Index total = x.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  const double* data = x.data();
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return data[a] < data[b]; });
  Eigen::MatrixXd z(x.rows(), x.cols());
  double* out = z.data();
  const double denom = static_cast<double>(total) + 0.25;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && data[order[j + 1]] == data[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    const double zval = normal_quantile((avg_rank - 0.375) / denom);
    for (std::size_t k = i; k <= j; ++k) out[order[k]] = zval;
    i = j + 1;
  }
  return z;
}

double basic_rhat(const Eigen::MatrixXd& draws) {
  require_shape(draws);
  if (unusable(draws, "R-hat")) return kNaN;
  return rhat_of_split(split_chains(draws));
}

double split_rhat(const Eigen::MatrixXd& draws) {
  require_shape(draws);
  if (unusable(draws, "R-hat")) return kNaN;
  const double bulk = rhat_of_split(rank_normalize(split_chains(draws)));
  const double med = median(std::span<const double>(draws.data(), static_cast<std::size_t>(draws.size())));
  Eigen::MatrixXd folded = (draws.array() - med).abs();
  const double tail = rhat_of_split(rank_normalize(split_chains(folded)));
  return std::max(bulk, tail);
}

double basic_ess(const Eigen::MatrixXd& draws) {
  require_shape(draws);
  if (unusable(draws, "ESS")) return kNaN;
  return ess_of_split(split_chains(draws));
}

double ess(const Eigen::MatrixXd& draws, EssKind kind) {
  require_shape(draws);
  if (unusable(draws, "ESS")) return kNaN;
  if (kind == EssKind::Bulk) return ess_of_split(rank_normalize(split_chains(draws)));
  std::span<const double> all(draws.data(), static_cast<std::size_t>(draws.size()));
  double result = std::numeric_limits<double>::infinity();
  for (double prob : {0.05, 0.95}) {
    Eigen::MatrixXd ind = split_chains(indicator(draws, quantile(all, prob)));
    if ((ind.array() == ind(0, 0)).all()) return kNaN;
    result = std::min(result, ess_of_split(ind));
  }
  return result;
}

std::vector<ParameterSummary> summarize(const PosteriorDraws& draws) {
  std::vector<ParameterSummary> rows;
  for (std::size_t p = 0; p < draws.names.size(); ++p) {
    ParameterSummary s;
    s.name = draws.names[p];
    const auto pooled = draws.pooled(p);
    s.mean = mean(pooled);
    s.median = median(pooled);
    s.sd = pooled.size() > 1 ? sd(pooled) : 0.0;
    s.q025 = quantile(pooled, 0.025);
    s.q975 = quantile(pooled, 0.975);
    const auto m = draws.parameter(p);
    const bool constant = (m.array() == m(0, 0)).all();
    if (m.cols() >= 2 && m.rows() >= 4 && !constant) {
      s.rhat = split_rhat(m);
      s.ess_bulk = ess(m, EssKind::Bulk);
      s.ess_tail = ess(m, EssKind::Tail);
    } else {
      s.rhat = s.ess_bulk = s.ess_tail = kNaN;
    }
    rows.push_back(s);
  }
  return rows;
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<ParameterSummary>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  CsvWriter w(out);
  w.row({"param", "mean", "median", "sd", "q2.5", "q97.5", "rhat", "ess_bulk", "ess_tail"});
  for (const auto& r : rows) {
    w.row({r.name, format_number(r.mean), format_number(r.median), format_number(r.sd), format_number(r.q025),
           format_number(r.q975), format_number(r.rhat), format_number(r.ess_bulk), format_number(r.ess_tail)});
  }
}

}  // namespace sbr
