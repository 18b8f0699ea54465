#include "sbr/validation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include "sbr/csv.hpp"
#include "sbr/errors.hpp"
#include "sbr/stats.hpp"

namespace sbr {

HoldoutSplit holdout_split(const std::vector<ModelObservation>& observations, HoldoutMode mode, int replicate,
                           std::uint64_t seed) {
  if (observations.empty()) throw std::invalid_argument("holdout split of an empty observation set");
  const std::size_t n = observations.size();
  std::vector<bool> is_test(n, false);
  if (mode == HoldoutMode::Random20) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(replicate)));
    const auto k = static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(n)));
    // partial Fisher-Yates: the first k positions become a uniform sample
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
      is_test[idx[i]] = true;
    }
  } else {
    std::map<int, std::size_t> latest;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& o = observations[i];
      auto it = latest.find(o.country);
      if (it == latest.end()) {
        latest.emplace(o.country, i);
        continue;
      }
      const auto& best = observations[it->second];
      if (o.year_index > best.year_index || (o.year_index == best.year_index && o.id > best.id)) it->second = i;
    }
    for (const auto& [country, i] : latest) is_test[i] = true;
  }
  HoldoutSplit out;
  for (std::size_t i = 0; i < n; ++i) (is_test[i] ? out.test : out.train).push_back(i);
  return out;
}

double prediction_error(double y, double pred_median, double pred_sd) {
  if (!(y > 0) || !(pred_median > 0)) throw std::invalid_argument("prediction error needs positive values");
  if (!(pred_sd > 0)) throw std::invalid_argument("prediction error needs a positive predictive sd");
  return (std::log(y) - std::log(pred_median)) / pred_sd;
}

std::string_view to_string(Exercise e) {
  switch (e) {
    case Exercise::Recent: return "Recent";
    case Exercise::Random: return "Random";
    case Exercise::InSample: return "InSample";
  }
  return "";
}

ValidationReport interval_coverage(Exercise exercise, const std::vector<PredictivePoint>& points) {
  if (points.empty()) throw std::invalid_argument("coverage needs at least one test point");
  ValidationReport r;
  r.exercise = exercise;
  r.n_test = points.size();
  std::size_t below5 = 0, below10 = 0, above90 = 0, above95 = 0;
  double err = 0.0, abs_err = 0.0;
  for (const auto& p : points) {
    if (p.draws.empty()) throw std::invalid_argument("test point without predictive draws");
    std::array<double, 5> q{};
    double centre = 0.0, spread = 0.0;
    const std::array<double, 5> probs = {0.05, 0.10, 0.5, 0.90, 0.95};
    if (p.log_weights.empty()) {
      for (std::size_t i = 0; i < probs.size(); ++i) q[i] = quantile(p.draws, probs[i]);
      spread = p.draws.size() > 1 ? sd(p.draws) : 0.0;
    } else {
      std::vector<double> w(p.log_weights.size());
      const double norm = log_sum_exp(p.log_weights);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(p.log_weights[i] - norm);
      for (std::size_t i = 0; i < probs.size(); ++i) q[i] = weighted_quantile(p.draws, w, probs[i]);
      double m = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) m += w[i] * p.draws[i];
      for (std::size_t i = 0; i < w.size(); ++i) spread += w[i] * (p.draws[i] - m) * (p.draws[i] - m);
      spread = std::sqrt(spread);
    }
    centre = q[2];
    below5 += p.log_y < q[0];
    below10 += p.log_y < q[1];
    above90 += p.log_y > q[3];
    above95 += p.log_y > q[4];
    const double diff = p.log_y - centre;
    const double e = diff == 0.0 ? 0.0 : prediction_error(std::exp(p.log_y), std::exp(centre), spread);
    err += e;
    abs_err += std::abs(e);
  }
  const double n = static_cast<double>(points.size());
  r.mean_error = err / n;
  r.mean_abs_error = abs_err / n;
  r.pct_below_5 = 100.0 * below5 / n;
  r.pct_below_10 = 100.0 * below10 / n;
  r.pct_above_90 = 100.0 * above90 / n;
  r.pct_above_95 = 100.0 * above95 / n;
  return r;
}

Eigen::MatrixXd predictive_log_draws(const PosteriorDraws& draws, const ModelSpec& spec,
                                     const std::vector<ModelObservation>& observations, std::uint64_t seed) {
  const ParameterLayout layout(spec);
  const auto S = draws.n_pooled();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(observations.size()));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  for (std::size_t s = 0; s < S; ++s) {
    const auto p = layout.unpack(draws.pooled_row(s));
    for (std::size_t i = 0; i < observations.size(); ++i) {
      const auto& o = observations[i];
      const double sj = p.sigma_source[static_cast<std::size_t>(o.source)];
      const double mu = theta(p, spec, o.country, o.year_index) + p.psi(o.source) + o.gamma;
      out(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) =
          mu + std::sqrt(o.s2 + o.phi2 + sj * sj) * z(rng);
    }
  }
  return out;
}

Eigen::MatrixXd pointwise_loglik_matrix(const PosteriorDraws& draws, const ModelSpec& spec) {
  const ParameterLayout layout(spec);
  const auto S = draws.n_pooled();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(spec.observations.size()));
  for (std::size_t s = 0; s < S; ++s) {
    const auto p = layout.unpack(draws.pooled_row(s));
    for (std::size_t i = 0; i < spec.observations.size(); ++i) {
      out(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) =
          pointwise_log_likelihood(p, spec, spec.observations[i]);
    }
  }
  return out;
}

namespace {

struct HoldoutJob {
  Exercise exercise;
  HoldoutMode mode;
  int replicate;
};

std::vector<PredictivePoint> run_holdout(const ModelSpec& spec, const HoldoutJob& job, const ValidationConfig& config,
                                         std::uint64_t job_seed) {
  const auto split = holdout_split(spec.observations, job.mode, job.replicate, config.seed);
  ModelSpec train = spec;
  train.observations.clear();
  for (auto i : split.train) train.observations.push_back(spec.observations[i]);
  std::vector<ModelObservation> test;
  for (auto i : split.test) test.push_back(spec.observations[i]);

  SbrModel model(train);
  auto sampler = config.sampler;
  sampler.seed = derive_seed(job_seed, 0);
  if (config.max_concurrency > 1) sampler.parallel = false;
  const auto draws = sample(model.target(), sampler);
  const auto pred = predictive_log_draws(draws, train, test, derive_seed(job_seed, 1));

  std::vector<PredictivePoint> points(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    points[i].log_y = test[i].log_y;
    const auto col = pred.col(static_cast<Eigen::Index>(i));
    points[i].draws.assign(col.data(), col.data() + col.size());
  }
  return points;
}

}  // namespace

ValidationOutcome run_validation(const ModelSpec& spec, const PosteriorDraws& full_fit, const ValidationConfig& config) {
  std::vector<HoldoutJob> jobs;
  if (config.recent) jobs.push_back({Exercise::Recent, HoldoutMode::LastPerCountry, 0});
  if (config.random) {
    for (int r = 0; r < config.random_replicates; ++r) jobs.push_back({Exercise::Random, HoldoutMode::Random20, r});
  }

  std::vector<std::vector<PredictivePoint>> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        results[j] = run_holdout(spec, jobs[j], config, derive_seed(config.seed, 100 + j));
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const int n_workers = std::max(1, std::min<int>(config.max_concurrency, static_cast<int>(jobs.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ValidationOutcome out;
  for (auto exercise : {Exercise::Recent, Exercise::Random}) {
    std::vector<PredictivePoint> pooled;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      if (jobs[j].exercise != exercise) continue;
      pooled.insert(pooled.end(), results[j].begin(), results[j].end());
    }
    if (!pooled.empty()) out.reports.push_back(interval_coverage(exercise, pooled));
  }

  if (config.in_sample) {
    const auto loglik = pointwise_loglik_matrix(full_fit, spec);
    out.loo = psis_loo(loglik);
    const auto pred = predictive_log_draws(full_fit, spec, spec.observations, derive_seed(config.seed, 99));
    std::vector<PredictivePoint> points(spec.observations.size());
    std::vector<double> ratios(static_cast<std::size_t>(loglik.rows()));
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      for (std::size_t s = 0; s < ratios.size(); ++s) ratios[s] = -loglik(static_cast<Eigen::Index>(s), ii);
      points[i].log_y = spec.observations[i].log_y;
      points[i].draws.assign(pred.col(ii).data(), pred.col(ii).data() + pred.rows());
      points[i].log_weights = psis(ratios).log_weights;
      out.loo_ids.push_back(spec.observations[i].id);
    }
    out.reports.push_back(interval_coverage(Exercise::InSample, points));
  }
  return out;
}

void write_validation_report(const std::filesystem::path& path, const std::vector<ValidationReport>& reports) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  CsvWriter w(out);
  w.row({"exercise", "mean_error", "mean_abs_error", "pct_below_5", "pct_below_10", "pct_above_90", "pct_above_95",
         "n_test"});
  for (const auto& r : reports) {
    w.row({std::string(to_string(r.exercise)), format_number(r.mean_error), format_number(r.mean_abs_error),
           format_number(r.pct_below_5), format_number(r.pct_below_10), format_number(r.pct_above_90),
           format_number(r.pct_above_95), std::to_string(r.n_test)});
  }
}

void write_loo_report(const std::filesystem::path& path, const std::vector<long long>& ids, const LooResult& loo) {
  if (ids.size() != loo.pointwise.size()) throw std::invalid_argument("LOO ids and pointwise values differ in length");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  CsvWriter w(out);
  w.row({"id", "elpd_i", "pareto_k"});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    w.row({std::to_string(ids[i]), format_number(loo.pointwise[i]), format_number(loo.pareto_k[i])});
  }
}

}  // namespace sbr
