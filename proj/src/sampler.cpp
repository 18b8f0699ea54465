#include "sbr/sampler.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "sbr/errors.hpp"
#include "sbr/stats.hpp"

namespace sbr {

void SamplerConfig::validate() const {
  if (n_chains < 1) throw std::invalid_argument("sampler: n_chains must be >= 1");
  if (!(n_warmup >= 0 && n_warmup < n_iter)) throw std::invalid_argument("sampler: need 0 <= n_warmup < n_iter");
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw std::invalid_argument("sampler: target_accept must lie in (0, 1)");
  }
  if (max_treedepth < 1) throw std::invalid_argument("sampler: max_treedepth must be >= 1");
}

std::size_t PosteriorDraws::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

Eigen::MatrixXd PosteriorDraws::parameter(std::size_t p) const {
  Eigen::MatrixXd out(n_kept(), n_chains());
  for (int c = 0; c < n_chains(); ++c) out.col(c) = chains[c].col(static_cast<Eigen::Index>(p));
  return out;
}

std::vector<double> PosteriorDraws::pooled(std::size_t p) const {
  std::vector<double> out;
  out.reserve(n_pooled());
  for (const auto& ch : chains) {
    for (Eigen::Index s = 0; s < ch.rows(); ++s) out.push_back(ch(s, static_cast<Eigen::Index>(p)));
  }
  return out;
}

Eigen::VectorXd PosteriorDraws::pooled_row(std::size_t s) const {
  const auto n = static_cast<std::size_t>(n_kept());
  return chains[s / n].row(static_cast<Eigen::Index>(s % n)).transpose();
}

int PosteriorDraws::divergent_count() const {
  int n = 0;
  for (const auto& ch : stats) {
    for (const auto& it : ch) n += it.divergent ? 1 : 0;
  }
  return n;
}

namespace {

constexpr double kMaxDeltaH = 1000.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double log_density = -kInf;
};

/// Dual averaging of log step size toward a target acceptance statistic.
class StepSizeAdapter {
 public:
  explicit StepSizeAdapter(double delta) : delta_(delta) {}

  void restart(double step) {
    mu_ = std::log(10.0 * step);
    counter_ = 0;
    s_bar_ = 0;
    x_bar_ = 0;
  }

  double learn(double accept_stat) {
    ++counter_;
    accept_stat = std::min(1.0, accept_stat);
    const double eta = 1.0 / (counter_ + kT0);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(counter_) / kGamma;
    const double x_eta = std::pow(counter_, -kKappa);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }

  double final_step() const { return std::exp(x_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  double delta_;
  double mu_ = 0;
  double counter_ = 0;
  double s_bar_ = 0;
  double x_bar_ = 0;
};

/// Schedule of metric-adaptation windows: fast initial buffer, doubling slow
/// windows, fast terminal buffer.
class MetricAdapter {
 public:
  MetricAdapter(int n_warmup, int dim) : n_warmup_(n_warmup), mean_(Eigen::VectorXd::Zero(dim)), m2_(mean_) {
    if (n_warmup < 20) {
      enabled_ = false;
      return;
    }
    if (init_buffer_ + base_window_ + term_buffer_ > n_warmup) {
      init_buffer_ = static_cast<int>(0.15 * n_warmup);
      term_buffer_ = static_cast<int>(0.1 * n_warmup);
      base_window_ = n_warmup - (init_buffer_ + term_buffer_);
    }
    window_size_ = base_window_;
    next_window_ = init_buffer_ + window_size_ - 1;
  }

  /// Returns true when a window closed and `inverse_metric` was updated.
  bool learn(const Eigen::VectorXd& q, Eigen::VectorXd& inverse_metric) {
    if (!enabled_) return false;
    if (in_window()) add(q);
    if (counter_ == next_window_ && counter_ != n_warmup_) {
      compute_next_window();
      const double n = static_cast<double>(count_);
      Eigen::VectorXd var = m2_ / (n - 1.0);
      inverse_metric = (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
      count_ = 0;
      mean_.setZero();
      m2_.setZero();
      ++counter_;
      return true;
    }
    ++counter_;
    return false;
  }

 private:
  bool in_window() const {
    return counter_ >= init_buffer_ && counter_ < n_warmup_ - term_buffer_ && counter_ != n_warmup_;
  }

  void add(const Eigen::VectorXd& q) {
    ++count_;
    Eigen::VectorXd delta = q - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta.cwiseProduct(q - mean_);
  }

  void compute_next_window() {
    if (next_window_ == n_warmup_ - term_buffer_ - 1) return;
    window_size_ *= 2;
    next_window_ = counter_ + window_size_;
    if (next_window_ != n_warmup_ - term_buffer_ - 1) {
      const int boundary = next_window_ + 2 * window_size_;
      if (boundary >= n_warmup_ - term_buffer_) next_window_ = n_warmup_ - term_buffer_ - 1;
    }
  }

  int n_warmup_;
  bool enabled_ = true;
  int init_buffer_ = 75;
  int term_buffer_ = 50;
  int base_window_ = 25;
  int window_size_ = 0;
  int next_window_ = 0;
  int counter_ = 0;
  int count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

class Chain {
 public:
  Chain(const Target& target, const SamplerConfig& config, int index)
      : target_(target),
        config_(config),
        index_(index),
        rng_(derive_seed(config.seed, static_cast<std::uint64_t>(index))),
        inverse_metric_(Eigen::VectorXd::Ones(target.dimension)) {}

  void run(Eigen::MatrixXd& draws, std::vector<IterationStats>& stats, double& final_step,
           Eigen::VectorXd& final_metric) {
    initialize();
    StepSizeAdapter step_adapter(config_.target_accept);
    MetricAdapter metric_adapter(config_.n_warmup, target_.dimension);
    find_reasonable_step();
    step_adapter.restart(step_);

    const int kept = config_.n_kept();
    const bool identity = !static_cast<bool>(target_.constrain);
    const int out_dim = identity ? target_.dimension : static_cast<int>(target_.constrain(z_.q).size());
    draws.resize(kept, out_dim);
    stats.clear();
    stats.reserve(kept);

    for (int it = 0; it < config_.n_iter; ++it) {
      const bool warmup = it < config_.n_warmup;
      IterationStats s = transition();
      if (warmup) {
        step_ = step_adapter.learn(s.accept_stat);
        if (metric_adapter.learn(z_.q, inverse_metric_)) {
          find_reasonable_step();
          step_adapter.restart(step_);
        }
        if (it + 1 == config_.n_warmup) step_ = step_adapter.final_step();
        continue;
      }
      const int row = it - config_.n_warmup;
      if (identity) {
        draws.row(row) = z_.q.transpose();
      } else {
        draws.row(row) = target_.constrain(z_.q).transpose();
      }
      stats.push_back(s);
    }
    final_step = step_;
    final_metric = inverse_metric_;
  }

 private:
  double evaluate(const Eigen::VectorXd& q, Eigen::VectorXd& grad) const {
    try {
      const double lp = target_.log_density(q, grad);
      if (!std::isfinite(lp) || !grad.allFinite()) return -kInf;
      return lp;
    } catch (const NonFiniteError&) {
      return -kInf;
    } catch (const std::domain_error&) {
      return -kInf;
    }
  }

  void initialize() {
    const int dim = target_.dimension;
    z_.grad.resize(dim);
    z_.p = Eigen::VectorXd::Zero(dim);
    std::string last_error = "non-finite log density or gradient";
    for (int attempt = 0; attempt < 100; ++attempt) {
      if (target_.initialize) {
        z_.q = target_.initialize(rng_);
      } else {
        std::uniform_real_distribution<double> u(-config_.init_radius, config_.init_radius);
        z_.q.resize(dim);
        for (int i = 0; i < dim; ++i) z_.q(i) = u(rng_);
      }
      try {
        z_.log_density = target_.log_density(z_.q, z_.grad);
        if (std::isfinite(z_.log_density) && z_.grad.allFinite()) return;
      } catch (const NonFiniteError& e) {
        last_error = std::string(e.what()) + " (block " + e.block() + ")";
      }
    }
    throw SamplerError("chain " + std::to_string(index_) + ": could not initialise", last_error);
  }

  double hamiltonian(const PhasePoint& z) const {
    if (!std::isfinite(z.log_density)) return kInf;
    return -z.log_density + 0.5 * z.p.cwiseProduct(inverse_metric_).dot(z.p);
  }

  Eigen::VectorXd p_sharp(const PhasePoint& z) const { return inverse_metric_.cwiseProduct(z.p); }

  void sample_momentum() {
    std::normal_distribution<double> n01;
    for (Eigen::Index i = 0; i < z_.p.size(); ++i) z_.p(i) = n01(rng_) / std::sqrt(inverse_metric_(i));
  }

  void leapfrog(PhasePoint& z, double eps) const {
    z.p += 0.5 * eps * z.grad;
    z.q += eps * inverse_metric_.cwiseProduct(z.p);
    z.log_density = evaluate(z.q, z.grad);
    if (!std::isfinite(z.log_density)) return;
    z.p += 0.5 * eps * z.grad;
  }

  void find_reasonable_step() {
    const PhasePoint start = z_;
    if (step_ <= 0) step_ = 1.0;
    sample_momentum();
    double h0 = hamiltonian(z_);
    leapfrog(z_, step_);
    double delta_h = h0 - hamiltonian(z_);
    const int direction = delta_h > std::log(0.8) ? 1 : -1;
    for (int guard = 0; guard < 100; ++guard) {
      z_ = start;
      sample_momentum();
      h0 = hamiltonian(z_);
      leapfrog(z_, step_);
      delta_h = h0 - hamiltonian(z_);
      if (std::isnan(delta_h)) delta_h = -kInf;
      if (direction == 1 && !(delta_h > std::log(0.8))) break;
      if (direction == -1 && !(delta_h < std::log(0.8))) break;
      step_ = direction == 1 ? 2.0 * step_ : 0.5 * step_;
      if (step_ > 1e7) throw SamplerError("step size diverged", "posterior may be improper");
      if (step_ == 0) throw SamplerError("step size collapsed to zero", "log density may be discontinuous");
    }
    z_ = start;
  }

  static bool uturn_ok(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
                       const Eigen::VectorXd& rho) {
    return p_sharp_plus.dot(rho) > 0 && p_sharp_minus.dot(rho) > 0;
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }

  bool build_tree(int depth, PhasePoint& z_propose, Eigen::VectorXd& p_sharp_beg, Eigen::VectorXd& p_sharp_end,
                  Eigen::VectorXd& rho, Eigen::VectorXd& p_beg, Eigen::VectorXd& p_end, double h0, double sign,
                  int& n_leapfrog, double& log_sum_weight, double& sum_metro_prob) {
    if (depth == 0) {
      leapfrog(z_, sign * step_);
      ++n_leapfrog;
      double h = hamiltonian(z_);
      if (std::isnan(h)) h = kInf;
      if (h - h0 > kMaxDeltaH) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_prob += h0 - h > 0 ? 1.0 : std::exp(h0 - h);
      z_propose = z_;
      p_sharp_beg = p_sharp(z_);
      p_sharp_end = p_sharp_beg;
      rho += z_.p;
      p_beg = z_.p;
      p_end = p_beg;
      return !divergent_;
    }

    const auto dim = z_.p.size();
    double log_sum_weight_init = -kInf;
    Eigen::VectorXd p_init_end(dim);
    Eigen::VectorXd p_sharp_init_end(dim);
    Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(dim);
    if (!build_tree(depth - 1, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg, p_init_end, h0, sign,
                    n_leapfrog, log_sum_weight_init, sum_metro_prob)) {
      return false;
    }

    PhasePoint z_propose_final = z_;
    double log_sum_weight_final = -kInf;
    Eigen::VectorXd p_final_beg(dim);
    Eigen::VectorXd p_sharp_final_beg(dim);
    Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(dim);
    if (!build_tree(depth - 1, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final, p_final_beg, p_end, h0,
                    sign, n_leapfrog, log_sum_weight_final, sum_metro_prob)) {
      return false;
    }

    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = z_propose_final;
    } else if (uniform() < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = z_propose_final;
    }

    Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = uturn_ok(p_sharp_beg, p_sharp_end, rho_subtree);
    Eigen::VectorXd rho_extended = rho_init + p_final_beg;
    persist = persist && uturn_ok(p_sharp_beg, p_sharp_final_beg, rho_extended);
    rho_extended = rho_final + p_init_end;
    persist = persist && uturn_ok(p_sharp_init_end, p_sharp_end, rho_extended);
    return persist;
  }

  IterationStats transition() {
    sample_momentum();
    PhasePoint z_fwd = z_;
    PhasePoint z_bck = z_;
    PhasePoint z_sample = z_;
    PhasePoint z_propose = z_;

    Eigen::VectorXd p_fwd_fwd = z_.p;
    Eigen::VectorXd p_sharp_fwd_fwd = p_sharp(z_);
    Eigen::VectorXd p_fwd_bck = z_.p;
    Eigen::VectorXd p_sharp_fwd_bck = p_sharp_fwd_fwd;
    Eigen::VectorXd p_bck_fwd = z_.p;
    Eigen::VectorXd p_sharp_bck_fwd = p_sharp_fwd_fwd;
    Eigen::VectorXd p_bck_bck = z_.p;
    Eigen::VectorXd p_sharp_bck_bck = p_sharp_fwd_fwd;
    Eigen::VectorXd rho = z_.p;

    double log_sum_weight = 0.0;
    const double h0 = hamiltonian(z_);
    int n_leapfrog = 0;
    double sum_metro_prob = 0.0;
    int depth = 0;
    divergent_ = false;

    while (depth < config_.max_treedepth) {
      Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(rho.size());
      Eigen::VectorXd rho_bck = Eigen::VectorXd::Zero(rho.size());
      bool valid = false;
      double log_sum_weight_subtree = -kInf;
      if (uniform() > 0.5) {
        z_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        p_sharp_bck_fwd = p_sharp_fwd_bck;
        valid = build_tree(depth, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd, h0, 1.0,
                           n_leapfrog, log_sum_weight_subtree, sum_metro_prob);
        z_fwd = z_;
      } else {
        z_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        p_sharp_fwd_bck = p_sharp_bck_fwd;
        valid = build_tree(depth, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd, p_bck_bck, h0,
                           -1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob);
        z_bck = z_;
      }
      if (!valid) break;
      ++depth;
      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (uniform() < std::exp(log_sum_weight_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

      rho = rho_bck + rho_fwd;
      bool persist = uturn_ok(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      Eigen::VectorXd rho_extended = rho_bck + p_fwd_bck;
      persist = persist && uturn_ok(p_sharp_bck_bck, p_sharp_fwd_bck, rho_extended);
      rho_extended = rho_fwd + p_bck_fwd;
      persist = persist && uturn_ok(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_extended);
      if (!persist) break;
    }

    z_ = z_sample;
    IterationStats s;
    s.step_size = step_;
    s.tree_depth = depth;
    s.n_leapfrog = n_leapfrog;
    s.divergent = divergent_;
    s.accept_stat = n_leapfrog > 0 ? sum_metro_prob / n_leapfrog : 0.0;
    s.log_density = z_.log_density;
    s.energy = hamiltonian(z_);
    return s;
  }

  const Target& target_;
  const SamplerConfig& config_;
  int index_;
  std::mt19937_64 rng_;
  Eigen::VectorXd inverse_metric_;
  PhasePoint z_;
  double step_ = 1.0;
  bool divergent_ = false;
};

}  // namespace

PosteriorDraws sample(const Target& target, const SamplerConfig& config) {
  config.validate();
  if (target.dimension < 1 || !target.log_density) throw std::invalid_argument("sampler: empty target");

  PosteriorDraws out;
  const auto n = static_cast<std::size_t>(config.n_chains);
  out.chains.resize(n);
  out.stats.resize(n);
  out.step_size.resize(n);
  out.inverse_metric.resize(n);
  std::vector<std::exception_ptr> errors(n);

  auto run_chain = [&](std::size_t c) {
    try {
      Chain chain(target, config, static_cast<int>(c));
      chain.run(out.chains[c], out.stats[c], out.step_size[c], out.inverse_metric[c]);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (config.parallel && n > 1) {
    std::vector<std::jthread> workers;
    for (std::size_t c = 0; c < n; ++c) workers.emplace_back(run_chain, c);
  } else {
    for (std::size_t c = 0; c < n; ++c) run_chain(c);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  if (!target.names.empty()) {
    out.names = target.names;
  } else {
    for (int i = 0; i < out.dim(); ++i) out.names.push_back("x[" + std::to_string(i) + "]");
  }

  const int divergent = out.divergent_count();
  const double total = static_cast<double>(out.n_pooled());
  if (total > 0 && divergent / total > config.max_divergent_fraction) {
    std::ostringstream diag;
    diag << "divergent transitions: " << divergent << " of " << out.n_pooled() << "\n";
    for (std::size_t c = 0; c < n; ++c) {
      int dc = 0;
      double accept = 0.0;
      for (const auto& s : out.stats[c]) {
        dc += s.divergent;
        accept += s.accept_stat;
      }
      diag << "chain " << c << ": step size " << out.step_size[c] << ", divergent " << dc << ", mean accept "
           << accept / std::max<std::size_t>(1, out.stats[c].size()) << "\n";
    }
    throw SamplerError("more than " + std::to_string(config.max_divergent_fraction * 100) +
                           "% divergent transitions after warmup",
                       diag.str());
  }
  return out;
}

}  // namespace sbr
