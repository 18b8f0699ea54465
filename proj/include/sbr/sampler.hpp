#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sbr {

struct SamplerConfig {
  int n_chains = 6;
  int n_iter = 6000;   ///< total iterations per chain, warmup included
  int n_warmup = 2000;
  double target_accept = 0.8;
  int max_treedepth = 10;
  std::uint64_t seed = 0;
  double init_radius = 2.0;             ///< uniform(-r, r) initialisation in unconstrained space
  double max_divergent_fraction = 0.25; ///< hard failure above this post-warmup share
  bool parallel = true;

  int n_kept() const { return n_iter - n_warmup; }
  void validate() const;
};

/// Log density on the unconstrained scale; writes the gradient into `grad`.
using LogDensityFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

/// What the sampler explores. `constrain` maps an unconstrained state onto the
/// reported parameter vector (identity when empty).
struct Target {
  int dimension = 0;
  LogDensityFn log_density;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> constrain;
  std::vector<std::string> names;
  std::function<Eigen::VectorXd(std::mt19937_64&)> initialize;
};

struct IterationStats {
  double step_size = 0;
  int tree_depth = 0;
  int n_leapfrog = 0;
  bool divergent = false;
  double accept_stat = 0;
  double log_density = 0;
  double energy = 0;
};

struct PosteriorDraws {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> chains;  ///< per chain, (n_kept x dim), constrained scale
  std::vector<std::vector<IterationStats>> stats;  ///< post-warmup iterations
  std::vector<double> step_size;
  std::vector<Eigen::VectorXd> inverse_metric;

  int n_chains() const { return static_cast<int>(chains.size()); }
  int n_kept() const { return chains.empty() ? 0 : static_cast<int>(chains.front().rows()); }
  int dim() const { return chains.empty() ? 0 : static_cast<int>(chains.front().cols()); }
  std::size_t index_of(const std::string& name) const;
  /// (n_kept x n_chains) matrix of one parameter.
  Eigen::MatrixXd parameter(std::size_t p) const;
  std::vector<double> pooled(std::size_t p) const;
  /// Draw `s` of the pooled sequence (chain-major order).
  Eigen::VectorXd pooled_row(std::size_t s) const;
  std::size_t n_pooled() const { return static_cast<std::size_t>(n_chains()) * n_kept(); }
  int divergent_count() const;
};

class SamplerError : public std::runtime_error {
 public:
  SamplerError(const std::string& what, std::string diagnostics)
      : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const { return diagnostics_; }

 private:
  std::string diagnostics_;
};

/// No-U-Turn sampler (multinomial trajectory sampling, generalized U-turn criterion)
/// with dual-averaging step size and windowed diagonal metric adaptation. Chains are
/// seeded from `config.seed` and merged by chain index, so output does not depend
/// on thread scheduling.
PosteriorDraws sample(const Target& target, const SamplerConfig& config);

}  // namespace sbr
