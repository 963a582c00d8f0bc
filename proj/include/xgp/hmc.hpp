#pragma once

// No-U-turn Hamiltonian Monte Carlo with multinomial trajectory sampling,
// dual-averaging step-size adaptation and a windowed diagonal metric.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xgp/model.hpp"

namespace xgp {

struct SamplerConfig {
  std::size_t chains = 4;
  std::size_t iterations = 2000;  // per chain, warm-up included
  std::size_t warmup = 1000;
  std::size_t thin = 1;
  std::uint64_t seed = 1;
  double target_accept = 0.8;
  int max_depth = 10;
  double init_shrink = 0.1;
  bool adapt_metric = true;
  bool pointwise = true;  // store pointwise log-likelihoods per draw
  bool latents = false;   // store model latent quantities per draw

  // Throws ConfigError; warmup == iterations leaves no draws to keep.
  void validate() const;
};

struct ChainStats {
  std::size_t chain = 0;
  double step_size = 0.0;
  std::size_t divergences = 0;      // post-warm-up
  std::size_t max_depth_hits = 0;   // post-warm-up
  double mean_accept = 0.0;         // post-warm-up acceptance statistic
  std::size_t moves = 0;            // post-warm-up transitions that changed the state
  std::vector<double> inv_metric;
  bool failed = false;
  std::string message;
};

struct PosteriorDraws {
  std::vector<std::string> param_names;  // constrained parameters, then derived quantities
  MatrixXd params;                       // draws x param_names
  MatrixXd unconstrained;                // draws x model dimension
  std::vector<std::size_t> chain;        // chain of each draw
  std::size_t chains = 0;
  VectorXd logdens;
  std::vector<std::string> observation_ids;
  MatrixXd pointwise_ll;                                  // draws x observations
  std::vector<std::vector<LatentQuantity>> latent_draws;  // per draw; empty when absent
  std::size_t latent_failures = 0;
  std::vector<ChainStats> chain_stats;
  std::vector<std::string> warnings;

  std::size_t draws() const noexcept { return static_cast<std::size_t>(params.rows()); }
  // Column of one named parameter split by chain.
  std::vector<VectorXd> by_chain(std::size_t column) const;
};

using LogDensityFn = std::function<double(const VectorXd&, VectorXd*)>;

struct ChainOutput {
  MatrixXd draws;  // retained draws, unconstrained
  VectorXd logdens;
  ChainStats stats;
};

// One chain from `init`. The rng stream is derived from (config.seed, chain).
ChainOutput run_nuts_chain(const LogDensityFn& log_density, const VectorXd& init,
                           const SamplerConfig& config, std::size_t chain);

// Runs config.chains chains concurrently. Throws NumericalError when no
// finite initial point is found or when every chain fails.
PosteriorDraws hmc_sample(const Model& model, const SamplerConfig& config);

}  // namespace xgp
