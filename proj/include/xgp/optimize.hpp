#pragma once

// Marginal-likelihood maximization for the linear-Gaussian model and
// post-hoc reconstruction of latent paths from parameter draws.

#include <cstdint>
#include <string>
#include <vector>

#include "xgp/hmc.hpp"
#include "xgp/models.hpp"

namespace xgp {

struct LbfgsOptions {
  std::size_t max_iterations = 2000;
  std::size_t history = 10;
  double gradient_tol = 1e-8;  // infinity norm
  // Relative objective change below which an iteration counts as stalled;
  // ten stalled iterations with gradient below sqrt(gradient_tol) converge.
  double value_tol = 1e-12;
};

struct LbfgsResult {
  VectorXd x;
  double value = 0.0;
  double gradient_norm = 0.0;
  std::size_t iterations = 0;
  std::string status;  // "converged", "max_iterations", "line_search_failed", "nonfinite_start"
  bool converged() const noexcept { return status == "converged"; }
};

// Maximizes f. f returns -inf (or a non-finite value) outside its domain.
LbfgsResult lbfgs_maximize(const LogDensityFn& f, const VectorXd& x0, const LbfgsOptions& opts = {});

struct OptimizeResult {
  VectorXd u;               // best optimum, unconstrained
  VectorXd outputs;         // constrained parameters and derived quantities
  std::vector<std::string> names;
  double log_marginal = 0.0;
  std::vector<LbfgsResult> starts;
  std::vector<VectorXd> start_points;
};

// Multi-start ascent on the log marginal likelihood (no priors, no Jacobian).
// Throws ConfigError for models that are not marginalized linear-Gaussian,
// NumericalError with per-start traces when no start converges.
OptimizeResult optimize_marginal(const GaussianModel& model, std::size_t starts, std::uint64_t seed,
                                 const LbfgsOptions& opts = {});

// For every retained draw: X | Y, theta on the full grid (latent, no
// observation noise), then M | X, theta for structures with a mean process.
// Fills draws.latent_draws with quantities "x" and "mu"; failing draws get an
// empty entry and are counted in draws.latent_failures.
void reconstruct_latents(PosteriorDraws& draws, const GaussianModel& model, std::uint64_t seed);

}  // namespace xgp
