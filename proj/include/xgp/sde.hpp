#pragma once

// Exchangeable Brownian motion and Euler-Maruyama simulation of
//
//   dX_t = M(X_t) dt + S dB_t,   S S' = s_mu^2 J_p + s_x^2 I_p.

#include <cstdint>
#include <functional>
#include <random>

#include <Eigen/Dense>

#include "xgp/kernel.hpp"

namespace xgp {

using DriftFunction = std::function<VectorXd(const VectorXd&)>;

struct ExchangeableDiffusion {
  std::size_t p = 1;
  double sigma_mu = 0.0;
  double sigma_x = 0.0;
  DriftFunction drift;  // empty means zero drift

  void validate() const;
};

struct SdePath {
  TimeGrid times;
  MatrixXd states;  // one row per grid time, one column per task
};

// Lower-triangular factor of s_mu^2 J_p + s_x^2 I_p. Rank-deficient inputs
// (s_x = 0) produce zero columns.
MatrixXd exchangeable_chol(std::size_t p, double sigma_mu, double sigma_x);

// One draw from N(0, (s_mu^2 J + s_x^2 I) delta). Only the noise part of
// `diffusion` is used.
VectorXd bm_increment(const ExchangeableDiffusion& diffusion, double delta, std::mt19937_64& rng);
VectorXd bm_increment(const ExchangeableDiffusion& diffusion, double delta, std::uint64_t seed);

// Fixed-step scheme on `grid`; row 0 of the result is x0 at grid[0]. Throws
// NumericalError naming the step when the drift is not finite.
SdePath euler_maruyama(const ExchangeableDiffusion& diffusion, const VectorXd& x0,
                       const TimeGrid& grid, std::mt19937_64& rng);
SdePath euler_maruyama(const ExchangeableDiffusion& diffusion, const VectorXd& x0,
                       const TimeGrid& grid, std::uint64_t seed);

}  // namespace xgp
