#include "xgp/sde.hpp"

#include <cmath>
#include <string>

#include "xgp/error.hpp"
#include "xgp/linalg.hpp"

namespace xgp {

void ExchangeableDiffusion::validate() const {
  if (p == 0) throw ConfigError("diffusion needs at least one task");
  if (!(sigma_mu >= 0.0) || !(sigma_x >= 0.0)) {
    throw ConfigError("diffusion scales must be nonnegative");
  }
}

MatrixXd exchangeable_chol(std::size_t p, double sigma_mu, double sigma_x) {
  if (p == 0) throw ConfigError("exchangeable_chol: p must be at least 1");
  if (!(sigma_mu * sigma_mu + sigma_x * sigma_x > 0.0)) {
    throw ConfigError("exchangeable_chol: s_mu^2 + s_x^2 must be positive");
  }
  const auto n = static_cast<Eigen::Index>(p);
  MatrixXd q = MatrixXd::Constant(n, n, sigma_mu * sigma_mu);
  q.diagonal().array() += sigma_x * sigma_x;
  return semidefinite_cholesky(q);
}

VectorXd bm_increment(const ExchangeableDiffusion& diffusion, double delta, std::mt19937_64& rng) {
  diffusion.validate();
  if (!(delta > 0.0)) throw ConfigError("bm_increment: delta must be positive");
  const MatrixXd l = exchangeable_chol(diffusion.p, diffusion.sigma_mu, diffusion.sigma_x);
  return std::sqrt(delta) * (l * standard_normal_vector(diffusion.p, rng));
}

VectorXd bm_increment(const ExchangeableDiffusion& diffusion, double delta, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return bm_increment(diffusion, delta, rng);
}

SdePath euler_maruyama(const ExchangeableDiffusion& diffusion, const VectorXd& x0,
                       const TimeGrid& grid, std::mt19937_64& rng) {
  diffusion.validate();
  const auto p = static_cast<Eigen::Index>(diffusion.p);
  if (x0.size() != p) throw ConfigError("euler_maruyama: x0 must have p entries");

  const bool noisy = diffusion.sigma_mu > 0.0 || diffusion.sigma_x > 0.0;
  const MatrixXd l = noisy ? exchangeable_chol(diffusion.p, diffusion.sigma_mu, diffusion.sigma_x)
                           : MatrixXd::Zero(p, p);

  const auto n = static_cast<Eigen::Index>(grid.size());
  MatrixXd states(n, p);
  states.row(0) = x0.transpose();
  VectorXd x = x0;
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    const double dt = grid[k + 1] - grid[k];
    if (diffusion.drift) {
      const VectorXd m = diffusion.drift(x);
      if (m.size() != p || !m.allFinite()) {
        throw NumericalError("drift is not finite at step " + std::to_string(k));
      }
      x += m * dt;
    }
    if (noisy) x += std::sqrt(dt) * (l * standard_normal_vector(diffusion.p, rng));
    states.row(k + 1) = x.transpose();
  }
  return {grid, std::move(states)};
}

SdePath euler_maruyama(const ExchangeableDiffusion& diffusion, const VectorXd& x0,
                       const TimeGrid& grid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return euler_maruyama(diffusion, x0, grid, rng);
}

}  // namespace xgp
