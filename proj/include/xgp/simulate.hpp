#pragma once

// Generative simulators used for synthetic data bundles and for
// simulation-based checks.

#include <random>

#include "xgp/data.hpp"
#include "xgp/epidemic.hpp"
#include "xgp/kernel.hpp"

namespace xgp {

// p x n latent paths x0_i + path_i drawn with the two-step construction.
MatrixXd simulate_latent_paths(const CovStructure& s, const TimeGrid& grid, std::size_t p,
                               const VectorXd& x0, std::mt19937_64& rng);

// Y = X + e on a shared grid, all cells observed. `latent` receives X.
TaskSeries simulate_gaussian(const CovStructure& s, const TimeGrid& grid, std::size_t p,
                             double sigma_y, std::mt19937_64& rng, MatrixXd* latent = nullptr);

// Weekly incidence from latent log-transmission x (S x T), simulated
// forward so that exposure and depletion use the simulated counts.
MatrixXd simulate_chikv_incidence(const MatrixXd& x, const epi::ChikvConfig& config, double phi,
                                  std::mt19937_64& rng);

// Daily deaths from changepoint values x (A x K): beta = logistic(x).
MatrixXd simulate_covid_deaths(const MatrixXd& x, const epi::RenewalConfig& config,
                               std::size_t days, double phi, std::mt19937_64& rng);

}  // namespace xgp
