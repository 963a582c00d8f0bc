#pragma once

// Closed-form Gaussian computations for the linear-Gaussian observation model
//
//   Y = X + e,  e ~ N(0, s_y^2 I),  X ~ N(0, K)
//
// where K is assembled from a CovStructure.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "xgp/kernel.hpp"

namespace xgp {

struct GaussianDist {
  VectorXd mean;
  MatrixXd cov;
};

struct ObservationNoise {
  double sigma_y = 0.0;
};

// Gradient of the log marginal likelihood with respect to the (constrained)
// structure parameters. Vectors are sized like the structure's own per-task
// vectors (1 when shared); BM lengthscale entries stay zero.
struct CovParamGradient {
  double sigma_mu = 0.0;
  double mean_lengthscale = 0.0;
  std::vector<double> sigma_task;
  std::vector<double> task_lengthscale;
  double sigma_y = 0.0;
};

struct MarginalResult {
  double value = 0.0;
  CovParamGradient grad;
};

// log N(y; 0, K + s_y^2 I) on p tasks sharing `grid` (task-major y).
double log_marginal_y(const VectorXd& y, const CovStructure& structure, const TimeGrid& grid,
                      std::size_t p, ObservationNoise noise);

// Same density on arbitrary (task, time) observation points.
double log_marginal(const VectorXd& y, const CovStructure& structure,
                    std::span<const TaskPoint> points, ObservationNoise noise);

// Sequential terms log p(y_k | y_1..y_{k-1}) read off the Cholesky factor;
// they sum to log_marginal.
VectorXd log_marginal_terms(const VectorXd& y, const CovStructure& structure,
                            std::span<const TaskPoint> points, ObservationNoise noise);

MarginalResult log_marginal_with_gradient(const VectorXd& y, const CovStructure& structure,
                                          std::span<const TaskPoint> points,
                                          ObservationNoise noise);

// Conditional of the process at `targets` given observations y at `observed`.
// With include_obs_noise the result describes new observations rather than
// latent values.
GaussianDist condition_on_observations(const VectorXd& y, std::span<const TaskPoint> observed,
                                       std::span<const TaskPoint> targets,
                                       const CovStructure& structure, ObservationNoise noise,
                                       bool include_obs_noise);

// X | Y: mean K (K + s_y^2 I)^-1 y, cov K - K (K + s_y^2 I)^-1 K.
GaussianDist posterior_x(const VectorXd& y, const CovStructure& structure, const TimeGrid& grid,
                         std::size_t p, ObservationNoise noise);

// M | X for stacked task paths x (task-major, n p). For per-task scales the
// precision is S_mu^-1 + sum_i S_i^-1 and the mean weights each task by S_i^-1.
GaussianDist posterior_m(const VectorXd& x, const CovStructure& structure, const TimeGrid& grid,
                         std::size_t p);

// Predictive distribution at tasks x grid (task-major). Task ids >= p are
// unseen tasks; they share only the mean-process term with the data.
GaussianDist predictive(const TimeGrid& target_grid, std::span<const std::size_t> target_tasks,
                        const VectorXd& y, const CovStructure& structure, const TimeGrid& grid,
                        std::size_t p, ObservationNoise noise, bool include_obs_noise = true);

// count x dim matrix of draws.
MatrixXd sample_gaussian(const GaussianDist& dist, std::size_t count, std::mt19937_64& rng);
MatrixXd sample_gaussian(const GaussianDist& dist, std::size_t count, std::uint64_t seed);

}  // namespace xgp
