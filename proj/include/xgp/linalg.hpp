#pragma once

#include <array>
#include <random>
#include <span>

#include <Eigen/Dense>

namespace xgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Relative jitter levels (times the mean diagonal) tried in order before a
// factorization is declared failed.
inline constexpr std::array<double, 3> kJitterLadder{1e-10, 1e-8, 1e-6};

// Fixed relative jitter used for covariance factors that enter gradients.
inline constexpr double kDefaultJitter = 1e-8;

double mean_diagonal(const MatrixXd& a);

MatrixXd symmetrize(const MatrixXd& a);

// a + rel * mean_diag(a) * I
MatrixXd add_jitter(const MatrixXd& a, double rel = kDefaultJitter);

struct CholeskyFactor {
  MatrixXd lower;
  double jitter = 0.0;  // absolute jitter that was added to the diagonal
};

// Cholesky factorization; tried without jitter first, then escalating
// through `ladder`. Throws NumericalError
// listing every attempted absolute jitter if all levels fail.
CholeskyFactor cholesky_with_jitter(const MatrixXd& a,
                                    std::span<const double> ladder = kJitterLadder);

// Lower-triangular L with L L' = a for symmetric PSD a, tolerating exact
// rank deficiency (zero pivots produce zero columns).
MatrixXd semidefinite_cholesky(const MatrixXd& a, double tol = 1e-14);

// Square-root factor S (S S' = cov) for sampling: symmetrizes, and when a
// plain Cholesky fails clamps negative eigenvalues to zero and uses a
// rank-tolerant factorization.
MatrixXd sampling_factor(const MatrixXd& cov);

VectorXd standard_normal_vector(std::size_t n, std::mt19937_64& rng);

// log(sum(exp(a), exp(b))) with -inf handling.
double log_sum_exp(double a, double b);

}  // namespace xgp
