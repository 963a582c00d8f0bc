#include "xgp/linalg.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "xgp/error.hpp"

namespace xgp {

double mean_diagonal(const MatrixXd& a) {
  if (a.rows() == 0) return 0.0;
  return a.diagonal().mean();
}

MatrixXd symmetrize(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

MatrixXd add_jitter(const MatrixXd& a, double rel) {
  MatrixXd out = a;
  out.diagonal().array() += rel * std::abs(mean_diagonal(a));
  return out;
}

CholeskyFactor cholesky_with_jitter(const MatrixXd& a, std::span<const double> ladder) {
  const double scale = std::abs(mean_diagonal(a));
  std::vector<double> attempted;
  std::vector<double> levels{0.0};
  levels.insert(levels.end(), ladder.begin(), ladder.end());
  for (double rel : levels) {
    const double jitter = rel * scale;
    attempted.push_back(jitter);
    MatrixXd work = a;
    work.diagonal().array() += jitter;
    Eigen::LLT<MatrixXd> llt(work);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().allFinite()) {
      return {llt.matrixL(), jitter};
    }
  }
  std::ostringstream msg;
  msg << "Cholesky factorization failed for a " << a.rows() << "x" << a.cols()
      << " matrix; attempted jitter:";
  for (double j : attempted) msg << ' ' << j;
  throw NumericalError(msg.str(), attempted);
}

MatrixXd semidefinite_cholesky(const MatrixXd& a, double tol) {
  const Eigen::Index n = a.rows();
  MatrixXd l = MatrixXd::Zero(n, n);
  const double scale = std::max(1.0, a.diagonal().cwiseAbs().maxCoeff());
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (d <= tol * scale) continue;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / ljj;
    }
  }
  return l;
}

MatrixXd sampling_factor(const MatrixXd& cov) {
  MatrixXd sym = symmetrize(cov);
  if (sym.rows() == 0) return sym;
  Eigen::LLT<MatrixXd> llt(sym);
  if (llt.info() == Eigen::Success) {
    MatrixXd l = llt.matrixL();
    if (l.allFinite()) return l;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("eigendecomposition failed while preparing a sampling factor");
  }
  VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
  MatrixXd clamped = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
  return semidefinite_cholesky(symmetrize(clamped), 1e-12);
}

VectorXd standard_normal_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd z(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  return z;
}

double log_sum_exp(double a, double b) {
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  if (a == ninf) return b;
  if (b == ninf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace xgp
