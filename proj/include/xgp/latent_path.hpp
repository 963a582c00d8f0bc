#pragma once

// Parameter blocks for the transmission/covariance hyperparameters of each
// variant, and the non-centered construction of latent task paths
//
//   path_i = s_mu L_mu z_mu + s_i L_i z_i,    L L' = kernel Gram on the grid
//
// which is the two-step hierarchical construction (mean process, then task
// deviations) and has the joint covariance of assemble_joint_cov.

#include <random>
#include <span>
#include <vector>

#include "xgp/gp.hpp"
#include "xgp/kernel.hpp"
#include "xgp/model.hpp"

namespace xgp {

// Adds the hyperparameter blocks of a GP variant, in this order:
//   iBM  sigma[p]                 xBM  sigma_mu, sigma_x
//   mxBM sigma_mu, sigma[p]       iEQ  sigma[p], ell[p]
//   xEQ  sigma_mu, ell_mu, sigma_x, ell_x
//   mxEQ sigma_mu, ell_mu, sigma[p], ell[p]
class TransmissionBlocks {
 public:
  TransmissionBlocks(Variant variant, std::size_t p, ParamLayout& layout, const PriorSet& priors);

  CovStructure structure(const VectorXd& theta) const;
  // Adds dF/dtheta given dF/d(structure parameters).
  void add_gradient(const CovParamGradient& g, VectorXd& grad_theta) const;

  std::vector<std::string> rho_names() const;
  VectorXd rho(const VectorXd& theta) const;

  StructureKind kind() const noexcept { return kind_; }
  KernelFamily family() const noexcept { return family_; }
  std::size_t tasks() const noexcept { return p_; }

 private:
  StructureKind kind_;
  KernelFamily family_;
  std::size_t p_;
  std::optional<std::size_t> sigma_mu_, ell_mu_, sigma_task_, ell_task_;
  std::size_t n_sigma_task_ = 1;
  std::size_t n_ell_task_ = 1;
};

class LatentPathBuilder {
 public:
  LatentPathBuilder(StructureKind kind, TimeGrid grid, std::size_t p);

  // Number of standard-normal coordinates: (mean process ? n : 0) + p n.
  std::size_t latent_dim() const noexcept;
  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t tasks() const noexcept { return p_; }

  struct Workspace {
    MatrixXd mean_factor;
    std::vector<MatrixXd> task_factors;  // one shared, or one per task
    MatrixXd mean_unit;                  // L_mu z_mu, 1 x n
    MatrixXd task_unit;                  // L_i z_i, p x n
  };

  // p x n path deviations (no initial offset). Throws NumericalError if a
  // kernel factorization fails.
  MatrixXd evaluate(const CovStructure& s, std::span<const double> z, Workspace& ws) const;

  // Given dF/dpath (p x n), adds dF/d(structure params) to g and writes
  // dF/dz into z_bar.
  void adjoint(const CovStructure& s, std::span<const double> z, const Workspace& ws,
               const MatrixXd& path_bar, CovParamGradient& g, std::span<double> z_bar) const;

  // Mean-process path s_mu L_mu z_mu (empty for the independent structure).
  VectorXd mean_path(const CovStructure& s, const Workspace& ws) const;

  // Draws the path deviations at `future` times (all greater than the last
  // grid time) conditionally on the component paths in ws. Returns p x m.
  MatrixXd extend(const CovStructure& s, const Workspace& ws, std::span<const double> future,
                  std::mt19937_64& rng) const;

 private:
  MatrixXd factor(const KernelSpec& k) const;
  MatrixXd factor_derivative(const KernelSpec& k, const MatrixXd& l) const;

  StructureKind kind_;
  TimeGrid grid_;
  std::size_t p_;
};

}  // namespace xgp
