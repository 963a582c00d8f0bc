#include "xgp/latent_path.hpp"

#include <cmath>

#include "xgp/error.hpp"
#include "xgp/linalg.hpp"

namespace xgp {

TransmissionBlocks::TransmissionBlocks(Variant variant, std::size_t p, ParamLayout& layout,
                                       const PriorSet& priors)
    : kind_(structure_of(variant)), family_(kernel_of(variant)), p_(p) {
  if (variant == Variant::Baseline) throw ConfigError("the baseline variant has no GP hyperparameters");
  const bool eq = family_ == KernelFamily::EQ;
  auto add_sigma = [&](const char* name, std::size_t n) {
    return layout.add(name, n, Transform::Log, priors.sigma);
  };
  auto add_ell = [&](const char* name, std::size_t n) {
    return layout.add(name, n, Transform::Log, priors.lengthscale);
  };
  switch (kind_) {
    case StructureKind::Independent:
      sigma_task_ = add_sigma("sigma", p);
      n_sigma_task_ = p;
      if (eq) {
        ell_task_ = add_ell("ell", p);
        n_ell_task_ = p;
      }
      break;
    case StructureKind::Exchangeable:
      sigma_mu_ = add_sigma("sigma_mu", 1);
      if (eq) ell_mu_ = add_ell("ell_mu", 1);
      sigma_task_ = add_sigma("sigma_x", 1);
      if (eq) ell_task_ = add_ell("ell_x", 1);
      break;
    case StructureKind::MultipleExchangeable:
      sigma_mu_ = add_sigma("sigma_mu", 1);
      if (eq) ell_mu_ = add_ell("ell_mu", 1);
      sigma_task_ = add_sigma("sigma", p);
      n_sigma_task_ = p;
      if (eq) {
        ell_task_ = add_ell("ell", p);
        n_ell_task_ = p;
      }
      break;
  }
}

CovStructure TransmissionBlocks::structure(const VectorXd& theta) const {
  auto kernel_at = [&](std::optional<std::size_t> off, std::size_t k) {
    return off ? KernelSpec::exponentiated_quadratic(theta(static_cast<Eigen::Index>(*off + k)))
               : KernelSpec::brownian();
  };
  std::vector<double> sigma(n_sigma_task_);
  for (std::size_t k = 0; k < n_sigma_task_; ++k) sigma[k] = theta(static_cast<Eigen::Index>(*sigma_task_ + k));
  std::vector<KernelSpec> kernels;
  const std::size_t nk = ell_task_ ? n_ell_task_ : 1;
  for (std::size_t k = 0; k < nk; ++k) kernels.push_back(kernel_at(ell_task_, k));

  switch (kind_) {
    case StructureKind::Independent:
      return CovStructure::independent(std::move(kernels), std::move(sigma));
    case StructureKind::Exchangeable:
      return CovStructure::exchangeable(kernel_at(ell_mu_, 0), kernels[0],
                                        theta(static_cast<Eigen::Index>(*sigma_mu_)), sigma[0]);
    case StructureKind::MultipleExchangeable:
      return CovStructure::multiple_exchangeable(kernel_at(ell_mu_, 0), std::move(kernels),
                                                 theta(static_cast<Eigen::Index>(*sigma_mu_)),
                                                 std::move(sigma));
  }
  throw ConfigError("unknown structure");
}

void TransmissionBlocks::add_gradient(const CovParamGradient& g, VectorXd& grad) const {
  if (sigma_mu_) grad(static_cast<Eigen::Index>(*sigma_mu_)) += g.sigma_mu;
  if (ell_mu_) grad(static_cast<Eigen::Index>(*ell_mu_)) += g.mean_lengthscale;
  for (std::size_t k = 0; k < n_sigma_task_ && k < g.sigma_task.size(); ++k) {
    grad(static_cast<Eigen::Index>(*sigma_task_ + k)) += g.sigma_task[k];
  }
  if (ell_task_) {
    for (std::size_t k = 0; k < n_ell_task_ && k < g.task_lengthscale.size(); ++k) {
      grad(static_cast<Eigen::Index>(*ell_task_ + k)) += g.task_lengthscale[k];
    }
  }
}

std::vector<std::string> TransmissionBlocks::rho_names() const {
  switch (kind_) {
    case StructureKind::Independent:
      return {};
    case StructureKind::Exchangeable:
      return {"rho"};
    case StructureKind::MultipleExchangeable: {
      std::vector<std::string> names;
      for (std::size_t i = 0; i < p_; ++i) names.push_back("rho[" + std::to_string(i + 1) + "]");
      return names;
    }
  }
  return {};
}

VectorXd TransmissionBlocks::rho(const VectorXd& theta) const {
  if (kind_ == StructureKind::Independent) return {};
  const double smu = theta(static_cast<Eigen::Index>(*sigma_mu_));
  VectorXd out(static_cast<Eigen::Index>(n_sigma_task_));
  for (std::size_t k = 0; k < n_sigma_task_; ++k) {
    out(static_cast<Eigen::Index>(k)) =
        intra_class_rho(smu, theta(static_cast<Eigen::Index>(*sigma_task_ + k)));
  }
  return out;
}

LatentPathBuilder::LatentPathBuilder(StructureKind kind, TimeGrid grid, std::size_t p)
    : kind_(kind), grid_(std::move(grid)), p_(p) {
  if (p == 0) throw ConfigError("latent paths need at least one task");
}

std::size_t LatentPathBuilder::latent_dim() const noexcept {
  const std::size_t n = grid_.size();
  return (kind_ == StructureKind::Independent ? 0 : n) + p_ * n;
}

MatrixXd LatentPathBuilder::factor(const KernelSpec& k) const {
  MatrixXd c = gram(k, grid_);
  if (k.family() == KernelFamily::EQ) c.diagonal().array() += kDefaultJitter;
  return cholesky_with_jitter(c).lower;
}

MatrixXd LatentPathBuilder::factor_derivative(const KernelSpec& k, const MatrixXd& l) const {
  const auto t = grid_.times();
  const auto n = static_cast<Eigen::Index>(t.size());
  MatrixXd dc(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) dc(i, j) = k.d_lengthscale(t[i], t[j]);
  // dL = L Phi(L^-1 dC L^-T), Phi keeps the lower triangle and halves the diagonal.
  const auto lower = l.triangularView<Eigen::Lower>();
  MatrixXd a = lower.solve(dc);
  a = lower.solve(a.transpose()).transpose();
  MatrixXd phi = a.triangularView<Eigen::StrictlyLower>();
  phi.diagonal() = 0.5 * a.diagonal();
  return l * phi;
}

MatrixXd LatentPathBuilder::evaluate(const CovStructure& s, std::span<const double> z,
                                     Workspace& ws) const {
  const auto n = static_cast<Eigen::Index>(grid_.size());
  const auto p = static_cast<Eigen::Index>(p_);
  if (z.size() != latent_dim()) throw ConfigError("latent coordinate count mismatch");
  Eigen::Map<const VectorXd> zv(z.data(), static_cast<Eigen::Index>(z.size()));
  Eigen::Index off = 0;
  ws.mean_unit = MatrixXd::Zero(1, n);
  if (s.has_mean_process()) {
    ws.mean_factor = factor(*s.mean_kernel());
    ws.mean_unit = (ws.mean_factor * zv.segment(0, n)).transpose();
    off = n;
  }
  ws.task_factors.clear();
  if (s.shared_task_kernel()) {
    ws.task_factors.push_back(factor(s.task_kernel(0)));
  } else {
    for (std::size_t i = 0; i < p_; ++i) ws.task_factors.push_back(factor(s.task_kernel(i)));
  }
  ws.task_unit.resize(p, n);
  MatrixXd paths(p, n);
  const double smu = s.sigma_mu();
  for (Eigen::Index i = 0; i < p; ++i) {
    const auto& l = ws.task_factors[s.shared_task_kernel() ? 0 : static_cast<std::size_t>(i)];
    ws.task_unit.row(i) = (l * zv.segment(off + i * n, n)).transpose();
    paths.row(i) = smu * ws.mean_unit + s.task_sigma(static_cast<std::size_t>(i)) * ws.task_unit.row(i);
  }
  return paths;
}

void LatentPathBuilder::adjoint(const CovStructure& s, std::span<const double> z,
                                const Workspace& ws, const MatrixXd& path_bar,
                                CovParamGradient& g, std::span<double> z_bar) const {
  const auto n = static_cast<Eigen::Index>(grid_.size());
  const auto p = static_cast<Eigen::Index>(p_);
  Eigen::Map<const VectorXd> zv(z.data(), static_cast<Eigen::Index>(z.size()));
  Eigen::Map<VectorXd> zb(z_bar.data(), static_cast<Eigen::Index>(z_bar.size()));
  if (g.sigma_task.size() != s.variances().sigma_task.size()) {
    g.sigma_task.assign(s.variances().sigma_task.size(), 0.0);
  }
  if (g.task_lengthscale.size() != s.task_kernels().size()) {
    g.task_lengthscale.assign(s.task_kernels().size(), 0.0);
  }

  Eigen::Index off = 0;
  if (s.has_mean_process()) {
    const VectorXd mbar = path_bar.colwise().sum().transpose();
    const double smu = s.sigma_mu();
    g.sigma_mu += mbar.dot(ws.mean_unit.row(0).transpose());
    zb.segment(0, n) += smu * (ws.mean_factor.transpose() * mbar);
    if (s.mean_kernel()->family() == KernelFamily::EQ) {
      const MatrixXd dl = factor_derivative(*s.mean_kernel(), ws.mean_factor);
      g.mean_lengthscale += smu * mbar.dot(dl * zv.segment(0, n));
    }
    off = n;
  }

  std::vector<MatrixXd> dls;
  for (std::size_t k = 0; k < s.task_kernels().size(); ++k) {
    if (s.task_kernels()[k].family() == KernelFamily::EQ) {
      dls.push_back(factor_derivative(s.task_kernels()[k], ws.task_factors[k]));
    }
  }
  const bool shared_sigma = s.shared_task_sigma();
  const bool shared_kernel = s.shared_task_kernel();
  for (Eigen::Index i = 0; i < p; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const VectorXd dbar = path_bar.row(i).transpose();
    const double si = s.task_sigma(ui);
    const std::size_t kidx = shared_kernel ? 0 : ui;
    g.sigma_task[shared_sigma ? 0 : ui] += dbar.dot(ws.task_unit.row(i).transpose());
    zb.segment(off + i * n, n) += si * (ws.task_factors[kidx].transpose() * dbar);
    if (!dls.empty()) {
      g.task_lengthscale[kidx] += si * dbar.dot(dls[kidx] * zv.segment(off + i * n, n));
    }
  }
}

VectorXd LatentPathBuilder::mean_path(const CovStructure& s, const Workspace& ws) const {
  if (!s.has_mean_process()) return {};
  return s.sigma_mu() * ws.mean_unit.row(0).transpose();
}

MatrixXd LatentPathBuilder::extend(const CovStructure& s, const Workspace& ws,
                                   std::span<const double> future, std::mt19937_64& rng) const {
  const auto m = static_cast<Eigen::Index>(future.size());
  const auto p = static_cast<Eigen::Index>(p_);
  MatrixXd out = MatrixXd::Zero(p, m);
  if (m == 0) return out;
  for (double f : future) {
    if (!(f > grid_.times().back())) throw ConfigError("extension times must lie after the latent grid");
  }
  const auto past = grid_.times();

  // Conditional draw of a unit-scale component given its values L z on the grid.
  auto extend_unit = [&](const KernelSpec& k, const MatrixXd& l, const VectorXd& unit) {
    const double jitter = k.family() == KernelFamily::EQ ? kDefaultJitter : 0.0;
    const MatrixXd kfp = gram(k, future, past);
    MatrixXd kff = gram(k, future, future);
    kff.diagonal().array() += jitter;
    const auto lower = l.triangularView<Eigen::Lower>();
    const MatrixXd v = lower.solve(kfp.transpose());
    const VectorXd w = lower.solve(unit);
    GaussianDist cond{v.transpose() * w, symmetrize(kff - v.transpose() * v)};
    return VectorXd(sample_gaussian(cond, 1, rng).row(0).transpose());
  };

  VectorXd mean_future = VectorXd::Zero(m);
  if (s.has_mean_process()) {
    mean_future = s.sigma_mu() * extend_unit(*s.mean_kernel(), ws.mean_factor, ws.mean_unit.row(0).transpose());
  }
  for (Eigen::Index i = 0; i < p; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const std::size_t kidx = s.shared_task_kernel() ? 0 : ui;
    const VectorXd dev = extend_unit(s.task_kernel(ui), ws.task_factors[kidx], ws.task_unit.row(i).transpose());
    out.row(i) = (mean_future + s.task_sigma(ui) * dev).transpose();
  }
  return out;
}

}  // namespace xgp
