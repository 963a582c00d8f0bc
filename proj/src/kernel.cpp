#include "xgp/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "xgp/error.hpp"

namespace xgp {

double bm_kernel(double t, double t2) {
  if (!(t >= 0.0) || !(t2 >= 0.0)) {
    throw ConfigError("BM kernel requires nonnegative times, got (" + std::to_string(t) + ", " +
                      std::to_string(t2) + ")");
  }
  return std::min(t, t2);
}

double eq_kernel(double t, double t2, double lengthscale) {
  if (!(lengthscale > 0.0)) {
    throw ConfigError("EQ kernel requires a positive lengthscale, got " +
                      std::to_string(lengthscale));
  }
  const double d = (t - t2) / lengthscale;
  return std::exp(-0.5 * d * d);
}

KernelSpec KernelSpec::exponentiated_quadratic(double lengthscale) {
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale)) {
    throw ConfigError("EQ lengthscale must be positive and finite, got " +
                      std::to_string(lengthscale));
  }
  return KernelSpec(KernelFamily::EQ, lengthscale);
}

double KernelSpec::operator()(double t, double t2) const {
  return family_ == KernelFamily::BM ? bm_kernel(t, t2) : eq_kernel(t, t2, *lengthscale_);
}

double KernelSpec::d_lengthscale(double t, double t2) const {
  if (family_ == KernelFamily::BM) return 0.0;
  const double l = *lengthscale_;
  const double d2 = (t - t2) * (t - t2);
  return eq_kernel(t, t2, l) * d2 / (l * l * l);
}

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
  if (times_.empty()) throw ConfigError("time grid must be nonempty");
  for (std::size_t i = 0; i < times_.size(); ++i) {
    if (!std::isfinite(times_[i])) throw ConfigError("time grid contains a non-finite value");
    if (i > 0 && !(times_[i] > times_[i - 1])) {
      std::ostringstream msg;
      msg << "time grid must be strictly increasing (index " << i << ": " << times_[i - 1]
          << " then " << times_[i] << ")";
      throw ConfigError(msg.str());
    }
  }
  if (times_.size() > 2) {
    const double h0 = times_[1] - times_[0];
    for (std::size_t i = 2; i < times_.size(); ++i) {
      const double h = times_[i] - times_[i - 1];
      if (std::abs(h - h0) > 1e-12 * std::max(std::abs(h), std::abs(h0))) {
        equidistant_ = false;
        break;
      }
    }
  }
}

TimeGrid TimeGrid::regular(std::size_t n, double start, double step) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = start + step * static_cast<double>(i);
  return TimeGrid(std::move(t));
}

MatrixXd gram(const KernelSpec& kernel, std::span<const double> a, std::span<const double> b) {
  MatrixXd out(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out(i, j) = kernel(a[i], b[j]);
  return out;
}

MatrixXd gram(const KernelSpec& kernel, const TimeGrid& grid) {
  const auto t = grid.times();
  const auto n = static_cast<Eigen::Index>(t.size());
  MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = kernel(t[i], t[i]);
    for (Eigen::Index j = 0; j < i; ++j) out(i, j) = out(j, i) = kernel(t[i], t[j]);
  }
  return out;
}

namespace {

void check_sigmas(const std::vector<double>& sigmas) {
  if (sigmas.empty()) throw ConfigError("at least one task scale is required");
  for (double s : sigmas) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw ConfigError("task scales must be finite and nonnegative");
    }
  }
}

}  // namespace

CovStructure CovStructure::independent(std::vector<KernelSpec> task_kernels,
                                       std::vector<double> sigma_task) {
  check_sigmas(sigma_task);
  if (task_kernels.empty()) throw ConfigError("independent structure needs a task kernel");
  CovStructure s;
  s.kind_ = StructureKind::Independent;
  s.task_kernels_ = std::move(task_kernels);
  s.variances_ = {0.0, std::move(sigma_task)};
  return s;
}

CovStructure CovStructure::exchangeable(KernelSpec mean_kernel, KernelSpec task_kernel,
                                        double sigma_mu, double sigma_x) {
  check_sigmas({sigma_mu, sigma_x});
  CovStructure s;
  s.kind_ = StructureKind::Exchangeable;
  s.mean_kernel_ = mean_kernel;
  s.task_kernels_ = {task_kernel};
  s.variances_ = {sigma_mu, {sigma_x}};
  return s;
}

CovStructure CovStructure::multiple_exchangeable(KernelSpec mean_kernel,
                                                 std::vector<KernelSpec> task_kernels,
                                                 double sigma_mu,
                                                 std::vector<double> sigma_task) {
  check_sigmas(sigma_task);
  check_sigmas({sigma_mu});
  if (task_kernels.empty()) throw ConfigError("multiple-exchangeable structure needs a task kernel");
  CovStructure s;
  s.kind_ = StructureKind::MultipleExchangeable;
  s.mean_kernel_ = mean_kernel;
  s.task_kernels_ = std::move(task_kernels);
  s.variances_ = {sigma_mu, std::move(sigma_task)};
  return s;
}

double CovStructure::task_sigma(std::size_t task) const {
  const auto& s = variances_.sigma_task;
  if (s.size() == 1) return s[0];
  if (task >= s.size()) {
    throw ConfigError("task " + std::to_string(task) +
                      " has no scale parameter in this structure (unseen task)");
  }
  return s[task];
}

const KernelSpec& CovStructure::task_kernel(std::size_t task) const {
  if (task_kernels_.size() == 1) return task_kernels_[0];
  if (task >= task_kernels_.size()) {
    throw ConfigError("task " + std::to_string(task) +
                      " has no kernel in this structure (unseen task)");
  }
  return task_kernels_[task];
}

void CovStructure::validate(std::size_t p) const {
  if (p == 0) throw ConfigError("task count must be at least 1");
  const auto ns = variances_.sigma_task.size();
  if (ns != 1 && ns != p) {
    throw ConfigError("expected 1 or " + std::to_string(p) + " task scales, got " +
                      std::to_string(ns));
  }
  const auto nk = task_kernels_.size();
  if (nk != 1 && nk != p) {
    throw ConfigError("expected 1 or " + std::to_string(p) + " task kernels, got " +
                      std::to_string(nk));
  }
}

double multitask_kernel(std::size_t i, std::size_t j, double t, double t2,
                        const CovStructure& structure) {
  double value = 0.0;
  if (structure.has_mean_process()) {
    const double s = structure.sigma_mu();
    value += s * s * (*structure.mean_kernel())(t, t2);
  }
  if (i == j) {
    const double s = structure.task_sigma(i);
    value += s * s * structure.task_kernel(i)(t, t2);
  }
  return value;
}

MatrixXd multitask_cov(const CovStructure& structure, std::span<const TaskPoint> a,
                       std::span<const TaskPoint> b) {
  MatrixXd out(a.size(), b.size());
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < b.size(); ++c)
      out(r, c) = multitask_kernel(a[r].task, b[c].task, a[r].time, b[c].time, structure);
  return out;
}

std::vector<TaskPoint> stacked_points(const TimeGrid& grid, std::size_t p) {
  std::vector<TaskPoint> pts;
  pts.reserve(grid.size() * p);
  for (std::size_t i = 0; i < p; ++i)
    for (double t : grid.times()) pts.push_back({i, t});
  return pts;
}

MatrixXd assemble_joint_cov(const CovStructure& structure, const TimeGrid& grid, std::size_t p,
                            std::size_t max_dim) {
  structure.validate(p);
  if (grid.size() * p > max_dim) {
    throw ConfigError("joint covariance dimension " + std::to_string(grid.size() * p) +
                      " exceeds the cap of " + std::to_string(max_dim));
  }
  const auto pts = stacked_points(grid, p);
  MatrixXd k = multitask_cov(structure, pts, pts);
  return 0.5 * (k + k.transpose());
}

MatrixXd assemble_increment_cov(const CovStructure& structure, std::size_t p, double step) {
  if (!(step > 0.0)) throw ConfigError("increment step must be positive");
  structure.validate(p);
  auto is_bm = [](const KernelSpec& k) { return k.family() == KernelFamily::BM; };
  if ((structure.has_mean_process() && !is_bm(*structure.mean_kernel())) ||
      !std::all_of(structure.task_kernels().begin(), structure.task_kernels().end(), is_bm)) {
    throw ConfigError("increment covariance is defined for BM-driven structures only");
  }
  const double smu = structure.sigma_mu();
  MatrixXd q = MatrixXd::Constant(p, p, smu * smu);
  for (std::size_t i = 0; i < p; ++i) {
    const double s = structure.task_sigma(i);
    q(i, i) += s * s;
  }
  return q * step;
}

double intra_class_rho(double sigma_mu, double sigma_x) {
  const double a = sigma_mu * sigma_mu;
  const double b = sigma_x * sigma_x;
  if (!(a + b > 0.0)) throw ConfigError("intra-class correlation undefined when both scales are zero");
  return b / (a + b);
}

}  // namespace xgp
