#pragma once

// Kernel evaluation and assembly of single-task and multi-task covariance
// matrices for the exchangeable hierarchical construction
//
//   x_i(t) = mu(t) + D_i(t),  mu ~ GP(0, s_mu^2 k_mu),  D_i ~ GP(0, s_i^2 k_i)
//
// Stacked vectors are task-major: all times of task 0, then task 1, ...

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace xgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class KernelFamily { BM, EQ };

// Brownian-motion kernel min(t, t2); both times must be nonnegative.
double bm_kernel(double t, double t2);

// Exponentiated quadratic exp(-|t - t2|^2 / (2 l^2)).
//
// Some texts write the squared exponential as exp(-(t - t2)^2 / l'); the two
// forms are the same family with l' = 2 l^2.
double eq_kernel(double t, double t2, double lengthscale);

class KernelSpec {
 public:
  static KernelSpec brownian() { return KernelSpec(KernelFamily::BM, std::nullopt); }
  static KernelSpec exponentiated_quadratic(double lengthscale);

  KernelFamily family() const noexcept { return family_; }
  std::optional<double> lengthscale() const noexcept { return lengthscale_; }

  double operator()(double t, double t2) const;
  // Partial derivative of the kernel value with respect to the lengthscale;
  // zero for BM.
  double d_lengthscale(double t, double t2) const;

 private:
  KernelSpec(KernelFamily family, std::optional<double> lengthscale)
      : family_(family), lengthscale_(lengthscale) {}

  KernelFamily family_;
  std::optional<double> lengthscale_;
};

class TimeGrid {
 public:
  // Throws ConfigError unless `times` is nonempty, finite and strictly
  // increasing.
  explicit TimeGrid(std::vector<double> times);
  static TimeGrid regular(std::size_t n, double start = 1.0, double step = 1.0);

  std::span<const double> times() const noexcept { return times_; }
  double operator[](std::size_t i) const { return times_[i]; }
  std::size_t size() const noexcept { return times_.size(); }
  bool equidistant() const noexcept { return equidistant_; }

 private:
  std::vector<double> times_;
  bool equidistant_ = true;
};

MatrixXd gram(const KernelSpec& kernel, const TimeGrid& grid);
MatrixXd gram(const KernelSpec& kernel, std::span<const double> a, std::span<const double> b);

enum class StructureKind { Independent, Exchangeable, MultipleExchangeable };

struct VarianceParams {
  double sigma_mu = 0.0;
  // One shared value, or one value per task.
  std::vector<double> sigma_task;
};

// Cross-task covariance structure. Independent has no mean process.
// Exchangeable shares one task scale; MultipleExchangeable has one per task.
// task_kernels holds either one shared kernel or one kernel per task.
class CovStructure {
 public:
  static CovStructure independent(std::vector<KernelSpec> task_kernels,
                                  std::vector<double> sigma_task);
  static CovStructure exchangeable(KernelSpec mean_kernel, KernelSpec task_kernel,
                                   double sigma_mu, double sigma_x);
  static CovStructure multiple_exchangeable(KernelSpec mean_kernel,
                                            std::vector<KernelSpec> task_kernels,
                                            double sigma_mu, std::vector<double> sigma_task);

  StructureKind kind() const noexcept { return kind_; }
  bool has_mean_process() const noexcept { return kind_ != StructureKind::Independent; }
  const std::optional<KernelSpec>& mean_kernel() const noexcept { return mean_kernel_; }
  const std::vector<KernelSpec>& task_kernels() const noexcept { return task_kernels_; }
  const VarianceParams& variances() const noexcept { return variances_; }

  double sigma_mu() const noexcept { return has_mean_process() ? variances_.sigma_mu : 0.0; }
  // Throws ConfigError for per-task parameters of a task the structure does
  // not know about.
  double task_sigma(std::size_t task) const;
  const KernelSpec& task_kernel(std::size_t task) const;
  bool shared_task_sigma() const noexcept { return variances_.sigma_task.size() == 1; }
  bool shared_task_kernel() const noexcept { return task_kernels_.size() == 1; }

  // Checks that per-task vectors are compatible with `p` tasks.
  void validate(std::size_t p) const;

 private:
  CovStructure() = default;

  StructureKind kind_ = StructureKind::Independent;
  std::optional<KernelSpec> mean_kernel_;
  std::vector<KernelSpec> task_kernels_;
  VarianceParams variances_;
};

struct TaskPoint {
  std::size_t task = 0;
  double time = 0.0;
};

double multitask_kernel(std::size_t i, std::size_t j, double t, double t2,
                        const CovStructure& structure);

MatrixXd multitask_cov(const CovStructure& structure, std::span<const TaskPoint> a,
                       std::span<const TaskPoint> b);

// Task-major points for p tasks observed on the same grid.
std::vector<TaskPoint> stacked_points(const TimeGrid& grid, std::size_t p);

inline constexpr std::size_t kDefaultMaxJointDim = 20000;

// (n p) x (n p) joint covariance. Throws ConfigError when n p > max_dim.
MatrixXd assemble_joint_cov(const CovStructure& structure, const TimeGrid& grid, std::size_t p,
                            std::size_t max_dim = kDefaultMaxJointDim);

// p x p covariance of one increment of length `step` of the BM-driven
// process: s_mu^2 J + diag(s_i^2), times step. Requires BM kernels.
MatrixXd assemble_increment_cov(const CovStructure& structure, std::size_t p, double step);

// Intra-class correlation s_x^2 / (s_mu^2 + s_x^2).
double intra_class_rho(double sigma_mu, double sigma_x);

}  // namespace xgp
