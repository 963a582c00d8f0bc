#include "xgp/gp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "xgp/error.hpp"
#include "xgp/linalg.hpp"

namespace xgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_noise(ObservationNoise noise) {
  if (!(noise.sigma_y >= 0.0) || !std::isfinite(noise.sigma_y)) {
    throw ConfigError("observation noise must be finite and nonnegative");
  }
}

// Unit-variance kernel blocks evaluated once on the distinct time points.
struct UnitGrams {
  std::vector<Eigen::Index> slot;
  MatrixXd mean, mean_dl;
  std::vector<MatrixXd> task, task_dl;
};

MatrixXd unit_gram(const KernelSpec& k, const std::vector<double>& t, bool derivative) {
  const auto m = static_cast<Eigen::Index>(t.size());
  MatrixXd out(m, m);
  for (Eigen::Index c = 0; c < m; ++c)
    for (Eigen::Index r = c; r < m; ++r)
      out(r, c) = out(c, r) = derivative ? k.d_lengthscale(t[r], t[c]) : k(t[r], t[c]);
  return out;
}

UnitGrams unit_grams(const CovStructure& s, std::span<const TaskPoint> pts, bool derivatives) {
  std::vector<double> t;
  for (const auto& pt : pts) t.push_back(pt.time);
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  UnitGrams g;
  for (const auto& pt : pts)
    g.slot.push_back(std::lower_bound(t.begin(), t.end(), pt.time) - t.begin());
  if (s.has_mean_process()) {
    g.mean = unit_gram(*s.mean_kernel(), t, false);
    if (derivatives) g.mean_dl = unit_gram(*s.mean_kernel(), t, true);
  }
  for (const auto& k : s.task_kernels()) {
    g.task.push_back(unit_gram(k, t, false));
    if (derivatives) g.task_dl.push_back(unit_gram(k, t, true));
  }
  return g;
}

std::size_t kernel_slot(const CovStructure& s, std::size_t task) {
  return s.shared_task_kernel() ? 0 : task;
}

MatrixXd noisy_cov(const CovStructure& s, std::span<const TaskPoint> pts, ObservationNoise noise,
                   const UnitGrams& g) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  const double smu2 = s.has_mean_process() ? s.sigma_mu() * s.sigma_mu() : 0.0;
  MatrixXd k(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = c; r < n; ++r) {
      double v = smu2 > 0.0 ? smu2 * g.mean(g.slot[r], g.slot[c]) : 0.0;
      if (pts[r].task == pts[c].task) {
        const double si = s.task_sigma(pts[r].task);
        v += si * si * g.task[kernel_slot(s, pts[r].task)](g.slot[r], g.slot[c]);
      }
      k(r, c) = k(c, r) = v;
    }
  }
  k.diagonal().array() += noise.sigma_y * noise.sigma_y;
  return k;
}

MatrixXd noisy_cov(const CovStructure& s, std::span<const TaskPoint> pts, ObservationNoise noise) {
  return noisy_cov(s, pts, noise, unit_grams(s, pts, false));
}

MatrixXd cholesky_inverse(const MatrixXd& l) {
  const auto n = l.rows();
  MatrixXd inv = l.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(n, n));
  return inv.transpose() * inv;
}

}  // namespace

double log_marginal(const VectorXd& y, const CovStructure& structure,
                    std::span<const TaskPoint> points, ObservationNoise noise) {
  check_noise(noise);
  if (static_cast<std::size_t>(y.size()) != points.size()) {
    throw ConfigError("observation vector length does not match the number of points");
  }
  const auto chol = cholesky_with_jitter(noisy_cov(structure, points, noise));
  const VectorXd w = chol.lower.triangularView<Eigen::Lower>().solve(y);
  const double logdet = 2.0 * chol.lower.diagonal().array().log().sum();
  return -0.5 * (w.squaredNorm() + logdet + static_cast<double>(y.size()) * kLog2Pi);
}

VectorXd log_marginal_terms(const VectorXd& y, const CovStructure& structure,
                            std::span<const TaskPoint> points, ObservationNoise noise) {
  check_noise(noise);
  if (static_cast<std::size_t>(y.size()) != points.size()) {
    throw ConfigError("observation vector length does not match the number of points");
  }
  const auto chol = cholesky_with_jitter(noisy_cov(structure, points, noise));
  const VectorXd w = chol.lower.triangularView<Eigen::Lower>().solve(y);
  return -0.5 * (w.array().square() + kLog2Pi) - chol.lower.diagonal().array().log();
}

double log_marginal_y(const VectorXd& y, const CovStructure& structure, const TimeGrid& grid,
                      std::size_t p, ObservationNoise noise) {
  structure.validate(p);
  if (static_cast<std::size_t>(y.size()) != grid.size() * p) {
    throw ConfigError("length(y) must equal n * p");
  }
  const auto pts = stacked_points(grid, p);
  return log_marginal(y, structure, pts, noise);
}

MarginalResult log_marginal_with_gradient(const VectorXd& y, const CovStructure& structure,
                                          std::span<const TaskPoint> points,
                                          ObservationNoise noise) {
  check_noise(noise);
  const auto n = static_cast<Eigen::Index>(points.size());
  if (y.size() != n) throw ConfigError("observation vector length does not match the number of points");

  const UnitGrams grams = unit_grams(structure, points, true);
  const auto chol = cholesky_with_jitter(noisy_cov(structure, points, noise, grams));
  const auto& l = chol.lower;
  const VectorXd w = l.triangularView<Eigen::Lower>().solve(y);
  const VectorXd alpha = l.transpose().triangularView<Eigen::Upper>().solve(w);

  MarginalResult out;
  out.value = -0.5 * (w.squaredNorm() + 2.0 * l.diagonal().array().log().sum() +
                      static_cast<double>(n) * kLog2Pi);

  // d/dtheta = 0.5 tr((alpha alpha' - K^-1) dK/dtheta)
  const MatrixXd weight = alpha * alpha.transpose() - cholesky_inverse(l);

  auto& g = out.grad;
  g.sigma_task.assign(structure.variances().sigma_task.size(), 0.0);
  g.task_lengthscale.assign(structure.task_kernels().size(), 0.0);
  const double smu = structure.sigma_mu();
  const bool has_mean = structure.has_mean_process();
  const bool shared_sigma = structure.shared_task_sigma();

  // Each partial derivative is 0.5 * sum(W o dK/dtheta).
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto sc = grams.slot[c];
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto sr = grams.slot[r];
      const double w_rc = weight(r, c);
      if (has_mean) {
        g.sigma_mu += w_rc * grams.mean(sr, sc);
        g.mean_lengthscale += w_rc * grams.mean_dl(sr, sc);
      }
      const std::size_t task = points[r].task;
      if (task != points[c].task) continue;
      const double s = structure.task_sigma(task);
      const std::size_t ks = kernel_slot(structure, task);
      g.sigma_task[shared_sigma ? 0 : task] += s * w_rc * grams.task[ks](sr, sc);
      g.task_lengthscale[ks] += 0.5 * s * s * w_rc * grams.task_dl[ks](sr, sc);
    }
  }
  g.sigma_mu *= smu;
  g.mean_lengthscale *= 0.5 * smu * smu;
  g.sigma_y = weight.trace() * noise.sigma_y;
  return out;
}

GaussianDist condition_on_observations(const VectorXd& y, std::span<const TaskPoint> observed,
                                       std::span<const TaskPoint> targets,
                                       const CovStructure& structure, ObservationNoise noise,
                                       bool include_obs_noise) {
  check_noise(noise);
  if (static_cast<std::size_t>(y.size()) != observed.size()) {
    throw ConfigError("observation vector length does not match the number of points");
  }
  MatrixXd kss = symmetrize(multitask_cov(structure, targets, targets));
  if (observed.empty()) {
    if (include_obs_noise) kss.diagonal().array() += noise.sigma_y * noise.sigma_y;
    return {VectorXd::Zero(kss.rows()), kss};
  }
  const auto chol = cholesky_with_jitter(noisy_cov(structure, observed, noise));
  const auto lower = chol.lower.triangularView<Eigen::Lower>();
  const MatrixXd kso = multitask_cov(structure, targets, observed);
  // V = L^-1 K_os, so that K_so (K + s^2 I)^-1 K_os = V' V.
  const MatrixXd v = lower.solve(kso.transpose());
  const VectorXd w = lower.solve(y);

  GaussianDist out;
  out.mean = v.transpose() * w;
  out.cov = symmetrize(kss - v.transpose() * v);
  if (include_obs_noise) out.cov.diagonal().array() += noise.sigma_y * noise.sigma_y;
  return out;
}

GaussianDist posterior_x(const VectorXd& y, const CovStructure& structure, const TimeGrid& grid,
                         std::size_t p, ObservationNoise noise) {
  structure.validate(p);
  if (static_cast<std::size_t>(y.size()) != grid.size() * p) {
    throw ConfigError("length(y) must equal n * p");
  }
  const auto pts = stacked_points(grid, p);
  return condition_on_observations(y, pts, pts, structure, noise, false);
}

GaussianDist posterior_m(const VectorXd& x, const CovStructure& structure, const TimeGrid& grid,
                         std::size_t p) {
  structure.validate(p);
  if (!structure.has_mean_process()) {
    throw ConfigError("the independent structure has no mean process");
  }
  const auto n = static_cast<Eigen::Index>(grid.size());
  if (x.size() != n * static_cast<Eigen::Index>(p)) throw ConfigError("length(x) must equal n * p");

  auto inverse_of = [&](const MatrixXd& cov, const char* what) {
    try {
      return cholesky_inverse(cholesky_with_jitter(symmetrize(cov)).lower);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string("singular ") + what + ": " + e.what(),
                           e.attempted_jitter());
    }
  };

  const double smu = structure.sigma_mu();
  const MatrixXd mean_prec = inverse_of(smu * smu * gram(*structure.mean_kernel(), grid), "mean-process covariance");
  MatrixXd precision = mean_prec;
  VectorXd rhs = VectorXd::Zero(n);

  MatrixXd shared_task_prec;
  const bool shared = structure.shared_task_sigma() && structure.shared_task_kernel();
  if (shared) {
    const double s = structure.task_sigma(0);
    shared_task_prec = inverse_of(s * s * gram(structure.task_kernel(0), grid), "task covariance");
  }
  for (std::size_t i = 0; i < p; ++i) {
    MatrixXd task_prec;
    if (shared) {
      task_prec = shared_task_prec;
    } else {
      const double s = structure.task_sigma(i);
      task_prec = inverse_of(s * s * gram(structure.task_kernel(i), grid), "task covariance");
    }
    precision += task_prec;
    rhs += task_prec * x.segment(static_cast<Eigen::Index>(i) * n, n);
  }
  const auto chol = cholesky_with_jitter(symmetrize(precision));
  GaussianDist out;
  out.cov = symmetrize(cholesky_inverse(chol.lower));
  out.mean = out.cov * rhs;
  return out;
}

GaussianDist predictive(const TimeGrid& target_grid, std::span<const std::size_t> target_tasks,
                        const VectorXd& y, const CovStructure& structure, const TimeGrid& grid,
                        std::size_t p, ObservationNoise noise, bool include_obs_noise) {
  structure.validate(p);
  if (static_cast<std::size_t>(y.size()) != grid.size() * p) {
    throw ConfigError("length(y) must equal n * p");
  }
  const auto observed = stacked_points(grid, p);
  std::vector<TaskPoint> targets;
  for (std::size_t task : target_tasks)
    for (double t : target_grid.times()) targets.push_back({task, t});
  return condition_on_observations(y, observed, targets, structure, noise, include_obs_noise);
}

MatrixXd sample_gaussian(const GaussianDist& dist, std::size_t count, std::mt19937_64& rng) {
  if (count < 1) throw ConfigError("sample count must be at least 1");
  const auto dim = dist.mean.size();
  if (dist.cov.rows() != dim || dist.cov.cols() != dim) {
    throw ConfigError("Gaussian mean and covariance dimensions disagree");
  }
  const MatrixXd factor = sampling_factor(dist.cov);
  MatrixXd draws(static_cast<Eigen::Index>(count), dim);
  for (std::size_t k = 0; k < count; ++k) {
    const VectorXd z = standard_normal_vector(static_cast<std::size_t>(dim), rng);
    draws.row(static_cast<Eigen::Index>(k)) = (dist.mean + factor * z).transpose();
  }
  return draws;
}

MatrixXd sample_gaussian(const GaussianDist& dist, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_gaussian(dist, count, rng);
}

}  // namespace xgp
