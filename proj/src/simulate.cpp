#include "xgp/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xgp/error.hpp"
#include "xgp/latent_path.hpp"
#include "xgp/linalg.hpp"

namespace xgp {

MatrixXd simulate_latent_paths(const CovStructure& s, const TimeGrid& grid, std::size_t p,
                               const VectorXd& x0, std::mt19937_64& rng) {
  s.validate(p);
  if (x0.size() != static_cast<Eigen::Index>(p)) throw ConfigError("x0 needs one value per task");
  LatentPathBuilder builder(s.kind(), grid, p);
  const VectorXd z = standard_normal_vector(builder.latent_dim(), rng);
  LatentPathBuilder::Workspace ws;
  MatrixXd x = builder.evaluate(s, {z.data(), static_cast<std::size_t>(z.size())}, ws);
  x.colwise() += x0;
  return x;
}

TaskSeries simulate_gaussian(const CovStructure& s, const TimeGrid& grid, std::size_t p,
                             double sigma_y, std::mt19937_64& rng, MatrixXd* latent) {
  if (!(sigma_y >= 0.0)) throw ConfigError("sigma_y must be nonnegative");
  const MatrixXd x = simulate_latent_paths(s, grid, p, VectorXd::Zero(static_cast<Eigen::Index>(p)), rng);
  TaskSeries out;
  for (std::size_t i = 0; i < p; ++i) out.task_ids.push_back("task" + std::to_string(i + 1));
  out.times.assign(grid.times().begin(), grid.times().end());
  std::normal_distribution<double> noise(0.0, 1.0);
  out.values = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.values(i, j) += sigma_y * noise(rng);
  out.observed.setConstant(x.rows(), x.cols(), true);
  if (latent) *latent = x;
  return out;
}

MatrixXd simulate_chikv_incidence(const MatrixXd& x, const epi::ChikvConfig& config, double phi,
                                  std::mt19937_64& rng) {
  const auto weeks = static_cast<std::size_t>(x.cols());
  config.validate(weeks);
  const MatrixXd log_beta = epi::chikv_log_beta(x, config);
  const auto s = x.rows();
  MatrixXd o(s, x.cols());
  VectorXd cumulative = VectorXd::Zero(s);
  for (Eigen::Index t = 0; t < x.cols(); ++t) {
    const VectorXd prev = t == 0 ? config.initial_exposure : VectorXd(o.col(t - 1));
    for (Eigen::Index i = 0; i < s; ++i) {
      const double z = std::clamp(1.0 - cumulative(i) / config.population(i), 0.0, 1.0);
      const double d = std::exp(log_beta(i, t)) * std::max(prev(i), config.exposure_floor) * z;
      if (!std::isfinite(d)) throw NumericalError("expected incidence overflowed at week " + std::to_string(t + 1));
      // Counts are capped by the remaining susceptibles.
      o(i, t) = std::min(epi::negbin_sample(d, phi, rng), std::floor(config.population(i) - cumulative(i)));
    }
    cumulative += o.col(t);
  }
  return o;
}

MatrixXd simulate_covid_deaths(const MatrixXd& x, const epi::RenewalConfig& config,
                               std::size_t days, double phi, std::mt19937_64& rng) {
  const MatrixXd beta = epi::expand_changepoints(
      x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); }), days, config.changepoint_stride);
  const MatrixXd d = epi::expected_deaths(epi::renewal_infections(beta, config), config);
  MatrixXd y(d.rows(), d.cols());
  for (Eigen::Index t = 0; t < d.cols(); ++t)
    for (Eigen::Index i = 0; i < d.rows(); ++i) y(i, t) = epi::negbin_sample(d(i, t), phi, rng);
  return y;
}

}  // namespace xgp
