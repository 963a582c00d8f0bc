#include <algorithm>
#include <cmath>

#include "xgp/error.hpp"
#include "xgp/models.hpp"

namespace xgp {

ChikvModel::ChikvModel(ModelSpec spec, ChikvData data)
    : Model(std::move(spec)), data_(std::move(data)) {
  const auto s = data_.config.islands();
  const auto t = data_.weeks();
  if (t == 0) throw DataError("incidence has no weeks");
  if (static_cast<std::size_t>(data_.incidence.rows()) != s) {
    throw DataError("incidence rows must match the number of islands");
  }
  if (!data_.incidence.allFinite() || (data_.incidence.array() < 0.0).any()) {
    throw DataError("incidence must be finite nonnegative counts");
  }
  data_.config.validate(t);
  exposure_ = epi::chikv_exposure(data_.incidence, data_.config);
  susceptible_ = epi::chikv_susceptible_fraction(data_.incidence, data_.config);
  for (Eigen::Index t = 0; t < exposure_.cols(); ++t)
    for (Eigen::Index i = 0; i < exposure_.rows(); ++i)
      if (exposure_(i, t) * susceptible_(i, t) <= 0.0 && data_.incidence(i, t) > 0.0) {
        const auto u = static_cast<std::size_t>(i);
        const std::string id = u < data_.island_ids.size() ? data_.island_ids[u] : std::to_string(u + 1);
        throw DataError("island " + id + " has cases in week " +
                        std::to_string(t + 1) +
                        " but zero exposure or susceptibles; set a positive exposure_floor");
      }

  const auto& pr = spec_.priors;
  const Prior unit = Prior::normal(0.0, 1.0);
  if (spec_.variant == Variant::Baseline) {
    mu_b_ = layout_.add("mu_B", 1, Transform::Identity, pr.location);
    sigma_b_ = layout_.add("sigma_B", 1, Transform::Log, pr.sigma);
  } else {
    blocks_.emplace(spec_.variant, s, layout_, pr);
  }
  coef_ = layout_.add("log_beta_P", epi::kPrecipCoefficients, Transform::Identity, pr.coefficient);
  phi_ = layout_.add("phi_O", 1, Transform::Log, pr.overdispersion);
  if (spec_.variant == Variant::Baseline) {
    z_ = layout_.add("z_b", s, Transform::Identity, unit, true);
  } else {
    x0_ = layout_.add("x0", s, Transform::Identity, pr.location);
    builder_.emplace(blocks_->kind(), TimeGrid::regular(t), s);
    z_ = layout_.dim();
    if (blocks_->kind() != StructureKind::Independent) layout_.add("z_mu", t, Transform::Identity, unit, true);
    layout_.add("z", s * t, Transform::Identity, unit, true);
  }
}

MatrixXd ChikvModel::latent_x(const VectorXd& theta, LatentPathBuilder::Workspace& ws) const {
  const auto s = static_cast<Eigen::Index>(data_.config.islands());
  const auto t = static_cast<Eigen::Index>(data_.weeks());
  if (!builder_) {
    const VectorXd b = theta(static_cast<Eigen::Index>(mu_b_)) +
                       theta(static_cast<Eigen::Index>(sigma_b_)) *
                           theta.segment(static_cast<Eigen::Index>(z_), s).array();
    return b.replicate(1, t);
  }
  const auto st = blocks_->structure(theta);
  MatrixXd x = builder_->evaluate(st, {theta.data() + z_, builder_->latent_dim()}, ws);
  x.colwise() += theta.segment(static_cast<Eigen::Index>(x0_), s);
  return x;
}

MatrixXd ChikvModel::latent_x(const VectorXd& theta) const {
  LatentPathBuilder::Workspace ws;
  return latent_x(theta, ws);
}

MatrixXd ChikvModel::means(const VectorXd& theta, const MatrixXd& x) const {
  const VectorXd coef = theta.segment(static_cast<Eigen::Index>(coef_), epi::kPrecipCoefficients);
  const MatrixXd log_beta = x + epi::chikv_covariate_effect(data_.config, coef, data_.weeks());
  return log_beta.array().exp().matrix().cwiseProduct(exposure_).cwiseProduct(susceptible_);
}

double ChikvModel::log_likelihood(const VectorXd& theta, VectorXd& grad) const {
  LatentPathBuilder::Workspace ws;
  const MatrixXd x = latent_x(theta, ws);
  const MatrixXd d = means(theta, x);
  const double phi = theta(static_cast<Eigen::Index>(phi_));
  MatrixXd lb_bar = MatrixXd::Zero(d.rows(), d.cols());
  double ll = 0.0;
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      const auto term = epi::negbin_logpmf_grad(data_.incidence(i, j), d(i, j), phi);
      ll += term.value;
      lb_bar(i, j) = term.d_mean * d(i, j);
      grad(static_cast<Eigen::Index>(phi_)) += term.d_phi;
    }
  }
  if (!std::isfinite(ll)) return ll;

  for (int l = 0; l < epi::kPrecipCoefficients; ++l) {
    const VectorXd e = VectorXd::Unit(epi::kPrecipCoefficients, l);
    grad(static_cast<Eigen::Index>(coef_) + l) +=
        lb_bar.cwiseProduct(epi::chikv_covariate_effect(data_.config, e, data_.weeks())).sum();
  }
  const VectorXd row = lb_bar.rowwise().sum();
  const auto s = row.size();
  if (!builder_) {
    const double sb = theta(static_cast<Eigen::Index>(sigma_b_));
    const auto z = theta.segment(static_cast<Eigen::Index>(z_), s);
    grad(static_cast<Eigen::Index>(mu_b_)) += row.sum();
    grad(static_cast<Eigen::Index>(sigma_b_)) += row.dot(z);
    grad.segment(static_cast<Eigen::Index>(z_), s) += sb * row;
    return ll;
  }
  grad.segment(static_cast<Eigen::Index>(x0_), s) += row;
  CovParamGradient g;
  const auto st = blocks_->structure(theta);
  builder_->adjoint(st, {theta.data() + z_, builder_->latent_dim()}, ws, lb_bar, g,
                    {grad.data() + z_, builder_->latent_dim()});
  blocks_->add_gradient(g, grad);
  return ll;
}

std::vector<std::string> ChikvModel::observation_ids() const {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < data_.island_ids.size(); ++i)
    for (std::size_t t = 0; t < data_.weeks(); ++t) ids.push_back(data_.island_ids[i] + "@" + std::to_string(t + 1));
  return ids;
}

VectorXd ChikvModel::pointwise_loglik(const VectorXd& u) const {
  const VectorXd theta = constrain(u);
  const MatrixXd d = means(theta, latent_x(theta));
  const double phi = theta(static_cast<Eigen::Index>(phi_));
  VectorXd out(d.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 0; j < d.cols(); ++j) out(k++) = epi::negbin_logpmf(data_.incidence(i, j), d(i, j), phi);
  return out;
}

std::vector<LatentQuantity> ChikvModel::latent_quantities(const VectorXd& u) const {
  const VectorXd theta = constrain(u);
  const MatrixXd x = latent_x(theta);
  std::vector<double> weeks(data_.weeks());
  for (std::size_t t = 0; t < weeks.size(); ++t) weeks[t] = static_cast<double>(t + 1);
  return {{"x", data_.island_ids, weeks, x},
          {"R_eff", data_.island_ids, weeks, epi::chikv_r_eff(x, data_.incidence, data_.config)}};
}

VectorXd ChikvModel::forecast(const VectorXd& u, std::span<const TaskPoint> targets,
                              std::mt19937_64& rng) const {
  if (targets.empty()) return {};
  const auto t_obs = data_.weeks();
  const auto s = static_cast<Eigen::Index>(data_.config.islands());
  double last = 0.0;
  for (const auto& pt : targets) {
    if (pt.time <= static_cast<double>(t_obs) || pt.time != std::floor(pt.time)) {
      throw ConfigError("forecast targets must be whole weeks after the last observed week");
    }
    if (pt.task >= static_cast<std::size_t>(s)) throw ConfigError("forecast target names an unknown island");
    last = std::max(last, pt.time);
  }
  const auto horizon = static_cast<std::size_t>(last) - t_obs;
  if (data_.config.covered_weeks() < t_obs + horizon) {
    throw DataError("precipitation covers " + std::to_string(data_.config.covered_weeks()) +
                    " weeks but the forecast needs " + std::to_string(t_obs + horizon));
  }

  const VectorXd theta = constrain(u);
  LatentPathBuilder::Workspace ws;
  const MatrixXd x = latent_x(theta, ws);
  MatrixXd x_future;
  if (!builder_) {
    x_future = x.col(0).replicate(1, static_cast<Eigen::Index>(horizon));
  } else {
    std::vector<double> times(horizon);
    for (std::size_t h = 0; h < horizon; ++h) times[h] = static_cast<double>(t_obs + h + 1);
    x_future = builder_->extend(blocks_->structure(theta), ws, times, rng);
    x_future.colwise() += theta.segment(static_cast<Eigen::Index>(x0_), s);
  }
  const VectorXd coef = theta.segment(static_cast<Eigen::Index>(coef_), epi::kPrecipCoefficients);
  const MatrixXd log_beta =
      x_future + epi::chikv_covariate_effect(data_.config, coef, horizon, t_obs + 1);
  const double phi = theta(static_cast<Eigen::Index>(phi_));

  MatrixXd sim(s, static_cast<Eigen::Index>(horizon));
  VectorXd prev = data_.incidence.col(static_cast<Eigen::Index>(t_obs) - 1);
  VectorXd cumulative = data_.incidence.rowwise().sum();
  for (Eigen::Index h = 0; h < sim.cols(); ++h) {
    for (Eigen::Index i = 0; i < s; ++i) {
      const double z = std::clamp(1.0 - cumulative(i) / data_.config.population(i), 0.0, 1.0);
      const double d = std::exp(log_beta(i, h)) * std::max(prev(i), data_.config.exposure_floor) * z;
      if (!std::isfinite(d)) throw NumericalError("simulated expected incidence is not finite");
      sim(i, h) = epi::negbin_sample(d, phi, rng);
    }
    cumulative += sim.col(h);
    prev = sim.col(h);
  }
  VectorXd out(static_cast<Eigen::Index>(targets.size()));
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto h = static_cast<Eigen::Index>(targets[k].time) - static_cast<Eigen::Index>(t_obs) - 1;
    out(static_cast<Eigen::Index>(k)) = sim(static_cast<Eigen::Index>(targets[k].task), h);
  }
  return out;
}

std::vector<std::string> ChikvModel::derived_names() const {
  return blocks_ ? blocks_->rho_names() : std::vector<std::string>{};
}

VectorXd ChikvModel::derived(const VectorXd& theta) const {
  return blocks_ ? blocks_->rho(theta) : VectorXd();
}

}  // namespace xgp
