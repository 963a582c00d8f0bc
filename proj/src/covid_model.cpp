#include <algorithm>
#include <cmath>

#include "xgp/error.hpp"
#include "xgp/models.hpp"

namespace xgp {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

MatrixXd logistic(const MatrixXd& x) { return x.unaryExpr([](double v) { return logistic(v); }); }

}  // namespace

MatrixXd expected_deaths_adjoint(const MatrixXd& deaths_bar, const epi::RenewalConfig& config) {
  const auto& h = config.inf_to_death;
  const Eigen::Index days = deaths_bar.cols();
  MatrixXd out = MatrixXd::Zero(deaths_bar.rows(), days);
  for (Eigen::Index s = 0; s < days; ++s) {
    for (Eigen::Index t = s + 1; t < days && t - s <= h.size(); ++t) {
      out.col(s) += deaths_bar.col(t) * h(t - s - 1);
    }
  }
  return config.ifr.asDiagonal() * out;
}

MatrixXd renewal_adjoint(const MatrixXd& beta, const epi::RenewalConfig& config,
                         const MatrixXd& infections, MatrixXd inf_bar, VectorXd& seed_bar) {
  const Eigen::Index a = beta.rows();
  const Eigen::Index days = beta.cols();
  const auto& g = config.gen_time;
  const auto& n = config.population;
  MatrixXd beta_bar = MatrixXd::Zero(a, days);

  // Cumulative infections before each day, and the infectious pressure.
  MatrixXd cumulative(a, days);
  VectorXd run = VectorXd::Zero(a);
  for (Eigen::Index t = 0; t < days; ++t) {
    cumulative.col(t) = run;
    run += infections.col(t);
  }

  // acc holds dF/d(cumulative) summed over later days; it flows to every
  // earlier infection count.
  VectorXd acc = VectorXd::Zero(a);
  VectorXd pressure(a), force_bar(a);
  for (Eigen::Index t = days - 1; t >= 0; --t) {
    const VectorXd ibar = inf_bar.col(t) + acc;
    if (t < config.seed_days) {
      seed_bar += ibar;
      continue;
    }
    for (Eigen::Index j = 0; j < a; ++j) {
      double sum = 0.0;
      for (Eigen::Index tau = std::max<Eigen::Index>(0, t - g.size()); tau < t; ++tau) {
        sum += infections(j, tau) * g(t - tau - 1);
      }
      pressure(j) = sum;
    }
    const VectorXd force = config.contact * pressure;
    VectorXd cum_bar = VectorXd::Zero(a);
    force_bar.setZero();
    for (Eigen::Index i = 0; i < a; ++i) {
      const double raw = 1.0 - cumulative(i, t) / n(i);
      const double s = std::clamp(raw, 0.0, 1.0);
      const double uncapped = s * beta(i, t) * force(i);
      double s_bar;
      if (uncapped <= s * n(i)) {
        beta_bar(i, t) += ibar(i) * s * force(i);
        force_bar(i) = ibar(i) * s * beta(i, t);
        s_bar = ibar(i) * beta(i, t) * force(i);
      } else {
        s_bar = ibar(i) * n(i);
      }
      if (raw > 0.0 && raw <= 1.0) cum_bar(i) = -s_bar / n(i);
    }
    acc += cum_bar;
    const VectorXd pressure_bar = config.contact.transpose() * force_bar;
    for (Eigen::Index tau = std::max<Eigen::Index>(0, t - g.size()); tau < t; ++tau) {
      inf_bar.col(tau) += pressure_bar * g(t - tau - 1);
    }
  }
  return beta_bar;
}

CovidModel::CovidModel(ModelSpec spec, CovidData data)
    : Model(std::move(spec)),
      data_(std::move(data)),
      k_(epi::changepoint_count(data_.days(), data_.config.changepoint_stride)),
      blocks_(spec_.variant, data_.config.groups(), layout_, spec_.priors) {
  const auto a = data_.config.groups();
  if (data_.days() == 0) throw DataError("death series has no days");
  if (static_cast<std::size_t>(data_.deaths.rows()) != a) {
    throw DataError("death rows must match the number of age groups");
  }
  if (!data_.deaths.allFinite() || (data_.deaths.array() < 0.0).any()) {
    throw DataError("deaths must be finite nonnegative counts");
  }
  if (data_.config.seed_infections.size() != static_cast<Eigen::Index>(a)) {
    data_.config.seed_infections = VectorXd::Ones(static_cast<Eigen::Index>(a));
  }
  data_.config.validate();

  const auto& pr = spec_.priors;
  const Prior unit = Prior::normal(0.0, 1.0);
  phi_ = layout_.add("phi_D", 1, Transform::Log, pr.overdispersion);
  seed_ = layout_.add("seed", a, Transform::Log, pr.seed);
  x0_ = layout_.add("x0", a, Transform::Identity, pr.location);
  builder_.emplace(blocks_.kind(), TimeGrid::regular(k_), a);
  z_ = layout_.dim();
  if (blocks_.kind() != StructureKind::Independent) layout_.add("z_mu", k_, Transform::Identity, unit, true);
  layout_.add("z", a * k_, Transform::Identity, unit, true);
}

epi::RenewalConfig CovidModel::config_for(const VectorXd& theta) const {
  epi::RenewalConfig c = data_.config;
  c.seed_infections = theta.segment(static_cast<Eigen::Index>(seed_), c.population.size());
  return c;
}

MatrixXd CovidModel::latent_x(const VectorXd& theta, LatentPathBuilder::Workspace& ws) const {
  const auto st = blocks_.structure(theta);
  MatrixXd x = builder_->evaluate(st, {theta.data() + z_, builder_->latent_dim()}, ws);
  x.colwise() += theta.segment(static_cast<Eigen::Index>(x0_), x.rows());
  return x;
}

CovidModel::Trajectory CovidModel::trajectory(const VectorXd& theta) const {
  LatentPathBuilder::Workspace ws;
  Trajectory tr;
  tr.x = latent_x(theta, ws);
  const auto cfg = config_for(theta);
  tr.beta = epi::expand_changepoints(logistic(tr.x), data_.days(), cfg.changepoint_stride);
  tr.infections = epi::renewal_infections(tr.beta, cfg);
  tr.deaths = epi::expected_deaths(tr.infections, cfg);
  return tr;
}

double CovidModel::log_likelihood(const VectorXd& theta, VectorXd& grad) const {
  LatentPathBuilder::Workspace ws;
  const MatrixXd x = latent_x(theta, ws);
  const auto cfg = config_for(theta);
  const MatrixXd bcp = logistic(x);
  const MatrixXd beta = epi::expand_changepoints(bcp, data_.days(), cfg.changepoint_stride);
  const MatrixXd inf = epi::renewal_infections(beta, cfg);
  const MatrixXd d = epi::expected_deaths(inf, cfg);

  const double phi = theta(static_cast<Eigen::Index>(phi_));
  MatrixXd d_bar(d.rows(), d.cols());
  double ll = 0.0;
  for (Eigen::Index t = 0; t < d.cols(); ++t) {
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      const auto term = epi::negbin_logpmf_grad(data_.deaths(i, t), d(i, t), phi);
      ll += term.value;
      d_bar(i, t) = term.d_mean;
      grad(static_cast<Eigen::Index>(phi_)) += term.d_phi;
    }
  }
  if (!std::isfinite(ll)) return ll;

  const auto a = x.rows();
  VectorXd seed_bar = VectorXd::Zero(a);
  const MatrixXd beta_bar = renewal_adjoint(beta, cfg, inf, expected_deaths_adjoint(d_bar, cfg), seed_bar);
  grad.segment(static_cast<Eigen::Index>(seed_), a) += seed_bar;

  MatrixXd x_bar = MatrixXd::Zero(a, x.cols());
  for (Eigen::Index t = 0; t < beta_bar.cols(); ++t) x_bar.col(t / cfg.changepoint_stride) += beta_bar.col(t);
  x_bar = x_bar.cwiseProduct(bcp.cwiseProduct((1.0 - bcp.array()).matrix()));

  grad.segment(static_cast<Eigen::Index>(x0_), a) += x_bar.rowwise().sum();
  CovParamGradient g;
  builder_->adjoint(blocks_.structure(theta), {theta.data() + z_, builder_->latent_dim()}, ws, x_bar,
                    g, {grad.data() + z_, builder_->latent_dim()});
  blocks_.add_gradient(g, grad);
  return ll;
}

std::vector<std::string> CovidModel::observation_ids() const {
  std::vector<std::string> ids;
  for (const auto& group : data_.group_ids)
    for (std::size_t t = 0; t < data_.days(); ++t) ids.push_back(group + "@" + std::to_string(t + 1));
  return ids;
}

VectorXd CovidModel::pointwise_loglik(const VectorXd& u) const {
  const VectorXd theta = constrain(u);
  const MatrixXd d = trajectory(theta).deaths;
  const double phi = theta(static_cast<Eigen::Index>(phi_));
  VectorXd out(d.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index t = 0; t < d.cols(); ++t) out(k++) = epi::negbin_logpmf(data_.deaths(i, t), d(i, t), phi);
  return out;
}

std::vector<LatentQuantity> CovidModel::latent_quantities(const VectorXd& u) const {
  const auto tr = trajectory(constrain(u));
  std::vector<double> days(data_.days()), cps(k_);
  for (std::size_t t = 0; t < days.size(); ++t) days[t] = static_cast<double>(t + 1);
  // Changepoint values are labelled with the first day they apply to.
  for (std::size_t k = 0; k < k_; ++k) cps[k] = static_cast<double>(k * static_cast<std::size_t>(data_.config.changepoint_stride) + 1);
  const auto& ids = data_.group_ids;
  return {{"x", ids, cps, tr.x},
          {"beta", ids, days, tr.beta},
          {"infections", ids, days, tr.infections},
          {"expected_deaths", ids, days, tr.deaths}};
}

VectorXd CovidModel::forecast(const VectorXd& u, std::span<const TaskPoint> targets,
                              std::mt19937_64& rng) const {
  if (targets.empty()) return {};
  const auto t_obs = data_.days();
  const auto a = static_cast<Eigen::Index>(data_.config.groups());
  double last = 0.0;
  for (const auto& pt : targets) {
    if (pt.time <= static_cast<double>(t_obs) || pt.time != std::floor(pt.time)) {
      throw ConfigError("forecast targets must be whole days after the last observed day");
    }
    if (pt.task >= static_cast<std::size_t>(a)) throw ConfigError("forecast target names an unknown group");
    last = std::max(last, pt.time);
  }
  const auto days = static_cast<std::size_t>(last);
  const VectorXd theta = constrain(u);
  const auto cfg = config_for(theta);
  LatentPathBuilder::Workspace ws;
  const MatrixXd x = latent_x(theta, ws);
  const std::size_t k_all = epi::changepoint_count(days, cfg.changepoint_stride);
  MatrixXd x_all(a, static_cast<Eigen::Index>(k_all));
  x_all.leftCols(x.cols()) = x;
  if (k_all > k_) {
    std::vector<double> times;
    for (std::size_t k = k_; k < k_all; ++k) times.push_back(static_cast<double>(k + 1));
    MatrixXd ext = builder_->extend(blocks_.structure(theta), ws, times, rng);
    ext.colwise() += theta.segment(static_cast<Eigen::Index>(x0_), a);
    x_all.rightCols(ext.cols()) = ext;
  }
  const MatrixXd beta = epi::expand_changepoints(logistic(x_all), days, cfg.changepoint_stride);
  const MatrixXd d = epi::expected_deaths(epi::renewal_infections(beta, cfg), cfg);
  const double phi = theta(static_cast<Eigen::Index>(phi_));
  VectorXd out(static_cast<Eigen::Index>(targets.size()));
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto t = static_cast<Eigen::Index>(targets[k].time) - 1;
    out(static_cast<Eigen::Index>(k)) =
        epi::negbin_sample(d(static_cast<Eigen::Index>(targets[k].task), t), phi, rng);
  }
  return out;
}

}  // namespace xgp
