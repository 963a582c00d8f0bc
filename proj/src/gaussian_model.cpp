#include <cmath>

#include "xgp/error.hpp"
#include "xgp/models.hpp"

namespace xgp {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

GaussianModel::GaussianModel(ModelSpec spec, TaskSeries data)
    : Model(std::move(spec)),
      data_((data.validate(), std::move(data))),
      grid_(data_.times),
      points_(data_.observed_points()),
      y_(data_.observed_values()),
      blocks_(spec_.variant, data_.tasks(), layout_, spec_.priors) {
  if (points_.empty()) throw DataError("the series has no observed values");
  sigma_y_ = layout_.add("sigma_y", 1, Transform::Log, spec_.priors.sigma);
  if (spec_.latent_state) {
    builder_.emplace(blocks_.kind(), grid_, data_.tasks());
    const Prior unit = Prior::normal(0.0, 1.0);
    const std::size_t n = grid_.size();
    z_offset_ = layout_.dim();
    if (blocks_.kind() != StructureKind::Independent) layout_.add("z_mu", n, Transform::Identity, unit, true);
    layout_.add("z", data_.tasks() * n, Transform::Identity, unit, true);
  }
}

MatrixXd GaussianModel::latent_paths(const VectorXd& theta, LatentPathBuilder::Workspace& ws) const {
  const auto s = structure(theta);
  return builder_->evaluate(s, {theta.data() + z_offset_, builder_->latent_dim()}, ws);
}

double GaussianModel::log_likelihood(const VectorXd& theta, VectorXd& grad) const {
  const double sy = sigma_y(theta);
  const auto sy_i = static_cast<Eigen::Index>(sigma_y_);
  if (!builder_) {
    const auto res = log_marginal_with_gradient(y_, structure(theta), points_, {sy});
    blocks_.add_gradient(res.grad, grad);
    grad(sy_i) += res.grad.sigma_y;
    return res.value;
  }

  LatentPathBuilder::Workspace ws;
  const auto s = structure(theta);
  const MatrixXd x = builder_->evaluate(s, {theta.data() + z_offset_, builder_->latent_dim()}, ws);
  MatrixXd x_bar = MatrixXd::Zero(x.rows(), x.cols());
  double ll = 0.0;
  const double var = sy * sy;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
      if (!data_.observed(i, t)) continue;
      const double r = data_.values(i, t) - x(i, t);
      ll += -0.5 * r * r / var - std::log(sy) - 0.5 * kLog2Pi;
      x_bar(i, t) = r / var;
      grad(sy_i) += -1.0 / sy + r * r / (var * sy);
    }
  }
  CovParamGradient g;
  builder_->adjoint(s, {theta.data() + z_offset_, builder_->latent_dim()}, ws, x_bar, g,
                    {grad.data() + z_offset_, builder_->latent_dim()});
  blocks_.add_gradient(g, grad);
  return ll;
}

std::vector<std::string> GaussianModel::observation_ids() const {
  std::vector<std::string> ids;
  for (const auto& pt : points_) ids.push_back(data_.task_ids[pt.task] + "@" + data_.label_of(pt.time));
  return ids;
}

VectorXd GaussianModel::pointwise_loglik(const VectorXd& u) const {
  const VectorXd theta = constrain(u);
  const double sy = sigma_y(theta);
  if (!builder_) return log_marginal_terms(y_, structure(theta), points_, {sy});

  LatentPathBuilder::Workspace ws;
  const MatrixXd x = latent_paths(theta, ws);
  VectorXd out(static_cast<Eigen::Index>(points_.size()));
  const auto n = static_cast<Eigen::Index>(grid_.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index t = 0; t < n; ++t) {
      if (!data_.observed(i, t)) continue;
      const double r = (data_.values(i, t) - x(i, t)) / sy;
      out(k++) = -0.5 * r * r - std::log(sy) - 0.5 * kLog2Pi;
    }
  }
  return out;
}

std::vector<LatentQuantity> GaussianModel::latent_quantities(const VectorXd& u) const {
  if (!builder_) return {};
  const VectorXd theta = constrain(u);
  LatentPathBuilder::Workspace ws;
  std::vector<LatentQuantity> out;
  out.push_back({"x", data_.task_ids, data_.times, latent_paths(theta, ws)});
  const VectorXd m = builder_->mean_path(structure(theta), ws);
  if (m.size() > 0) out.push_back({"mu", {"mean"}, data_.times, m.transpose()});
  return out;
}

VectorXd GaussianModel::forecast(const VectorXd& u, std::span<const TaskPoint> targets,
                                 std::mt19937_64& rng) const {
  if (targets.empty()) return {};
  const VectorXd theta = constrain(u);
  const auto dist = condition_on_observations(y_, points_, targets, structure(theta),
                                              {sigma_y(theta)}, true);
  return sample_gaussian(dist, 1, rng).row(0).transpose();
}

}  // namespace xgp
