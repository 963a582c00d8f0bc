#include "xgp/model.hpp"

#include <cmath>
#include <limits>

#include "xgp/error.hpp"
#include "xgp/models.hpp"

namespace xgp {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::iBM: return "iBM";
    case Variant::xBM: return "xBM";
    case Variant::mxBM: return "mxBM";
    case Variant::iEQ: return "iEQ";
    case Variant::xEQ: return "xEQ";
    case Variant::mxEQ: return "mxEQ";
  }
  return "?";
}

std::string to_string(LikelihoodKind k) {
  switch (k) {
    case LikelihoodKind::Gaussian: return "gaussian";
    case LikelihoodKind::ChikvNegBin: return "chikv_negbin";
    case LikelihoodKind::CovidNegBin: return "covid_negbin";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::Baseline, Variant::iBM, Variant::xBM, Variant::mxBM, Variant::iEQ,
                    Variant::xEQ, Variant::mxEQ}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown model variant '" + name +
                    "' (expected baseline, iBM, xBM, mxBM, iEQ, xEQ or mxEQ)");
}

LikelihoodKind parse_likelihood(const std::string& name) {
  for (LikelihoodKind k :
       {LikelihoodKind::Gaussian, LikelihoodKind::ChikvNegBin, LikelihoodKind::CovidNegBin}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown likelihood '" + name +
                    "' (expected gaussian, chikv_negbin or covid_negbin)");
}

StructureKind structure_of(Variant v) {
  switch (v) {
    case Variant::iBM:
    case Variant::iEQ:
    case Variant::Baseline:
      return StructureKind::Independent;
    case Variant::xBM:
    case Variant::xEQ:
      return StructureKind::Exchangeable;
    case Variant::mxBM:
    case Variant::mxEQ:
      return StructureKind::MultipleExchangeable;
  }
  return StructureKind::Independent;
}

KernelFamily kernel_of(Variant v) {
  switch (v) {
    case Variant::iEQ:
    case Variant::xEQ:
    case Variant::mxEQ:
      return KernelFamily::EQ;
    default:
      return KernelFamily::BM;
  }
}

void ModelSpec::validate() const {
  if (variant == Variant::Baseline && likelihood != LikelihoodKind::ChikvNegBin) {
    throw ConfigError("the baseline variant is only defined for the chikv_negbin likelihood");
  }
  if (latent_state && likelihood != LikelihoodKind::Gaussian) {
    throw ConfigError("latent_state applies to the gaussian likelihood only");
  }
  if (!std::isfinite(likelihood_weight) || likelihood_weight < 0.0) {
    throw ConfigError("likelihood_weight must be finite and nonnegative");
  }
}

std::size_t ParamLayout::add(std::string name, std::size_t size, Transform transform, Prior prior,
                             bool latent) {
  if (has(name)) throw ConfigError("duplicate parameter block '" + name + "'");
  if (transform == Transform::Log && !prior.positive_support() &&
      prior.family() != Prior::Family::Flat) {
    throw ConfigError("parameter '" + name + "' is positive but its prior is not");
  }
  const std::size_t off = dim_;
  blocks_.push_back({std::move(name), off, size, transform, std::move(prior), latent});
  dim_ += size;
  return off;
}

const ParamBlock& ParamLayout::block(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw ConfigError("no parameter block named '" + name + "'");
}

bool ParamLayout::has(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return true;
  }
  return false;
}

std::vector<std::string> ParamLayout::entry_names(bool include_latent) const {
  std::vector<std::string> out;
  for (const auto& b : blocks_) {
    if (b.latent && !include_latent) continue;
    if (b.size == 1 && !b.latent) {
      out.push_back(b.name);
    } else {
      for (std::size_t k = 0; k < b.size; ++k) out.push_back(b.name + "[" + std::to_string(k + 1) + "]");
    }
  }
  return out;
}

double Model::log_density(const VectorXd& u, VectorXd* grad, DensityTerms terms) const {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  const auto n = static_cast<Eigen::Index>(dim());
  auto fail = [&] {
    if (grad) grad->setZero(n);
    return kNegInf;
  };
  if (u.size() != n) throw ConfigError("parameter vector has the wrong length");
  if (!u.allFinite()) return fail();
  try {
    const VectorXd theta = constrain(u);
    if (!theta.allFinite()) return fail();
    VectorXd gtheta = VectorXd::Zero(n);
    double lp = 0.0;
    if (spec_.likelihood_weight != 0.0) {
      lp = spec_.likelihood_weight * log_likelihood(theta, gtheta);
      gtheta *= spec_.likelihood_weight;
    }
    VectorXd gu(n);
    for (const auto& b : layout_.blocks()) {
      for (std::size_t k = 0; k < b.size; ++k) {
        const auto i = static_cast<Eigen::Index>(b.offset + k);
        const double x = theta(i);
        if (terms.prior) {
          lp += b.prior.log_density(x);
          gtheta(i) += b.prior.d_log_density(x);
        }
        if (b.transform == Transform::Log) {
          gu(i) = gtheta(i) * x;
          if (terms.jacobian) {
            lp += u(i);
            gu(i) += 1.0;
          }
        } else {
          gu(i) = gtheta(i);
        }
      }
    }
    if (!std::isfinite(lp) || !gu.allFinite()) return fail();
    if (grad) *grad = std::move(gu);
    return lp;
  } catch (const Error&) {
    return fail();
  }
}

VectorXd Model::constrain(const VectorXd& u) const {
  VectorXd theta = u;
  for (const auto& b : layout_.blocks()) {
    if (b.transform != Transform::Log) continue;
    auto seg = theta.segment(static_cast<Eigen::Index>(b.offset), static_cast<Eigen::Index>(b.size));
    seg = seg.array().exp().matrix();
  }
  return theta;
}

VectorXd Model::unconstrain(const VectorXd& theta) const {
  VectorXd u = theta;
  for (const auto& b : layout_.blocks()) {
    if (b.transform != Transform::Log) continue;
    auto seg = u.segment(static_cast<Eigen::Index>(b.offset), static_cast<Eigen::Index>(b.size));
    if ((seg.array() <= 0.0).any()) throw ConfigError("parameter '" + b.name + "' must be positive");
    seg = seg.array().log().matrix();
  }
  return u;
}

std::vector<std::string> Model::output_names() const {
  auto names = layout_.entry_names(false);
  for (auto& d : derived_names()) names.push_back(std::move(d));
  return names;
}

VectorXd Model::outputs(const VectorXd& u) const {
  const VectorXd theta = constrain(u);
  const VectorXd extra = derived(theta);
  std::vector<double> out;
  for (const auto& b : layout_.blocks()) {
    if (b.latent) continue;
    for (std::size_t k = 0; k < b.size; ++k) out.push_back(theta(static_cast<Eigen::Index>(b.offset + k)));
  }
  for (Eigen::Index k = 0; k < extra.size(); ++k) out.push_back(extra(k));
  return Eigen::Map<VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

VectorXd Model::initial_point(std::mt19937_64& rng, double shrink) const {
  VectorXd u(static_cast<Eigen::Index>(dim()));
  std::normal_distribution<double> z(0.0, 1.0);
  for (const auto& b : layout_.blocks()) {
    for (std::size_t k = 0; k < b.size; ++k) {
      const auto i = static_cast<Eigen::Index>(b.offset + k);
      if (b.latent) {
        u(i) = shrink * z(rng);
        continue;
      }
      const double x = b.prior.sample(rng);
      if (b.transform == Transform::Log) {
        u(i) = shrink * std::log(std::max(std::abs(x), 1e-300));
      } else {
        u(i) = shrink * x;
      }
    }
  }
  return u;
}

std::pair<double, VectorXd> log_posterior(const VectorXd& u, const Model& model) {
  VectorXd g;
  const double v = model.log_density(u, &g);
  return {v, std::move(g)};
}

std::unique_ptr<Model> make_model(const ModelSpec& spec, const ProblemData& data) {
  spec.validate();
  switch (spec.likelihood) {
    case LikelihoodKind::Gaussian:
      if (const auto* d = std::get_if<TaskSeries>(&data)) return std::make_unique<GaussianModel>(spec, *d);
      throw ConfigError("the gaussian likelihood needs task series data");
    case LikelihoodKind::ChikvNegBin:
      if (const auto* d = std::get_if<ChikvData>(&data)) return std::make_unique<ChikvModel>(spec, *d);
      throw ConfigError("the chikv_negbin likelihood needs incidence and precipitation data");
    case LikelihoodKind::CovidNegBin:
      if (const auto* d = std::get_if<CovidData>(&data)) return std::make_unique<CovidModel>(spec, *d);
      throw ConfigError("the covid_negbin likelihood needs death counts and a renewal configuration");
  }
  throw ConfigError("unknown likelihood");
}

}  // namespace xgp
