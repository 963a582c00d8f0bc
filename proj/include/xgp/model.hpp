#pragma once

// Model variants, parameter layouts and the common log-posterior interface
// used by the samplers and the optimizer.

#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "xgp/data.hpp"
#include "xgp/gp.hpp"
#include "xgp/kernel.hpp"
#include "xgp/prior.hpp"

namespace xgp {

enum class Variant { Baseline, iBM, xBM, mxBM, iEQ, xEQ, mxEQ };
enum class LikelihoodKind { Gaussian, ChikvNegBin, CovidNegBin };

std::string to_string(Variant v);
std::string to_string(LikelihoodKind k);
Variant parse_variant(const std::string& name);
LikelihoodKind parse_likelihood(const std::string& name);
StructureKind structure_of(Variant v);
KernelFamily kernel_of(Variant v);

struct ModelSpec {
  Variant variant = Variant::xBM;
  LikelihoodKind likelihood = LikelihoodKind::Gaussian;
  PriorSet priors;
  // Gaussian likelihood only: keep the latent paths in the sampler state
  // instead of integrating them out.
  bool latent_state = false;
  // Multiplies the log-likelihood; 0 samples the prior.
  double likelihood_weight = 1.0;

  void validate() const;
};

enum class Transform { Identity, Log };

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 1;
  Transform transform = Transform::Identity;
  Prior prior = Prior::normal(0.0, 1.0);
  bool latent = false;  // non-centered latent coordinates, excluded from outputs
};

class ParamLayout {
 public:
  std::size_t add(std::string name, std::size_t size, Transform transform, Prior prior,
                  bool latent = false);
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }
  const ParamBlock& block(const std::string& name) const;
  bool has(const std::string& name) const;
  // Entry names, "name" for scalars and "name[k]" (1-based) otherwise.
  std::vector<std::string> entry_names(bool include_latent = true) const;

 private:
  std::vector<ParamBlock> blocks_;
  std::size_t dim_ = 0;
};

struct DensityTerms {
  bool prior = true;
  bool jacobian = true;
};

// A named (rows x times) matrix derived from one parameter draw.
struct LatentQuantity {
  std::string name;
  std::vector<std::string> row_ids;
  std::vector<double> times;
  MatrixXd values;
};

class Model {
 public:
  explicit Model(ModelSpec spec) : spec_(std::move(spec)) {}
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelSpec& spec() const noexcept { return spec_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  std::size_t dim() const noexcept { return layout_.dim(); }

  // Log posterior (up to the evidence) on the unconstrained scale, including
  // log-Jacobian terms. Returns -inf, with a zero gradient, when the density
  // or any intermediate quantity is not finite. Safe for concurrent calls.
  double log_density(const VectorXd& u, VectorXd* grad = nullptr, DensityTerms terms = {}) const;

  VectorXd constrain(const VectorXd& u) const;
  VectorXd unconstrain(const VectorXd& theta) const;

  // Constrained non-latent parameters followed by derived quantities (rho).
  std::vector<std::string> output_names() const;
  VectorXd outputs(const VectorXd& u) const;

  // Prior draw per block, shrunk toward zero by `shrink` on the
  // unconstrained scale.
  VectorXd initial_point(std::mt19937_64& rng, double shrink = 0.1) const;

  // Observation-level log-likelihood terms; they sum to the total
  // log-likelihood of the draw.
  virtual std::vector<std::string> observation_ids() const = 0;
  virtual VectorXd pointwise_loglik(const VectorXd& u) const = 0;

  virtual std::vector<LatentQuantity> latent_quantities(const VectorXd& /*u*/) const { return {}; }

  // One joint draw of future observations at `targets` given the parameter
  // draw u.
  virtual VectorXd forecast(const VectorXd& u, std::span<const TaskPoint> targets,
                            std::mt19937_64& rng) const = 0;

 protected:
  // Log-likelihood (unweighted) and its gradient with respect to the
  // constrained parameter vector theta (also holding latent coordinates).
  virtual double log_likelihood(const VectorXd& theta, VectorXd& grad_theta) const = 0;
  virtual std::vector<std::string> derived_names() const { return {}; }
  virtual VectorXd derived(const VectorXd& /*theta*/) const { return {}; }

  ModelSpec spec_;
  ParamLayout layout_;
};

// (log posterior, gradient) at u.
std::pair<double, VectorXd> log_posterior(const VectorXd& u, const Model& model);

std::unique_ptr<Model> make_model(const ModelSpec& spec, const ProblemData& data);

}  // namespace xgp
