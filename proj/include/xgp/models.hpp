#pragma once

// Concrete models: the linear-Gaussian multi-task model (marginalized or with
// latent paths in the state), the Chikungunya TSIR model and the COVID
// age-structured renewal model.

#include <memory>
#include <optional>

#include "xgp/data.hpp"
#include "xgp/epidemic.hpp"
#include "xgp/latent_path.hpp"
#include "xgp/model.hpp"

namespace xgp {

class GaussianModel final : public Model {
 public:
  GaussianModel(ModelSpec spec, TaskSeries data);

  const TaskSeries& data() const noexcept { return data_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  const std::vector<TaskPoint>& points() const noexcept { return points_; }
  const VectorXd& y() const noexcept { return y_; }
  CovStructure structure(const VectorXd& theta) const { return blocks_.structure(theta); }
  double sigma_y(const VectorXd& theta) const { return theta(static_cast<Eigen::Index>(sigma_y_)); }

  std::vector<std::string> observation_ids() const override;
  VectorXd pointwise_loglik(const VectorXd& u) const override;
  std::vector<LatentQuantity> latent_quantities(const VectorXd& u) const override;
  VectorXd forecast(const VectorXd& u, std::span<const TaskPoint> targets,
                    std::mt19937_64& rng) const override;

 protected:
  double log_likelihood(const VectorXd& theta, VectorXd& grad_theta) const override;
  std::vector<std::string> derived_names() const override { return blocks_.rho_names(); }
  VectorXd derived(const VectorXd& theta) const override { return blocks_.rho(theta); }

 private:
  MatrixXd latent_paths(const VectorXd& theta, LatentPathBuilder::Workspace& ws) const;

  TaskSeries data_;
  TimeGrid grid_;
  std::vector<TaskPoint> points_;
  VectorXd y_;
  TransmissionBlocks blocks_;
  std::size_t sigma_y_ = 0;
  std::optional<LatentPathBuilder> builder_;
  std::size_t z_offset_ = 0;
};

class ChikvModel final : public Model {
 public:
  ChikvModel(ModelSpec spec, ChikvData data);

  const ChikvData& data() const noexcept { return data_; }
  // S x T latent log-transmission x (b_s repeated for the baseline).
  MatrixXd latent_x(const VectorXd& theta) const;

  std::vector<std::string> observation_ids() const override;
  VectorXd pointwise_loglik(const VectorXd& u) const override;
  std::vector<LatentQuantity> latent_quantities(const VectorXd& u) const override;
  // Targets are (island, week) with weeks after the last observed week.
  // Throws DataError when precipitation does not cover the horizon.
  VectorXd forecast(const VectorXd& u, std::span<const TaskPoint> targets,
                    std::mt19937_64& rng) const override;

 protected:
  double log_likelihood(const VectorXd& theta, VectorXd& grad_theta) const override;
  std::vector<std::string> derived_names() const override;
  VectorXd derived(const VectorXd& theta) const override;

 private:
  MatrixXd means(const VectorXd& theta, const MatrixXd& x) const;
  MatrixXd latent_x(const VectorXd& theta, LatentPathBuilder::Workspace& ws) const;

  ChikvData data_;
  MatrixXd exposure_;
  MatrixXd susceptible_;
  std::optional<TransmissionBlocks> blocks_;
  std::optional<LatentPathBuilder> builder_;
  std::size_t coef_ = 0, phi_ = 0, x0_ = 0, z_ = 0;
  std::size_t mu_b_ = 0, sigma_b_ = 0;
};

class CovidModel final : public Model {
 public:
  CovidModel(ModelSpec spec, CovidData data);

  const CovidData& data() const noexcept { return data_; }
  std::size_t changepoints() const noexcept { return k_; }

  struct Trajectory {
    MatrixXd x;          // A x K changepoint values
    MatrixXd beta;       // A x days
    MatrixXd infections; // A x days
    MatrixXd deaths;     // expected, A x days
  };
  Trajectory trajectory(const VectorXd& theta) const;

  std::vector<std::string> observation_ids() const override;
  VectorXd pointwise_loglik(const VectorXd& u) const override;
  std::vector<LatentQuantity> latent_quantities(const VectorXd& u) const override;
  VectorXd forecast(const VectorXd& u, std::span<const TaskPoint> targets,
                    std::mt19937_64& rng) const override;

 protected:
  double log_likelihood(const VectorXd& theta, VectorXd& grad_theta) const override;
  std::vector<std::string> derived_names() const override { return blocks_.rho_names(); }
  VectorXd derived(const VectorXd& theta) const override { return blocks_.rho(theta); }

 private:
  epi::RenewalConfig config_for(const VectorXd& theta) const;
  MatrixXd latent_x(const VectorXd& theta, LatentPathBuilder::Workspace& ws) const;

  CovidData data_;
  std::size_t k_ = 0;
  TransmissionBlocks blocks_;
  std::optional<LatentPathBuilder> builder_;
  std::size_t phi_ = 0, seed_ = 0, x0_ = 0, z_ = 0;
};

// Renewal recursion with its reverse-mode derivative. Given dF/d(infections)
// (A x days), returns dF/dbeta (A x days) and adds dF/dseed to seed_bar.
MatrixXd renewal_adjoint(const MatrixXd& beta, const epi::RenewalConfig& config,
                         const MatrixXd& infections, MatrixXd infections_bar, VectorXd& seed_bar);

// Reverse of expected_deaths: dF/d(infections) given dF/d(deaths).
MatrixXd expected_deaths_adjoint(const MatrixXd& deaths_bar, const epi::RenewalConfig& config);

}  // namespace xgp
