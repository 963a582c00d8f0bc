#pragma once

// Forecast scores for sample ensembles and the rolling prequential protocol.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xgp/hmc.hpp"
#include "xgp/model.hpp"

namespace xgp {

struct ForecastEnsemble {
  MatrixXd samples;  // draws x cells
  VectorXd targets;  // one observed value per cell
  std::vector<std::string> cell_ids;

  std::size_t cells() const noexcept { return static_cast<std::size_t>(targets.size()); }
  // Throws ConfigError for fewer than 2 samples or mismatched shapes.
  void validate() const;
};

// mean|X - y| - (1/2) mean over ordered pairs i != j of |X_i - X_j|.
VectorXd crps_cells(const ForecastEnsemble& e);
double crps(const ForecastEnsemble& e);

// -log N(y; m, s^2) with the ensemble mean and (n - 1)-variance per cell;
// lower is better. Throws NumericalError for a zero-variance cell.
VectorXd log_score_cells(const ForecastEnsemble& e);
double log_score(const ForecastEnsemble& e);

VectorXd ensemble_medians(const ForecastEnsemble& e);

struct PointErrors {
  double rmse = 0.0;
  double mae = 0.0;
};
// Errors of per-cell predictive medians.
PointErrors rmse_mae(const ForecastEnsemble& e);

// Draws x observations, header of observation ids, values written losslessly.
void export_pointwise_ll(const PosteriorDraws& draws, const std::filesystem::path& path);

struct PrequentialPlan {
  double initial_train_end = 0.0;  // in data time units
  double step = 1.0;
  double horizon = 1.0;
  std::size_t n_steps = 8;

  void validate() const;
  double train_end(std::size_t k) const { return initial_train_end + static_cast<double>(k) * step; }
};

struct StepScore {
  std::string model;
  std::size_t step = 0;
  double train_end = 0.0;
  std::size_t cells = 0;
  double crps = 0.0;
  double log_score = 0.0;
  double mse = 0.0;
  double mae = 0.0;
  bool failed = false;
  std::string message;
};

struct PooledScore {
  std::string model;
  double crps = 0.0, log_score = 0.0, rmse = 0.0, mae = 0.0;
  std::size_t cells = 0;
  std::size_t failed_steps = 0;
};

struct PrequentialOptions {
  std::string method = "hmc";        // "hmc" or "optimize" (linear-Gaussian only)
  std::size_t ensemble_size = 400;   // forecast draws per step (posterior draws are recycled)
  std::size_t optimize_starts = 4;
  std::uint64_t seed = 1;
  std::filesystem::path checkpoint_dir;  // per-step results; empty disables
  bool resume = false;
};

struct PrequentialResult {
  std::vector<std::string> models;
  std::vector<StepScore> steps;
  std::vector<PooledScore> pooled;

  // Model with the lowest pooled score for a criterion ("CRPS", "LS",
  // "RMSE", "MAE").
  std::string preferred(const std::string& criterion) const;
  // Criterion rows, model columns and a preferred-model column.
  std::string text_table() const;
};

struct NamedSpec {
  std::string name;
  ModelSpec spec;
};

// Pools step scores with every cell weighted equally.
std::vector<PooledScore> pool_scores(const std::vector<std::string>& models,
                                     const std::vector<StepScore>& steps);

// Fits every model on each expanding training window and scores its
// forecast of the following `horizon`. A failed fit is recorded and the run
// continues. Every (model, step) uses a stream derived from (seed, step).
PrequentialResult prequential_run(const std::vector<NamedSpec>& models, const ProblemData& data,
                                  const PrequentialPlan& plan, const SamplerConfig& sampler,
                                  const PrequentialOptions& options = {});

// Forecast ensemble for the held-out cells of one window.
ForecastEnsemble forecast_window(const Model& model, const MatrixXd& unconstrained_draws,
                                 const ProblemData& full, double train_end, double horizon,
                                 std::size_t ensemble_size, std::uint64_t seed);

}  // namespace xgp
