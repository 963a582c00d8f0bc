#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xgp/hmc.hpp"

namespace xgp {

// Split-Rhat over chains of equal length (each chain is halved; an odd
// middle draw is dropped). Unavailable for a single chain.
std::optional<double> split_rhat(const std::vector<VectorXd>& chains);

// Multi-chain effective sample size from autocorrelations truncated with
// Geyer's initial monotone sequence.
double effective_sample_size(const std::vector<VectorXd>& chains);

struct ParamDiagnostic {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double ess = 0.0;
  std::optional<double> rhat;
};

std::vector<ParamDiagnostic> diagnostics(const PosteriorDraws& draws);

}  // namespace xgp
