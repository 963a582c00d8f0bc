#pragma once

// Deterministic forward maps from latent transmission paths to expected
// surveillance counts, and the negative-binomial observation model.
//
// Matrices are group-major: one row per island / age group, one column per
// time step (week for the TSIR model, day for the renewal model).

#include <cstddef>
#include <random>

#include <Eigen/Dense>

namespace xgp::epi {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Precipitation lags l = 0..8 enter the transmission rate.
inline constexpr int kMaxPrecipLag = 8;
inline constexpr int kPrecipCoefficients = kMaxPrecipLag + 1;

struct ChikvConfig {
  VectorXd population;          // N_s, one per island
  MatrixXd precipitation;       // weekly totals (cm); column `history` is week 1
  int history = kMaxPrecipLag;  // columns preceding week 1, at least 8
  VectorXd lag_coefficients = VectorXd::Zero(kPrecipCoefficients);  // log beta_{P,l}
  VectorXd initial_exposure;    // O_{s,0}, the exposure for week 1
  double exposure_floor = 0.0;  // exposure is max(O_{s,t-1}, floor)

  std::size_t islands() const noexcept { return static_cast<std::size_t>(population.size()); }
  // Weeks of precipitation available from week 1 onwards.
  std::size_t covered_weeks() const noexcept {
    return static_cast<std::size_t>(precipitation.cols() - history);
  }
  // Throws DataError/ConfigError when inconsistent or when `weeks` exceed the
  // precipitation coverage.
  void validate(std::size_t weeks) const;
};

// sum_l P_{s,t-l} c_l for weeks [first_week, first_week + weeks).
MatrixXd chikv_covariate_effect(const ChikvConfig& config, const VectorXd& coefficients,
                                std::size_t weeks, std::size_t first_week = 1);

// log beta_{s,t} = x_{s,t} + sum_l P_{s,t-l} log beta_{P,l}
MatrixXd chikv_log_beta(const MatrixXd& x, const ChikvConfig& config);

// log beta_{s,t} = b_s + sum_l P_{s,t-l} log beta_{P,l}
MatrixXd chikv_baseline_log_beta(const VectorXd& b, const ChikvConfig& config, std::size_t weeks);

// Exposure O*_{s,t} = O_{s,t-1} (initial_exposure at week 1), floored.
MatrixXd chikv_exposure(const MatrixXd& observed, const ChikvConfig& config);

// Susceptible fraction 1 - sum_{tau < t} O_{s,tau} / N_s. Throws DataError if
// cumulative counts exceed the population.
MatrixXd chikv_susceptible_fraction(const MatrixXd& counts, const ChikvConfig& config);

// d_{s,t} = beta_{s,t} O*_{s,t} (1 - sum_{tau<t} O_{s,tau} / N_s)
MatrixXd chikv_expected_infections(const MatrixXd& beta, const MatrixXd& observed,
                                   const ChikvConfig& config);

// R_eff(s,t) = z_{s,t} exp(x_{s,t})
MatrixXd chikv_r_eff(const MatrixXd& x, const MatrixXd& incidence, const ChikvConfig& config);

struct RenewalConfig {
  VectorXd population;        // N_alpha
  MatrixXd contact;           // daily average contacts, A x A
  VectorXd ifr;               // in [0, 1]
  VectorXd gen_time;          // g_1, g_2, ... (index 0 is lag 1)
  VectorXd inf_to_death;      // h_1, h_2, ...
  VectorXd seed_infections;   // daily infections per group during seeding
  int seed_days = 6;
  int changepoint_stride = 3;

  std::size_t groups() const noexcept { return static_cast<std::size_t>(population.size()); }
  void validate() const;
};

// Daily discretization of a Gamma(mean, cv) delay: g(1) = F(1.5),
// g(t) = F(t + 0.5) - F(t - 0.5) for t >= 2. Index 0 holds g(1).
VectorXd discretize_gamma(double mean, double cv, std::size_t horizon);

// Expands A x K changepoint values into A x days, each value held for
// `stride` consecutive days.
MatrixXd expand_changepoints(const MatrixXd& values, std::size_t days, int stride);

inline std::size_t changepoint_count(std::size_t days, int stride) {
  return (days + static_cast<std::size_t>(stride) - 1) / static_cast<std::size_t>(stride);
}

// Age-structured renewal recursion. Days 1..seed_days carry the seed
// infections; afterwards
//   i_{a,t} = min(s_{a,t} beta_{a,t} sum_a' C_{a,a'} sum_{tau<t} i_{a',tau} g_{t-tau}, s_{a,t} N_a)
// with s clamped to [0, 1].
MatrixXd renewal_infections(const MatrixXd& beta, const RenewalConfig& config);

// d_{a,t} = IFR_a sum_{s<t} i_{a,s} h_{t-s}
MatrixXd expected_deaths(const MatrixXd& infections, const RenewalConfig& config);

struct NegBinParams {
  double phi = 1.0;  // variance is d (1 + phi)
};

// log NegBin(y | mean d, size d / phi). Returns -inf for y > 0 with d <= 0.
double negbin_logpmf(double y, double mean, double phi);

struct NegBinTerm {
  double value = 0.0;
  double d_mean = 0.0;
  double d_phi = 0.0;
};

NegBinTerm negbin_logpmf_grad(double y, double mean, double phi);

double negbin_loglik(const MatrixXd& y, const MatrixXd& means, NegBinParams params);

// Gamma-Poisson draw with mean d and variance d (1 + phi).
double negbin_sample(double mean, double phi, std::mt19937_64& rng);

}  // namespace xgp::epi
