#pragma once

// Small synthetic problems shared by the test binaries.

#include <random>
#include <string>

#include <Eigen/Dense>

#include "xgp/data.hpp"
#include "xgp/epidemic.hpp"
#include "xgp/simulate.hpp"

namespace fixtures {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline xgp::TaskSeries gaussian_series(std::size_t p, std::size_t n, std::uint64_t seed,
                                       double sigma_y = 0.3) {
  std::mt19937_64 rng(seed);
  const auto s = xgp::CovStructure::exchangeable(xgp::KernelSpec::brownian(),
                                                 xgp::KernelSpec::brownian(), 1.0, 0.5);
  return xgp::simulate_gaussian(s, xgp::TimeGrid::regular(n), p, sigma_y, rng);
}

inline xgp::ChikvData chikv_data(std::size_t islands, std::size_t weeks, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  xgp::ChikvData d;
  const auto s = static_cast<Eigen::Index>(islands);
  d.config.population = VectorXd::Constant(s, 50000.0);
  d.config.precipitation = MatrixXd(s, static_cast<Eigen::Index>(weeks) + 8 + 4);
  for (Eigen::Index i = 0; i < d.config.precipitation.size(); ++i) d.config.precipitation(i) = 3.0 * unif(rng);
  d.config.lag_coefficients = VectorXd::Zero(xgp::epi::kPrecipCoefficients);
  d.config.lag_coefficients(1) = 0.05;
  d.config.initial_exposure = VectorXd::Constant(s, 10.0);
  d.config.exposure_floor = 1.0;
  MatrixXd x(s, static_cast<Eigen::Index>(weeks));
  for (Eigen::Index t = 0; t < x.cols(); ++t)
    for (Eigen::Index i = 0; i < s; ++i) x(i, t) = 0.2 - 0.03 * static_cast<double>(t) + 0.1 * unif(rng);
  d.incidence = xgp::simulate_chikv_incidence(x, d.config, 0.5, rng);
  for (std::size_t i = 0; i < islands; ++i) d.island_ids.push_back("island" + std::to_string(i + 1));
  return d;
}

inline xgp::epi::RenewalConfig renewal_config(std::size_t groups) {
  const auto a = static_cast<Eigen::Index>(groups);
  xgp::epi::RenewalConfig c;
  c.population = VectorXd::LinSpaced(a, 2e5, 4e5);
  c.contact = MatrixXd::Constant(a, a, 1.5);
  c.contact.diagonal().array() += 3.0;
  c.ifr = VectorXd::LinSpaced(a, 0.002, 0.02);
  c.gen_time = xgp::epi::discretize_gamma(6.5, 0.62, 30);
  c.inf_to_death = xgp::epi::discretize_gamma(24.2, 0.39, 60);
  c.seed_infections = VectorXd::Constant(a, 30.0);
  return c;
}

inline xgp::CovidData covid_data(std::size_t groups, std::size_t days, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  xgp::CovidData d;
  d.config = renewal_config(groups);
  const auto k = xgp::epi::changepoint_count(days, d.config.changepoint_stride);
  MatrixXd x(static_cast<Eigen::Index>(groups), static_cast<Eigen::Index>(k));
  for (Eigen::Index j = 0; j < x.cols(); ++j) x.col(j).setConstant(-1.6 - 0.01 * static_cast<double>(j));
  d.deaths = xgp::simulate_covid_deaths(x, d.config, days, 0.3, rng);
  for (std::size_t i = 0; i < groups; ++i) d.group_ids.push_back("age" + std::to_string(i + 1));
  return d;
}

}  // namespace fixtures
