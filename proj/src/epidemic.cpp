#include "xgp/epidemic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "xgp/error.hpp"

namespace xgp::epi {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Overflow yields inf and domain errors NaN; callers screen non-finite
// densities.
namespace bmp = boost::math::policies;
constexpr bmp::policy<bmp::overflow_error<bmp::ignore_error>, bmp::domain_error<bmp::ignore_error>,
                      bmp::pole_error<bmp::ignore_error>, bmp::evaluation_error<bmp::ignore_error>>
    kQuiet;

void require_shape(const MatrixXd& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ConfigError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                      std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()));
  }
}

}  // namespace

void ChikvConfig::validate(std::size_t weeks) const {
  const auto s = population.size();
  if (s == 0) throw ConfigError("at least one island is required");
  if ((population.array() <= 0.0).any()) throw DataError("island populations must be positive");
  if (history < kMaxPrecipLag) {
    throw DataError("precipitation needs at least 8 weeks of history before week 1");
  }
  if (precipitation.rows() != s) {
    throw DataError("precipitation has " + std::to_string(precipitation.rows()) +
                    " islands, expected " + std::to_string(s));
  }
  if (precipitation.cols() < history || covered_weeks() < weeks) {
    throw DataError("precipitation covers " +
                    std::to_string(std::max<Eigen::Index>(0, precipitation.cols() - history)) +
                    " weeks but " + std::to_string(weeks) + " are required");
  }
  if (lag_coefficients.size() != kPrecipCoefficients) {
    throw ConfigError("expected 9 precipitation lag coefficients");
  }
  if (initial_exposure.size() != s) throw ConfigError("initial_exposure needs one value per island");
  if ((initial_exposure.array() < 0.0).any() || exposure_floor < 0.0) {
    throw ConfigError("exposures must be nonnegative");
  }
}

MatrixXd chikv_covariate_effect(const ChikvConfig& config, const VectorXd& coefficients,
                                std::size_t weeks, std::size_t first_week) {
  if (coefficients.size() != kPrecipCoefficients) {
    throw ConfigError("expected 9 precipitation lag coefficients");
  }
  const auto s = static_cast<Eigen::Index>(config.islands());
  const auto last_col = static_cast<Eigen::Index>(config.history) +
                        static_cast<Eigen::Index>(first_week + weeks) - 2;
  if (first_week < 1 || last_col >= config.precipitation.cols()) {
    throw DataError("precipitation does not cover the requested weeks (needs future covariates)");
  }
  MatrixXd out = MatrixXd::Zero(s, static_cast<Eigen::Index>(weeks));
  for (Eigen::Index t = 0; t < out.cols(); ++t) {
    const Eigen::Index col = config.history + static_cast<Eigen::Index>(first_week) - 1 + t;
    for (int l = 0; l <= kMaxPrecipLag; ++l) {
      out.col(t) += config.precipitation.col(col - l) * coefficients(l);
    }
  }
  return out;
}

MatrixXd chikv_log_beta(const MatrixXd& x, const ChikvConfig& config) {
  config.validate(static_cast<std::size_t>(x.cols()));
  require_shape(x, static_cast<Eigen::Index>(config.islands()), x.cols(), "latent path");
  return x + chikv_covariate_effect(config, config.lag_coefficients,
                                    static_cast<std::size_t>(x.cols()));
}

MatrixXd chikv_baseline_log_beta(const VectorXd& b, const ChikvConfig& config, std::size_t weeks) {
  config.validate(weeks);
  if (b.size() != static_cast<Eigen::Index>(config.islands())) {
    throw ConfigError("baseline needs one coefficient per island");
  }
  MatrixXd x = b.replicate(1, static_cast<Eigen::Index>(weeks));
  return x + chikv_covariate_effect(config, config.lag_coefficients, weeks);
}

MatrixXd chikv_exposure(const MatrixXd& observed, const ChikvConfig& config) {
  const auto s = static_cast<Eigen::Index>(config.islands());
  require_shape(observed, s, observed.cols(), "observed incidence");
  if (config.initial_exposure.size() != s) {
    throw ConfigError("initial_exposure needs one value per island");
  }
  MatrixXd out(s, observed.cols());
  for (Eigen::Index t = 0; t < observed.cols(); ++t) {
    const VectorXd prev = t == 0 ? config.initial_exposure : VectorXd(observed.col(t - 1));
    out.col(t) = prev.cwiseMax(config.exposure_floor);
  }
  return out;
}

MatrixXd chikv_susceptible_fraction(const MatrixXd& counts, const ChikvConfig& config) {
  const auto s = static_cast<Eigen::Index>(config.islands());
  require_shape(counts, s, counts.cols(), "incidence");
  MatrixXd z(s, counts.cols());
  for (Eigen::Index i = 0; i < s; ++i) {
    double cumulative = 0.0;
    for (Eigen::Index t = 0; t < counts.cols(); ++t) {
      const double frac = 1.0 - cumulative / config.population(i);
      if (frac < 0.0) {
        throw DataError("cumulative incidence exceeds the population of island " +
                        std::to_string(i + 1) + " at week " + std::to_string(t + 1));
      }
      z(i, t) = frac;
      cumulative += counts(i, t);
    }
  }
  return z;
}

MatrixXd chikv_expected_infections(const MatrixXd& beta, const MatrixXd& observed,
                                   const ChikvConfig& config) {
  require_shape(observed, beta.rows(), beta.cols(), "observed incidence");
  if ((beta.array() < 0.0).any()) throw ConfigError("transmission rates must be nonnegative");
  const MatrixXd z = chikv_susceptible_fraction(observed, config);
  return beta.cwiseProduct(chikv_exposure(observed, config)).cwiseProduct(z);
}

MatrixXd chikv_r_eff(const MatrixXd& x, const MatrixXd& incidence, const ChikvConfig& config) {
  require_shape(incidence, x.rows(), x.cols(), "incidence");
  const auto s = static_cast<Eigen::Index>(config.islands());
  MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < s; ++i) {
    double cumulative = 0.0;
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
      out(i, t) = (1.0 - cumulative / config.population(i)) * std::exp(x(i, t));
      cumulative += incidence(i, t);
    }
  }
  return out;
}

void RenewalConfig::validate() const {
  const auto a = population.size();
  if (a == 0) throw ConfigError("at least one age group is required");
  if ((population.array() <= 0.0).any()) throw DataError("group populations must be positive");
  if (contact.rows() != a || contact.cols() != a) throw DataError("contact matrix must be A x A");
  if ((contact.array() < 0.0).any()) throw DataError("contact rates must be nonnegative");
  if (ifr.size() != a) throw DataError("IFR needs one value per group");
  if ((ifr.array() < 0.0).any() || (ifr.array() > 1.0).any()) {
    throw DataError("IFR values must lie in [0, 1]");
  }
  if ((gen_time.array() < 0.0).any() || gen_time.sum() > 1.0 + 1e-9) {
    throw ConfigError("generation-time distribution must be nonnegative with total mass <= 1");
  }
  if ((inf_to_death.array() < 0.0).any() || inf_to_death.sum() > 1.0 + 1e-9) {
    throw ConfigError("infection-to-death distribution must be nonnegative with total mass <= 1");
  }
  if (seed_infections.size() != a) throw ConfigError("seed infections need one value per group");
  if ((seed_infections.array() < 0.0).any()) throw ConfigError("seed infections must be nonnegative");
  if (seed_days < 1) throw ConfigError("seed_days must be at least 1");
  if (changepoint_stride < 1) throw ConfigError("changepoint_stride must be at least 1");
}

VectorXd discretize_gamma(double mean, double cv, std::size_t horizon) {
  if (!(mean > 0.0) || !(cv > 0.0)) throw ConfigError("discretize_gamma: mean and cv must be positive");
  const double shape = 1.0 / (cv * cv);
  const double scale = mean * cv * cv;
  auto cdf = [&](double x) { return x <= 0.0 ? 0.0 : boost::math::gamma_p(shape, x / scale, kQuiet); };
  VectorXd g(static_cast<Eigen::Index>(horizon));
  for (std::size_t t = 1; t <= horizon; ++t) {
    const double lo = t == 1 ? 0.0 : static_cast<double>(t) - 0.5;
    g(static_cast<Eigen::Index>(t - 1)) = cdf(static_cast<double>(t) + 0.5) - cdf(lo);
  }
  return g.cwiseMax(0.0);
}

MatrixXd expand_changepoints(const MatrixXd& values, std::size_t days, int stride) {
  if (stride < 1) throw ConfigError("changepoint stride must be at least 1");
  if (static_cast<std::size_t>(values.cols()) < changepoint_count(days, stride)) {
    throw ConfigError("not enough changepoint values for the requested days");
  }
  MatrixXd out(values.rows(), static_cast<Eigen::Index>(days));
  for (std::size_t t = 0; t < days; ++t) {
    out.col(static_cast<Eigen::Index>(t)) = values.col(static_cast<Eigen::Index>(t / stride));
  }
  return out;
}

MatrixXd renewal_infections(const MatrixXd& beta, const RenewalConfig& config) {
  config.validate();
  const auto a = static_cast<Eigen::Index>(config.groups());
  require_shape(beta, a, beta.cols(), "transmission probabilities");
  if (!beta.allFinite() || (beta.array() < 0.0).any()) {
    throw ConfigError("transmission probabilities must be finite and nonnegative");
  }
  const Eigen::Index days = beta.cols();
  const auto& g = config.gen_time;
  MatrixXd inf = MatrixXd::Zero(a, days);
  VectorXd cumulative = VectorXd::Zero(a);
  VectorXd pressure(a);
  for (Eigen::Index t = 0; t < days; ++t) {
    if (t < config.seed_days) {
      inf.col(t) = config.seed_infections;
    } else {
      for (Eigen::Index j = 0; j < a; ++j) {
        double sum = 0.0;
        for (Eigen::Index tau = 0; tau < t; ++tau) {
          const Eigen::Index lag = t - tau;
          if (lag <= g.size()) sum += inf(j, tau) * g(lag - 1);
        }
        pressure(j) = sum;
      }
      const VectorXd force = config.contact * pressure;
      for (Eigen::Index i = 0; i < a; ++i) {
        const double s = std::clamp(1.0 - cumulative(i) / config.population(i), 0.0, 1.0);
        inf(i, t) = std::min(s * beta(i, t) * force(i), s * config.population(i));
      }
    }
    cumulative += inf.col(t);
  }
  return inf;
}

MatrixXd expected_deaths(const MatrixXd& infections, const RenewalConfig& config) {
  const auto a = static_cast<Eigen::Index>(config.groups());
  require_shape(infections, a, infections.cols(), "infections");
  if (config.ifr.size() != a) throw ConfigError("IFR needs one value per group");
  const auto& h = config.inf_to_death;
  MatrixXd d = MatrixXd::Zero(a, infections.cols());
  for (Eigen::Index t = 0; t < infections.cols(); ++t) {
    for (Eigen::Index s = 0; s < t; ++s) {
      const Eigen::Index lag = t - s;
      if (lag > h.size()) continue;
      d.col(t) += infections.col(s) * h(lag - 1);
    }
  }
  return config.ifr.asDiagonal() * d;
}

double negbin_logpmf(double y, double mean, double phi) {
  return negbin_logpmf_grad(y, mean, phi).value;
}

NegBinTerm negbin_logpmf_grad(double y, double mean, double phi) {
  if (!(phi > 0.0)) throw ConfigError("negative-binomial overdispersion must be positive");
  if (y < 0.0) throw DataError("counts must be nonnegative");
  NegBinTerm out;
  if (!(mean > 0.0)) {
    // A zero mean puts all mass at zero.
    out.value = y > 0.0 ? kNegInf : 0.0;
    return out;
  }
  if (!std::isfinite(mean)) {
    out.value = kNegInf;
    return out;
  }
  const double size = mean / phi;
  const double log1p_phi = std::log1p(phi);
  out.value = boost::math::lgamma(y + size, kQuiet) - boost::math::lgamma(size, kQuiet) -
              boost::math::lgamma(y + 1.0, kQuiet) - size * log1p_phi +
              (y > 0.0 ? y * (std::log(phi) - log1p_phi) : 0.0);
  const double d_size = (y > 0.0 ? boost::math::digamma(y + size, kQuiet) - boost::math::digamma(size, kQuiet)
                                  : 0.0) -
                        log1p_phi;
  out.d_mean = d_size / phi;
  out.d_phi = -d_size * mean / (phi * phi) - size / (1.0 + phi) + y / (phi * (1.0 + phi));
  return out;
}

double negbin_loglik(const MatrixXd& y, const MatrixXd& means, NegBinParams params) {
  require_shape(means, y.rows(), y.cols(), "negative-binomial means");
  double total = 0.0;
  for (Eigen::Index j = 0; j < y.cols(); ++j)
    for (Eigen::Index i = 0; i < y.rows(); ++i) total += negbin_logpmf(y(i, j), means(i, j), params.phi);
  return total;
}

double negbin_sample(double mean, double phi, std::mt19937_64& rng) {
  if (!(phi > 0.0)) throw ConfigError("negative-binomial overdispersion must be positive");
  if (!(mean > 0.0)) return 0.0;
  std::gamma_distribution<double> gamma(mean / phi, phi);
  const double rate = gamma(rng);
  if (!(rate > 0.0)) return 0.0;
  std::poisson_distribution<long long> poisson(rate);
  return static_cast<double>(poisson(rng));
}

}  // namespace xgp::epi
