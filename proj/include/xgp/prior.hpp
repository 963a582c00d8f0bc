#pragma once

#include <random>
#include <string>

namespace xgp {

// Univariate prior densities on the constrained scale. Densities are fully
// normalized; `shifted` adds a constant to the log density.
class Prior {
 public:
  enum class Family { Normal, HalfNormal, Gamma, Exponential, LogNormal, Flat };

  static Prior normal(double mean, double sd);
  static Prior half_normal(double scale);
  static Prior gamma(double shape, double rate);
  static Prior exponential(double rate);
  static Prior lognormal(double meanlog, double sdlog);
  static Prior flat();

  Prior shifted(double log_offset) const;

  Family family() const noexcept { return family_; }
  double a() const noexcept { return a_; }
  double b() const noexcept { return b_; }
  double log_offset() const noexcept { return offset_; }
  bool positive_support() const noexcept;

  double log_density(double x) const;
  double d_log_density(double x) const;
  // Flat priors sample from N(0, 1) so that initialization stays finite.
  double sample(std::mt19937_64& rng) const;

  std::string family_name() const;

 private:
  Prior(Family f, double a, double b) : family_(f), a_(a), b_(b) {}

  Family family_;
  double a_;
  double b_;
  double offset_ = 0.0;
};

// Parses "normal", "half_normal", "gamma", "exponential", "lognormal", "flat".
Prior make_prior(const std::string& family, double a, double b);

// Weakly informative defaults, grouped by parameter role.
struct PriorSet {
  Prior sigma = Prior::half_normal(1.0);          // every scale parameter, including s_y and s_B
  Prior lengthscale = Prior::gamma(2.0, 0.2);     // EQ lengthscales (shape, rate)
  Prior location = Prior::normal(0.0, 2.0);       // initial latent values and mu_B
  Prior coefficient = Prior::normal(0.0, 0.1);    // precipitation lag coefficients log beta_P
  Prior overdispersion = Prior::exponential(1.0); // phi_O, phi_D
  Prior seed = Prior::half_normal(100.0);         // daily seed infections per group
};

}  // namespace xgp
