#include "xgp/prior.hpp"

#include <cmath>
#include <limits>

#include "xgp/error.hpp"

namespace xgp {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178032973640562;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("prior ") + what + " must be positive");
}

}  // namespace

Prior Prior::normal(double mean, double sd) {
  require_positive(sd, "sd");
  return {Family::Normal, mean, sd};
}
Prior Prior::half_normal(double scale) {
  require_positive(scale, "scale");
  return {Family::HalfNormal, scale, 0.0};
}
Prior Prior::gamma(double shape, double rate) {
  require_positive(shape, "shape");
  require_positive(rate, "rate");
  return {Family::Gamma, shape, rate};
}
Prior Prior::exponential(double rate) {
  require_positive(rate, "rate");
  return {Family::Exponential, rate, 0.0};
}
Prior Prior::lognormal(double meanlog, double sdlog) {
  require_positive(sdlog, "sdlog");
  return {Family::LogNormal, meanlog, sdlog};
}
Prior Prior::flat() { return {Family::Flat, 0.0, 0.0}; }

Prior Prior::shifted(double log_offset) const {
  Prior p = *this;
  p.offset_ += log_offset;
  return p;
}

bool Prior::positive_support() const noexcept {
  return family_ != Family::Normal && family_ != Family::Flat;
}

double Prior::log_density(double x) const {
  double lp = 0.0;
  switch (family_) {
    case Family::Normal: {
      const double z = (x - a_) / b_;
      lp = -0.5 * z * z - std::log(b_) - kHalfLog2Pi;
      break;
    }
    case Family::HalfNormal: {
      if (x < 0.0) return kNegInf;
      const double z = x / a_;
      lp = -0.5 * z * z - std::log(a_) - kHalfLog2Pi + std::log(2.0);
      break;
    }
    case Family::Gamma:
      if (!(x > 0.0)) return kNegInf;
      lp = a_ * std::log(b_) - std::lgamma(a_) + (a_ - 1.0) * std::log(x) - b_ * x;
      break;
    case Family::Exponential:
      if (x < 0.0) return kNegInf;
      lp = std::log(a_) - a_ * x;
      break;
    case Family::LogNormal: {
      if (!(x > 0.0)) return kNegInf;
      const double z = (std::log(x) - a_) / b_;
      lp = -0.5 * z * z - std::log(b_) - kHalfLog2Pi - std::log(x);
      break;
    }
    case Family::Flat:
      lp = 0.0;
      break;
  }
  return lp + offset_;
}

double Prior::d_log_density(double x) const {
  switch (family_) {
    case Family::Normal:
      return -(x - a_) / (b_ * b_);
    case Family::HalfNormal:
      return -x / (a_ * a_);
    case Family::Gamma:
      return (a_ - 1.0) / x - b_;
    case Family::Exponential:
      return -a_;
    case Family::LogNormal:
      return -((std::log(x) - a_) / (b_ * b_) + 1.0) / x;
    case Family::Flat:
      return 0.0;
  }
  return 0.0;
}

double Prior::sample(std::mt19937_64& rng) const {
  switch (family_) {
    case Family::Normal:
      return std::normal_distribution<double>(a_, b_)(rng);
    case Family::HalfNormal:
      return std::abs(std::normal_distribution<double>(0.0, a_)(rng));
    case Family::Gamma:
      return std::gamma_distribution<double>(a_, 1.0 / b_)(rng);
    case Family::Exponential:
      return std::exponential_distribution<double>(a_)(rng);
    case Family::LogNormal:
      return std::lognormal_distribution<double>(a_, b_)(rng);
    case Family::Flat:
      return std::normal_distribution<double>(0.0, 1.0)(rng);
  }
  return 0.0;
}

std::string Prior::family_name() const {
  switch (family_) {
    case Family::Normal: return "normal";
    case Family::HalfNormal: return "half_normal";
    case Family::Gamma: return "gamma";
    case Family::Exponential: return "exponential";
    case Family::LogNormal: return "lognormal";
    case Family::Flat: return "flat";
  }
  return "unknown";
}

Prior make_prior(const std::string& family, double a, double b) {
  if (family == "normal") return Prior::normal(a, b);
  if (family == "half_normal") return Prior::half_normal(a);
  if (family == "gamma") return Prior::gamma(a, b);
  if (family == "exponential") return Prior::exponential(a);
  if (family == "lognormal") return Prior::lognormal(a, b);
  if (family == "flat") return Prior::flat();
  throw ConfigError("unknown prior family '" + family + "'");
}

}  // namespace xgp
