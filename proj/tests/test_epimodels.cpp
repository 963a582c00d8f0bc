#include <cmath>
#include <random>

#include <boost/math/distributions/gamma.hpp>

#include "doctest.h"
#include "fixtures.hpp"
#include "xgp/epidemic.hpp"
#include "xgp/error.hpp"

using namespace xgp;
using namespace xgp::epi;

namespace {

ChikvConfig chikv_config(Eigen::Index islands, Eigen::Index weeks, double precip) {
  ChikvConfig c;
  c.population = VectorXd::Constant(islands, 100.0);
  c.precipitation = MatrixXd::Constant(islands, weeks + kMaxPrecipLag, precip);
  c.initial_exposure = VectorXd::Constant(islands, 10.0);
  return c;
}

// Log NegBin(y | mean d, size d/phi) from std::lgamma.
double negbin_oracle(double y, double d, double phi) {
  const double r = d / phi;
  const double p = r / (r + d);
  return std::lgamma(y + r) - std::lgamma(r) - std::lgamma(y + 1) + r * std::log(p) +
         y * std::log1p(-p);
}

double poisson_log(double y, double d) { return y * std::log(d) - d - std::lgamma(y + 1); }

}  // namespace

TEST_CASE("chikv log transmission") {
  const Eigen::Index s = 2, t = 6;
  ChikvConfig c = chikv_config(s, t, 2.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0.0, 1.0);
  MatrixXd x(s, t);
  for (auto& v : x.reshaped()) v = z(rng);
  CHECK((chikv_log_beta(x, c) - x).cwiseAbs().maxCoeff() == 0.0);

  c.lag_coefficients(3) = 0.1;
  const MatrixXd lb = chikv_log_beta(MatrixXd::Zero(s, t), c);
  CHECK((lb.array() - 0.2).abs().maxCoeff() < 1e-15);

  // Moving the series one week earlier and the coefficient one lag later
  // leaves the covariate term unchanged.
  for (auto& v : c.precipitation.reshaped()) v = std::abs(z(rng));
  c.lag_coefficients.setZero();
  c.lag_coefficients(2) = 0.3;
  const MatrixXd base = chikv_log_beta(MatrixXd::Zero(s, t), c);
  ChikvConfig shifted = c;
  shifted.lag_coefficients.setZero();
  shifted.lag_coefficients(3) = 0.3;
  shifted.precipitation.setZero();
  shifted.precipitation.leftCols(c.precipitation.cols() - 1) = c.precipitation.rightCols(c.precipitation.cols() - 1);
  CHECK((chikv_log_beta(MatrixXd::Zero(s, t), shifted) - base).cwiseAbs().maxCoeff() < 1e-15);

  ChikvConfig short_history = c;
  short_history.precipitation = MatrixXd::Ones(s, t + 4);
  CHECK_THROWS_AS(chikv_log_beta(x, short_history), DataError);
}

TEST_CASE("chikv baseline transmission") {
  const Eigen::Index s = 3, t = 5;
  ChikvConfig c = chikv_config(s, t, 1.5);
  const MatrixXd b0 = chikv_baseline_log_beta(VectorXd::Zero(s), c, t);
  CHECK((b0.array().exp() - 1.0).abs().maxCoeff() == 0.0);
  VectorXd b(s);
  b << std::log(2.0), 0.3, -0.4;
  CHECK((chikv_baseline_log_beta(b, c, t).row(0).array().exp() - 2.0).abs().maxCoeff() < 1e-15);
  c.lag_coefficients << 0.01, 0.02, 0, 0.03, 0, 0, 0.01, 0, 0.02;
  const MatrixXd x = b.replicate(1, t);
  CHECK((chikv_baseline_log_beta(b, c, t) - chikv_log_beta(x, c)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("chikv expected infections") {
  ChikvConfig c = chikv_config(1, 3, 0.0);
  // Week 1 uses the initial exposure and has no depletion.
  MatrixXd beta = MatrixXd::Constant(1, 3, 2.0);
  MatrixXd obs(1, 3);
  obs << 20, 10, 5;
  const MatrixXd d = chikv_expected_infections(beta, obs, c);
  CHECK(d(0, 0) == doctest::Approx(2.0 * 10.0));
  // Week 2: exposure is week 1's 20 cases, prior cumulative 20 of 100.
  CHECK(d(0, 1) == doctest::Approx(2.0 * 20.0 * 0.8));
  // Week 3: exposure 10, prior cumulative 30.
  CHECK(d(0, 2) == doctest::Approx(2.0 * 10.0 * (1.0 - 30.0 / 100.0)));
  // beta = 2, O* = 10, N = 100, prior cumulative 20 -> 16.
  MatrixXd hand(1, 3);
  hand << 10, 10, 7;
  CHECK(chikv_expected_infections(beta, hand, c)(0, 2) == doctest::Approx(16.0));
  CHECK(chikv_expected_infections(beta, MatrixXd::Zero(1, 3), c)(0, 0) == doctest::Approx(2.0 * 10.0));
  ChikvConfig c2 = chikv_config(1, 2, 0.0);
  MatrixXd exhausted(1, 2);
  exhausted << 100, 0;
  CHECK(chikv_expected_infections(MatrixXd::Constant(1, 2, 2.0), exhausted, c2)(0, 1) == 0.0);
  MatrixXd too_many(1, 3);
  too_many << 80, 40, 0;
  CHECK_THROWS_AS(chikv_expected_infections(beta, too_many, c), DataError);
}

TEST_CASE("chikv effective reproduction number") {
  ChikvConfig c = chikv_config(1, 4, 0.0);
  MatrixXd x(1, 4);
  x << 0.3, -0.2, 0.0, 0.1;
  const MatrixXd r0 = chikv_r_eff(x, MatrixXd::Zero(1, 4), c);
  CHECK((r0 - x.array().exp().matrix()).cwiseAbs().maxCoeff() < 1e-15);
  MatrixXd inc(1, 4);
  inc << 50, 0, 10, 10;
  CHECK(chikv_r_eff(MatrixXd::Zero(1, 4), inc, c)(0, 1) == doctest::Approx(0.5));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 10);
  for (int rep = 0; rep < 20; ++rep) {
    MatrixXd cases(1, 4);
    for (auto& v : cases.reshaped()) v = u(rng);
    const MatrixXd r = chikv_r_eff(MatrixXd::Zero(1, 4), cases, c);
    for (Eigen::Index t = 1; t < 4; ++t) CHECK(r(0, t) <= r(0, t - 1));
  }
}

TEST_CASE("discretized gamma delays") {
  for (auto [mean, cv] : {std::pair{6.5, 0.62}, std::pair{24.2, 0.39}, std::pair{3.0, 1.2}}) {
    const auto horizon = static_cast<std::size_t>(std::ceil(10 * mean));
    const VectorXd g = discretize_gamma(mean, cv, horizon);
    const boost::math::gamma_distribution<> dist(1.0 / (cv * cv), mean * cv * cv);
    CHECK(g(0) == doctest::Approx(boost::math::cdf(dist, 1.5)).epsilon(1e-12));
    CHECK(g.sum() >= 0.999);
    CHECK(g.sum() <= 1.0 + 1e-12);
    CHECK(g.minCoeff() >= 0.0);
    for (Eigen::Index t = 1; t < g.size(); ++t)
      CHECK(g(t) == doctest::Approx(boost::math::cdf(dist, t + 1.5) - boost::math::cdf(dist, t + 0.5)).epsilon(1e-10));
  }
  const VectorXd g = discretize_gamma(6.5, 0.62, 70);
  double m = 0.0;
  for (Eigen::Index t = 0; t < g.size(); ++t) m += static_cast<double>(t + 1) * g(t);
  CHECK(g.sum() >= 0.999);
  CHECK(std::abs(m - 6.5) <= 0.2);
  CHECK_THROWS_AS(discretize_gamma(0.0, 0.5, 10), ConfigError);
}

TEST_CASE("renewal recursion") {
  SUBCASE("no transmission after seeding") {
    auto c = fixtures::renewal_config(3);
    const MatrixXd inf = renewal_infections(MatrixXd::Zero(3, 30), c);
    CHECK((inf.leftCols(6).array() == 30.0).all());
    CHECK((inf.rightCols(24).array() == 0.0).all());
  }
  SUBCASE("scalar recursion oracle") {
    RenewalConfig c;
    c.population = VectorXd::Constant(1, 1e6);
    c.contact = MatrixXd::Constant(1, 1, 1.7);
    c.ifr = VectorXd::Constant(1, 0.01);
    c.gen_time = VectorXd::Ones(1);
    c.inf_to_death = VectorXd::Ones(1);
    c.seed_infections = VectorXd::Constant(1, 5.0);
    c.seed_days = 1;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.5, 0.9);
    MatrixXd beta(1, 50);
    for (auto& v : beta.reshaped()) v = u(rng);
    const MatrixXd inf = renewal_infections(beta, c);
    double prev = 5.0, cum = 5.0, worst = 0.0;
    for (int t = 1; t < 50; ++t) {
      const double s = std::max(0.0, 1.0 - cum / 1e6);
      const double it = std::min(s * beta(0, t) * 1.7 * prev, s * 1e6);
      worst = std::max(worst, std::abs(it - inf(0, t)) / std::max(1.0, std::abs(it)));
      prev = it;
      cum += it;
    }
    CHECK(worst <= 1e-10);
  }
  SUBCASE("conservation on random instances") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
      const auto a = static_cast<Eigen::Index>(1 + rng() % 4);
      auto c = fixtures::renewal_config(static_cast<std::size_t>(a));
      c.population = VectorXd::Constant(a, 2000.0) + 3000.0 * VectorXd::Random(a).cwiseAbs();
      c.seed_infections = VectorXd::Constant(a, 5.0 + 20 * u(rng));
      MatrixXd beta(a, 80);
      for (auto& v : beta.reshaped()) v = 2.0 * u(rng);
      const MatrixXd inf = renewal_infections(beta, c);
      CHECK(inf.minCoeff() >= 0.0);
      const VectorXd total = inf.rowwise().sum();
      for (Eigen::Index i = 0; i < a; ++i) CHECK(total(i) <= c.population(i) * (1 + 1e-12));
    }
  }
  SUBCASE("monotone in transmission away from depletion") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 30; ++rep) {
      auto c = fixtures::renewal_config(2);
      c.population.setConstant(1e9);
      MatrixXd beta(2, 40);
      for (auto& v : beta.reshaped()) v = 0.3 * u(rng);
      MatrixXd bumped = beta;
      for (auto& v : bumped.reshaped()) v += 0.05 * u(rng);
      CHECK((renewal_infections(bumped, c).array() >= renewal_infections(beta, c).array()).all());
    }
  }
  SUBCASE("deterministic") {
    auto c = fixtures::renewal_config(3);
    const MatrixXd beta = MatrixXd::Constant(3, 40, 0.2);
    CHECK(renewal_infections(beta, c) == renewal_infections(beta, c));
  }
}

TEST_CASE("changepoint expansion") {
  MatrixXd v(2, 4);
  v << 1, 2, 3, 4, 5, 6, 7, 8;
  const MatrixXd daily = expand_changepoints(v, 12, 3);
  for (Eigen::Index t = 0; t < 12; ++t) CHECK(daily.col(t) == v.col(t / 3));
  CHECK(changepoint_count(12, 3) == 4);
  CHECK(changepoint_count(13, 3) == 5);
  CHECK_THROWS_AS(expand_changepoints(v, 13, 3), ConfigError);
}

TEST_CASE("expected deaths") {
  auto c = fixtures::renewal_config(2);
  const MatrixXd inf = MatrixXd::Constant(2, 20, 100.0);
  c.ifr.setZero();
  CHECK((expected_deaths(inf, c).array() == 0.0).all());
  c.ifr.setConstant(0.01);
  c.inf_to_death = VectorXd::Zero(5);
  c.inf_to_death(1) = 1.0;  // lag 2
  MatrixXd one = MatrixXd::Zero(2, 6);
  one(0, 0) = 1000;
  const MatrixXd d = expected_deaths(one, c);
  CHECK(d(0, 2) == doctest::Approx(10.0));
  CHECK(d.sum() == doctest::Approx(10.0));
  auto full = fixtures::renewal_config(3);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 500.0);
  MatrixXd many(3, 90);
  for (auto& x : many.reshaped()) x = u(rng);
  const MatrixXd dd = expected_deaths(many, full);
  for (Eigen::Index a = 0; a < 3; ++a) CHECK(dd.row(a).sum() <= full.ifr(a) * many.row(a).sum());
}

TEST_CASE("negative binomial likelihood") {
  CHECK(std::abs(negbin_logpmf(5, 4, 1e-6) - poisson_log(5, 4)) < 1e-3);
  for (double d : {0.5, 3.0, 40.0})
    for (double phi : {0.2, 1.0, 3.0}) {
      const double xi = d / phi;
      CHECK(negbin_logpmf(0, d, phi) == doctest::Approx(xi * std::log(xi / (xi + d))).epsilon(1e-12));
    }
  CHECK(negbin_logpmf(3, 0.0, 1.0) == -INFINITY);
  CHECK(negbin_logpmf(0, 0.0, 1.0) == 0.0);
  MatrixXd y(1, 2), m(1, 2);
  y << 2, 0;
  m << 0, 1;
  CHECK(negbin_loglik(y, m, {1.0}) == -INFINITY);

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.05, 50.0), ph(0.01, 5.0);
  std::uniform_int_distribution<int> count(0, 200);
  MatrixXd ys(10, 10), ds(10, 10);
  const double phi = ph(rng);
  double oracle = 0.0;
  for (Eigen::Index k = 0; k < 100; ++k) {
    ys(k) = count(rng);
    ds(k) = u(rng);
    const double single = negbin_logpmf(ys(k), ds(k), phi);
    CHECK(std::abs(single - negbin_oracle(ys(k), ds(k), phi)) < 1e-10);
    oracle += negbin_oracle(ys(k), ds(k), phi);
  }
  CHECK(std::abs(negbin_loglik(ys, ds, {phi}) - oracle) < 1e-8);
}

TEST_CASE("negative binomial gradient") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.1, 30.0), ph(0.05, 3.0);
  for (int rep = 0; rep < 50; ++rep) {
    const double y = std::floor(u(rng)), d = u(rng), phi = ph(rng), h = 1e-6;
    const auto t = negbin_logpmf_grad(y, d, phi);
    const double fd_d = (negbin_logpmf(y, d + h, phi) - negbin_logpmf(y, d - h, phi)) / (2 * h);
    const double fd_p = (negbin_logpmf(y, d, phi + h) - negbin_logpmf(y, d, phi - h)) / (2 * h);
    CHECK(t.d_mean == doctest::Approx(fd_d).epsilon(1e-5));
    CHECK(t.d_phi == doctest::Approx(fd_p).epsilon(1e-5));
  }
}

TEST_CASE("negative binomial simulation moments") {
  std::mt19937_64 rng(29);
  const int n = 100000;
  double s = 0, s2 = 0;
  for (int k = 0; k < n; ++k) {
    const double v = negbin_sample(10.0, 2.0, rng);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n, var = (s2 - n * mean * mean) / (n - 1);
  CHECK(std::abs(mean / 10.0 - 1) < 0.05);
  CHECK(std::abs(var / 30.0 - 1) < 0.10);
}
