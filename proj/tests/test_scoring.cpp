#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "xgp/error.hpp"
#include "xgp/hmc.hpp"
#include "xgp/io.hpp"
#include "xgp/scoring.hpp"

using namespace xgp;

namespace {

// Pairwise CRPS estimator written out over all ordered pairs.
double crps_oracle(const VectorXd& x, double y) {
  const auto n = x.size();
  double a = 0.0, b = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    a += std::abs(x(i) - y);
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) b += std::abs(x(i) - x(j));
  }
  return a / n - 0.5 * b / static_cast<double>(n * (n - 1));
}

// Closed-form CRPS of N(m, s^2) at y.
double crps_normal(double m, double s, double y) {
  const double z = (y - m) / s;
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi);
  const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
  return s * (z * (2 * cdf - 1) + 2 * pdf - 1 / std::sqrt(std::numbers::pi));
}

ForecastEnsemble normal_ensemble(Eigen::Index draws, Eigen::Index cells, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  ForecastEnsemble e;
  e.samples.resize(draws, cells);
  for (auto& v : e.samples.reshaped()) v = z(rng);
  e.targets = VectorXd::Zero(cells);
  return e;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("xgp_scoring_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("crps") {
  ForecastEnsemble perfect{MatrixXd::Constant(5, 2, 3.0), VectorXd::Constant(2, 3.0), {}};
  CHECK(crps(perfect) == 0.0);

  const auto e = normal_ensemble(100000, 1, 1);
  const double want = (std::sqrt(2.0) - 1) / std::sqrt(std::numbers::pi);
  CHECK(want == doctest::Approx(crps_normal(0, 1, 0)).epsilon(1e-14));
  CHECK(want == doctest::Approx(0.23370).epsilon(1e-4));
  CHECK(std::abs(crps(e) - want) < 0.005);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 2.0);
  for (int rep = 0; rep < 30; ++rep) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 40), c = 1 + static_cast<Eigen::Index>(rng() % 5);
    ForecastEnsemble f;
    f.samples.resize(n, c);
    for (auto& v : f.samples.reshaped()) v = z(rng);
    f.targets.resize(c);
    for (auto& v : f.targets) v = z(rng);
    const VectorXd cells = crps_cells(f);
    for (Eigen::Index k = 0; k < c; ++k) {
      CHECK(cells(k) >= 0.0);
      CHECK(cells(k) == doctest::Approx(crps_oracle(f.samples.col(k), f.targets(k))).epsilon(1e-12));
    }
    // Permuting the samples leaves the score unchanged.
    ForecastEnsemble g = f;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index i = 0; i < n; ++i) g.samples.row(i) = f.samples.row(order[static_cast<std::size_t>(i)]);
    CHECK((crps_cells(g) - cells).cwiseAbs().maxCoeff() < 1e-12);
  }
  ForecastEnsemble lone{MatrixXd::Zero(1, 1), VectorXd::Zero(1), {}};
  CHECK_THROWS_AS(crps(lone), ConfigError);
}

TEST_CASE("log score") {
  const auto e = normal_ensemble(100000, 1, 2);
  CHECK(std::abs(log_score(e) - 0.5 * std::log(2 * std::numbers::pi)) < 0.02);

  // Exactly standardized ensemble, target 10 sd above the mean.
  ForecastEnsemble t = normal_ensemble(1000, 1, 3);
  VectorXd col = t.samples.col(0);
  col.array() -= col.mean();
  col /= std::sqrt(col.squaredNorm() / 999.0);
  t.samples.col(0) = col;
  t.targets(0) = 10.0;
  CHECK(log_score(t) == doctest::Approx(50.0 + 0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-12));

  ForecastEnsemble shifted = t;
  shifted.samples.array() += 123.0;
  shifted.targets.array() += 123.0;
  CHECK(log_score(shifted) == doctest::Approx(log_score(t)).epsilon(1e-9));

  ForecastEnsemble flat{MatrixXd::Constant(4, 2, 1.0), VectorXd::Zero(2), {"a", "b"}};
  flat.samples(0, 1) = 2.0;
  try {
    log_score(flat);
    FAIL("expected a numerical error");
  } catch (const NumericalError& err) {
    CHECK(std::string(err.what()).find("cell a") != std::string::npos);
  }
}

TEST_CASE("rmse and mae of predictive medians") {
  ForecastEnsemble exact{MatrixXd::Constant(3, 2, 4.0), VectorXd::Constant(2, 4.0), {}};
  CHECK(rmse_mae(exact).rmse == 0.0);
  CHECK(rmse_mae(exact).mae == 0.0);
  ForecastEnsemble pm{MatrixXd::Zero(3, 2), VectorXd::Zero(2), {}};
  pm.samples.col(0).setConstant(1.0);
  pm.samples.col(1).setConstant(-1.0);
  CHECK(rmse_mae(pm).rmse == doctest::Approx(1.0));
  CHECK(rmse_mae(pm).mae == doctest::Approx(1.0));
  pm.samples.col(0).setConstant(0.0);
  pm.samples.col(1).setConstant(2.0);
  CHECK(rmse_mae(pm).rmse == doctest::Approx(std::sqrt(2.0)));
  CHECK(rmse_mae(pm).mae == doctest::Approx(1.0));

  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.0, 3.0);
  for (int rep = 0; rep < 50; ++rep) {
    ForecastEnsemble f;
    f.samples.resize(7, 4);
    for (auto& v : f.samples.reshaped()) v = z(rng);
    f.targets.resize(4);
    for (auto& v : f.targets) v = z(rng);
    const auto r = rmse_mae(f);
    CHECK(r.rmse >= r.mae);
    // The median of 7 draws is the 4th order statistic.
    VectorXd med(4);
    for (Eigen::Index c = 0; c < 4; ++c) {
      std::vector<double> v(f.samples.col(c).data(), f.samples.col(c).data() + 7);
      std::sort(v.begin(), v.end());
      med(c) = v[3];
    }
    CHECK(r.mae == doctest::Approx((med - f.targets).cwiseAbs().mean()).epsilon(1e-14));
  }
}

TEST_CASE("pooled scores equal scores over the pooled cells") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<ForecastEnsemble> steps;
  for (Eigen::Index cells : {3, 1, 5, 2}) {
    ForecastEnsemble f;
    f.samples.resize(51, cells);
    for (auto& v : f.samples.reshaped()) v = z(rng);
    f.targets.resize(cells);
    for (auto& v : f.targets) v = z(rng);
    steps.push_back(f);
  }
  std::vector<StepScore> scores;
  ForecastEnsemble all;
  all.samples.resize(51, 11);
  all.targets.resize(11);
  Eigen::Index at = 0;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const auto& f = steps[k];
    StepScore s;
    s.model = "m";
    s.step = k + 1;
    s.cells = f.cells();
    s.crps = crps(f);
    s.log_score = log_score(f);
    const auto pe = rmse_mae(f);
    s.mse = pe.rmse * pe.rmse;
    s.mae = pe.mae;
    scores.push_back(s);
    all.samples.middleCols(at, f.samples.cols()) = f.samples;
    all.targets.segment(at, f.targets.size()) = f.targets;
    at += f.samples.cols();
  }
  StepScore failed;
  failed.model = "m";
  failed.failed = true;
  scores.push_back(failed);
  const auto pooled = pool_scores({"m"}, scores).front();
  CHECK(pooled.cells == 11);
  CHECK(pooled.failed_steps == 1);
  CHECK(pooled.crps == doctest::Approx(crps(all)).epsilon(1e-13));
  CHECK(pooled.log_score == doctest::Approx(log_score(all)).epsilon(1e-13));
  CHECK(pooled.rmse == doctest::Approx(rmse_mae(all).rmse).epsilon(1e-13));
  CHECK(pooled.mae == doctest::Approx(rmse_mae(all).mae).epsilon(1e-13));
}

TEST_CASE("pointwise log-likelihood export") {
  const auto data = fixtures::gaussian_series(2, 6, 3);
  ModelSpec spec;
  spec.variant = Variant::xBM;
  const auto model = make_model(spec, data);
  SamplerConfig cfg;
  cfg.chains = 2;
  cfg.iterations = 200;
  cfg.warmup = 100;
  const auto draws = hmc_sample(*model, cfg);
  REQUIRE(draws.pointwise_ll.rows() == 200);
  CHECK(draws.pointwise_ll.cols() == 12);
  for (Eigen::Index d = 0; d < draws.pointwise_ll.rows(); ++d) {
    const double total = model->log_density(draws.unconstrained.row(d).transpose(), nullptr, DensityTerms{false, false});
    CHECK(std::abs(draws.pointwise_ll.row(d).sum() - total) < 1e-8);
  }
  const auto dir = temp_dir("pointwise");
  export_pointwise_ll(draws, dir / "pointwise_ll.csv");
  std::vector<std::string> header;
  const MatrixXd back = io::read_matrix_csv(dir / "pointwise_ll.csv", &header);
  CHECK(header == draws.observation_ids);
  CHECK(back == draws.pointwise_ll);
  std::filesystem::remove_all(dir);
}

TEST_CASE("prequential runs") {
  SamplerConfig cfg;
  cfg.chains = 2;
  cfg.iterations = 300;
  cfg.warmup = 150;
  PrequentialPlan plan{12, 1, 1, 4};

  SUBCASE("constant series") {
    const double noise = 0.01;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z(0.0, noise);
    TaskSeries s;
    s.task_ids = {"a", "b", "c", "d"};
    for (int t = 1; t <= 20; ++t) {
      s.times.push_back(t);
      s.time_labels.push_back(std::to_string(t));
    }
    s.values.resize(4, 20);
    // Level zero: the Brownian kernels pin the process to zero at the origin,
    // so any other level reads as a unit-scale jump before the first observation.
    for (auto& v : s.values.reshaped()) v = z(rng);
    s.observed.setConstant(4, 20, true);
    std::vector<NamedSpec> models;
    for (auto v : {Variant::iBM, Variant::xBM, Variant::xEQ}) {
      ModelSpec m;
      m.variant = v;
      models.push_back({to_string(v), m});
    }
    PrequentialOptions opts;
    opts.method = "optimize";
    const auto res = prequential_run(models, s, PrequentialPlan{12, 1, 1, 8}, cfg, opts);
    for (const auto& p : res.pooled) {
      CAPTURE(p.model);
      CHECK(p.failed_steps == 0);
      CHECK(p.rmse < 2 * noise);
    }
  }

  SUBCASE("model order does not change scores") {
    const auto data = fixtures::gaussian_series(2, 16, 7);
    ModelSpec a, b;
    a.variant = Variant::xBM;
    b.variant = Variant::iEQ;
    PrequentialOptions opts;
    opts.seed = 4;
    const auto fwd = prequential_run({{"x", a}, {"i", b}}, data, plan, cfg, opts);
    const auto rev = prequential_run({{"i", b}, {"x", a}}, data, plan, cfg, opts);
    for (const auto& s : fwd.steps) {
      const auto it = std::find_if(rev.steps.begin(), rev.steps.end(), [&](const StepScore& r) {
        return r.model == s.model && r.step == s.step;
      });
      REQUIRE(it != rev.steps.end());
      CHECK(it->crps == s.crps);
      CHECK(it->mse == s.mse);
      CHECK(it->log_score == s.log_score);
    }
    CHECK(fwd.preferred("CRPS") == rev.preferred("CRPS"));
  }

  SUBCASE("checkpoints resume completed steps") {
    const auto data = fixtures::gaussian_series(2, 16, 8);
    ModelSpec a;
    PrequentialOptions opts;
    opts.method = "optimize";
    opts.checkpoint_dir = temp_dir("resume");
    const auto first = prequential_run({{"xBM", a}}, data, plan, cfg, opts);
    // Resume recomputes the missing step and reuses the others.
    std::filesystem::remove(opts.checkpoint_dir / "xBM_step3.json");
    opts.resume = true;
    const auto second = prequential_run({{"xBM", a}}, data, plan, cfg, opts);
    REQUIRE(second.steps.size() == first.steps.size());
    for (std::size_t k = 0; k < first.steps.size(); ++k) CHECK(second.steps[k].crps == first.steps[k].crps);
    CHECK(std::filesystem::exists(opts.checkpoint_dir / "xBM_step3.json"));
    std::filesystem::remove_all(opts.checkpoint_dir);
  }

  SUBCASE("failed fits are recorded and the run continues") {
    const auto data = fixtures::gaussian_series(2, 16, 9);
    ModelSpec a;
    PrequentialOptions opts;
    opts.method = "optimize";
    PrequentialPlan late{14, 1, 1, 4};  // the last two steps have nothing to score
    const auto res = prequential_run({{"xBM", a}}, data, late, cfg, opts);
    REQUIRE(res.steps.size() == 4);
    CHECK_FALSE(res.steps[0].failed);
    CHECK(res.steps[3].failed);
    CHECK(res.pooled[0].failed_steps == 2);
  }

  SUBCASE("text table layout") {
    PrequentialResult r;
    r.models = {"iEQ", "xEQ"};
    r.pooled = {{"iEQ", 0.5, 1.0, 0.7, 0.4, 10, 0}, {"xEQ", 0.4, 1.1, 0.6, 0.5, 10, 0}};
    const std::string t = r.text_table();
    CHECK(t.find("Preferred model") != std::string::npos);
    CHECK(r.preferred("CRPS") == "xEQ");
    CHECK(r.preferred("LS") == "iEQ");
    CHECK(r.preferred("MAE") == "iEQ");
  }
}
