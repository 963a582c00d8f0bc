#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "xgp/error.hpp"
#include "xgp/kernel.hpp"

using namespace xgp;

namespace {

// A (x) B written out entry by entry.
MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      for (Eigen::Index k = 0; k < b.rows(); ++k)
        for (Eigen::Index l = 0; l < b.cols(); ++l)
          out(i * b.rows() + k, j * b.cols() + l) = a(i, j) * b(k, l);
  return out;
}

MatrixXd min_gram(const std::vector<double>& t) {
  const auto n = static_cast<Eigen::Index>(t.size());
  MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = std::min(t[i], t[j]);
  return g;
}

struct RandomCase {
  CovStructure s;
  TimeGrid grid;
  std::size_t p;
};

// Random structure of a random kind on a random (possibly uneven) grid.
RandomCase random_case(std::mt19937_64& rng, std::size_t max_np) {
  std::uniform_int_distribution<int> kind(0, 2), fam(0, 1);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  const std::size_t p = 1 + rng() % 4;
  const std::size_t n = 1 + rng() % std::min<std::size_t>(8, max_np / p);
  std::vector<double> t;
  double cur = u(rng);
  for (std::size_t k = 0; k < n; ++k) {
    t.push_back(cur);
    cur += u(rng);
  }
  auto kernel = [&] {
    return fam(rng) == 0 ? KernelSpec::brownian() : KernelSpec::exponentiated_quadratic(u(rng));
  };
  switch (kind(rng)) {
    case 0: {
      std::vector<double> sig(p);
      for (auto& v : sig) v = u(rng);
      return {CovStructure::independent({kernel()}, sig), TimeGrid(t), p};
    }
    case 1:
      return {CovStructure::exchangeable(kernel(), kernel(), u(rng), u(rng)), TimeGrid(t), p};
    default: {
      std::vector<KernelSpec> ks;
      std::vector<double> sig(p);
      for (std::size_t i = 0; i < p; ++i) ks.push_back(kernel());
      for (auto& v : sig) v = u(rng);
      return {CovStructure::multiple_exchangeable(kernel(), ks, u(rng), sig), TimeGrid(t), p};
    }
  }
}

}  // namespace

TEST_CASE("bm kernel") {
  CHECK(bm_kernel(2, 3) == 2);
  CHECK(bm_kernel(0, 5) == 0);
  CHECK(bm_kernel(4, 4) == 4);
  CHECK_THROWS_AS(bm_kernel(-1, 2), ConfigError);
}

TEST_CASE("eq kernel") {
  CHECK(eq_kernel(7, 7, 3) == 1.0);
  CHECK(eq_kernel(1, 3, 2) == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
  CHECK(eq_kernel(1, 3, 2) == doctest::Approx(0.60653).epsilon(1e-5));
  const double far = eq_kernel(0, 10, 0.5);
  CHECK_FALSE(std::isnan(far));
  CHECK(far == doctest::Approx(std::exp(-200.0)).epsilon(1e-12));
  CHECK_THROWS_AS(eq_kernel(0, 1, 0), ConfigError);
  CHECK_THROWS_AS(eq_kernel(0, 1, -2), ConfigError);
  CHECK_THROWS_AS(KernelSpec::exponentiated_quadratic(0.0), ConfigError);
}

TEST_CASE("eq lengthscale derivative matches finite differences") {
  for (double l : {0.3, 1.0, 4.0}) {
    const auto k = KernelSpec::exponentiated_quadratic(l);
    const double h = 1e-6;
    const double fd = (eq_kernel(0.4, 1.9, l + h) - eq_kernel(0.4, 1.9, l - h)) / (2 * h);
    CHECK(k.d_lengthscale(0.4, 1.9) == doctest::Approx(fd).epsilon(1e-6));
  }
  CHECK(KernelSpec::brownian().d_lengthscale(1, 2) == 0.0);
}

TEST_CASE("time grid validation and equidistance") {
  CHECK_THROWS_AS(TimeGrid(std::vector<double>{}), ConfigError);
  CHECK_THROWS_AS(TimeGrid({1, 1, 2}), ConfigError);
  CHECK_THROWS_AS(TimeGrid({2, 1}), ConfigError);
  CHECK_THROWS_AS(TimeGrid({1, NAN}), ConfigError);
  CHECK(TimeGrid({1, 2, 3}).equidistant());
  CHECK(TimeGrid({0.1, 0.2, 0.3}).equidistant());
  CHECK_FALSE(TimeGrid({1, 2, 4}).equidistant());
  CHECK(TimeGrid::regular(5, 0.0, 0.5)[4] == 2.0);
}

TEST_CASE("gram matrices") {
  const TimeGrid g({1, 2, 3});
  MatrixXd want(3, 3);
  want << 1, 1, 1, 1, 2, 2, 1, 2, 3;
  CHECK((gram(KernelSpec::brownian(), g) - want).cwiseAbs().maxCoeff() == 0.0);

  const TimeGrid wide({0.0, 1.5, 4.0, 9.0});
  const MatrixXd ones = gram(KernelSpec::exponentiated_quadratic(1e7), wide);
  CHECK((ones.array() - 1.0).abs().maxCoeff() < 1e-9);

  const TimeGrid one({2.5});
  CHECK(gram(KernelSpec::brownian(), one)(0, 0) == 2.5);
  CHECK(gram(KernelSpec::exponentiated_quadratic(0.7), one)(0, 0) == 1.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> t(1 + rng() % 9);
    for (auto& v : t) v = u(rng);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    const TimeGrid grid(t);
    const MatrixXd bm = gram(KernelSpec::brownian(), grid);
    const MatrixXd eq = gram(KernelSpec::exponentiated_quadratic(1.3), grid);
    CHECK((bm - min_gram(t)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((bm - bm.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((eq - eq.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((eq.diagonal().array() - 1.0).abs().maxCoeff() == 0.0);
  }
}

TEST_CASE("multitask kernel entries") {
  const auto bm = KernelSpec::brownian();
  const auto no_mean = CovStructure::exchangeable(bm, bm, 0.0, 1.0);
  for (double t : {0.5, 1.0, 3.0})
    for (double t2 : {0.2, 2.0}) CHECK(multitask_kernel(0, 1, t, t2, no_mean) == 0.0);
  const auto unit = CovStructure::exchangeable(bm, bm, 1.0, 1.0);
  CHECK(multitask_kernel(0, 0, 2, 2, unit) == 4.0);

  const auto mx = CovStructure::multiple_exchangeable(bm, {bm}, 0.5, {1.0, 2.0});
  CHECK(multitask_kernel(1, 1, 2, 3, mx) == doctest::Approx(0.25 * 2 + 4.0 * 2));
  CHECK(multitask_kernel(0, 1, 2, 3, mx) == doctest::Approx(0.25 * 2));
  const auto ind = CovStructure::independent({bm}, {1.0, 3.0});
  CHECK(multitask_kernel(0, 1, 2, 2, ind) == 0.0);
  CHECK(multitask_kernel(1, 1, 2, 2, ind) == doctest::Approx(18.0));
}

TEST_CASE("joint covariance equals the Kronecker form on equidistant grids") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.3, 2.0);
  for (std::size_t p : {1u, 2u, 3u}) {
    for (std::size_t n : {1u, 2u, 5u}) {
      for (int fam = 0; fam < 2; ++fam) {
        const auto km = fam ? KernelSpec::exponentiated_quadratic(u(rng)) : KernelSpec::brownian();
        const auto kx = fam ? KernelSpec::exponentiated_quadratic(u(rng)) : KernelSpec::brownian();
        const double smu = u(rng), sx = u(rng);
        const auto grid = TimeGrid::regular(n, 0.5, 0.75);
        const auto s = CovStructure::exchangeable(km, kx, smu, sx);
        const MatrixXd cm = gram(km, grid), cx = gram(kx, grid);
        const auto pp = static_cast<Eigen::Index>(p);
        const MatrixXd oracle = smu * smu * kron(MatrixXd::Ones(pp, pp), cm) +
                                sx * sx * kron(MatrixXd::Identity(pp, pp), cx);
        CHECK((assemble_joint_cov(s, grid, p) - oracle).cwiseAbs().maxCoeff() <= 1e-12);
      }
    }
  }
}

TEST_CASE("joint covariance special cases") {
  const auto bm = KernelSpec::brownian();
  const auto grid = TimeGrid::regular(4);
  const auto s1 = CovStructure::exchangeable(bm, KernelSpec::exponentiated_quadratic(2.0), 0.7, 1.1);
  const MatrixXd single = assemble_joint_cov(s1, grid, 1);
  const MatrixXd want = 0.49 * gram(bm, grid) +
                        1.21 * gram(KernelSpec::exponentiated_quadratic(2.0), grid);
  CHECK((single - want).cwiseAbs().maxCoeff() < 1e-14);

  const auto s3 = CovStructure::exchangeable(bm, bm, std::sqrt(2.0), 1.0);
  const MatrixXd c3 = assemble_joint_cov(s3, TimeGrid({1.0}), 3);
  const MatrixXd want3 = 2.0 * MatrixXd::Ones(3, 3) + MatrixXd::Identity(3, 3);
  CHECK((c3 - want3).cwiseAbs().maxCoeff() < 1e-14);

  const auto ind = CovStructure::independent({bm}, {1.0, 2.0, 0.5});
  const MatrixXd ci = assemble_joint_cov(ind, grid, 3);
  for (Eigen::Index a = 0; a < 3; ++a)
    for (Eigen::Index b = 0; b < 3; ++b)
      if (a != b) CHECK(ci.block(a * 4, b * 4, 4, 4).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(assemble_joint_cov(s3, TimeGrid::regular(10), 3, 20), ConfigError);
}

TEST_CASE("random structures: PSD, symmetry and entrywise agreement") {
  std::mt19937_64 rng(123);
  for (int rep = 0; rep < 200; ++rep) {
    const auto c = random_case(rng, 64);
    const MatrixXd k = assemble_joint_cov(c.s, c.grid, c.p);
    const auto pts = stacked_points(c.grid, c.p);
    REQUIRE(static_cast<std::size_t>(k.rows()) == pts.size());
    double worst = 0.0;
    for (std::size_t a = 0; a < pts.size(); ++a)
      for (std::size_t b = 0; b < pts.size(); ++b)
        worst = std::max(worst, std::abs(k(a, b) - multitask_kernel(pts[a].task, pts[b].task,
                                                                    pts[a].time, pts[b].time, c.s)));
    CHECK(worst == 0.0);
    CHECK((k - k.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const MatrixXd kj = k + 1e-8 * k.diagonal().mean() * MatrixXd::Identity(k.rows(), k.cols());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(kj, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * kj.diagonal().mean());
  }
}

TEST_CASE("exchangeable covariance is permutation equivariant") {
  std::mt19937_64 rng(8);
  const auto s = CovStructure::exchangeable(KernelSpec::brownian(),
                                            KernelSpec::exponentiated_quadratic(1.5), 0.8, 0.6);
  const auto grid = TimeGrid({0.5, 1.0, 2.5});
  const std::size_t p = 4;
  const MatrixXd k = assemble_joint_cov(s, grid, p);
  std::vector<std::size_t> perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  for (int rep = 0; rep < 10; ++rep) {
    std::shuffle(perm.begin(), perm.end(), rng);
    const Eigen::Index n = 3;
    MatrixXd permuted(k.rows(), k.cols());
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = 0; b < p; ++b)
        permuted.block(a * n, b * n, n, n) = k.block(perm[a] * n, perm[b] * n, n, n);
    CHECK((permuted - k).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("increment covariance") {
  const auto bm = KernelSpec::brownian();
  MatrixXd want(2, 2);
  want << 2, 1, 1, 2;
  CHECK((assemble_increment_cov(CovStructure::exchangeable(bm, bm, 1, 1), 2, 1.0) - want)
            .cwiseAbs()
            .maxCoeff() < 1e-15);
  const MatrixXd ind = assemble_increment_cov(CovStructure::independent({bm}, {1.0, 2.0, 3.0}), 3, 0.5);
  CHECK((ind - VectorXd((VectorXd(3) << 0.5, 2.0, 4.5).finished()).asDiagonal().toDenseMatrix())
            .cwiseAbs()
            .maxCoeff() < 1e-15);
  want << 2, 1, 1, 5;
  CHECK((assemble_increment_cov(CovStructure::multiple_exchangeable(bm, {bm}, 1.0, {1.0, 2.0}), 2, 1.0) -
         want)
            .cwiseAbs()
            .maxCoeff() < 1e-15);
  CHECK_THROWS_AS(
      assemble_increment_cov(CovStructure::exchangeable(bm, KernelSpec::exponentiated_quadratic(1), 1, 1), 2, 1),
      ConfigError);
}

TEST_CASE("intra-class correlation") {
  CHECK(intra_class_rho(1, 1) == 0.5);
  CHECK(intra_class_rho(1000, 1) < 1e-5);
  CHECK(intra_class_rho(0, 1) == 1.0);
  CHECK_THROWS_AS(intra_class_rho(0, 0), ConfigError);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.01, 5.0), scale(1e-3, 1e3);
  for (int rep = 0; rep < 100; ++rep) {
    const double a = u(rng), b = u(rng), c = scale(rng);
    const double r = intra_class_rho(a, b);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    CHECK(intra_class_rho(c * a, c * b) == doctest::Approx(r).epsilon(1e-12));
  }
}
