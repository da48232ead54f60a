#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "roodso/pipeline.hpp"
#include "support.hpp"

using namespace roodso;
using testing_support::column;
using testing_support::gaussian_matrix;

namespace {

Matrix two_by_two(double k) {
  Matrix g(2, 2);
  g << 1, k, k, 1;
  return g;
}

SMCConfig with_nu(double nu) {
  SMCConfig c;
  c.nu = nu;
  return c;
}

Matrix random_gram(Index m, std::mt19937_64& rng) {
  const Matrix f = gaussian_matrix(m, m + 2, rng);
  return f * f.transpose() / double(m + 2);
}

// Brute-force maximum of -a'Ka + a'diag(K) over the capped simplex on a grid
double grid_max(const Matrix& k, double cap, double step) {
  const Index m = k.rows();
  const int n = int(std::lround(1.0 / step));
  double best = -1e300;
  std::vector<int> idx(static_cast<std::size_t>(m - 1), 0);
  while (true) {
    int used = 0;
    for (int v : idx) used += v;
    if (used <= n) {
      Vector a(m);
      for (Index i = 0; i + 1 < m; ++i) a(i) = idx[static_cast<std::size_t>(i)] * step;
      a(m - 1) = (n - used) * step;
      if ((a.array() <= cap + 1e-12).all()) best = std::max(best, -a.dot(k * a) + a.dot(k.diagonal()));
    }
    std::size_t p = 0;
    while (p < idx.size() && ++idx[p] > n) idx[p++] = 0;
    if (p == idx.size()) break;
  }
  return best;
}

}  // namespace

TEST(CappedSimplex, FeasiblePointUnchanged) {
  Vector v(3);
  v << 0.2, 0.5, 0.3;
  EXPECT_LE((project_capped_simplex(v, 0.6) - v).norm(), 1e-12);
}

TEST(CappedSimplex, ClipsAtCap) {
  const Vector p = project_capped_simplex(Eigen::Vector2d(10, 0), 1.0);
  EXPECT_NEAR(p(0), 1.0, 1e-12);
  EXPECT_NEAR(p(1), 0.0, 1e-12);
}

TEST(CappedSimplex, EmptySetThrows) {
  EXPECT_THROW(project_capped_simplex(Eigen::Vector3d(1, 1, 1), 0.3), InfeasibleError);
}

TEST(CappedSimplex, VariationalInequality) {
  // p is the projection iff (v - p).(y - p) <= 0 for every feasible y
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 50; ++t) {
    const Index m = 2 + t % 7;
    const double cap = (1.0 + 2.0 * u(rng)) / double(m);
    const Vector v = gaussian_matrix(m, 1, rng, 0, 2);
    const Vector p = project_capped_simplex(v, cap);
    ASSERT_NEAR(p.sum(), 1.0, 1e-10);
    ASSERT_GE(p.minCoeff(), -1e-14);
    ASSERT_LE(p.maxCoeff(), cap + 1e-14);
    for (int s = 0; s < 20; ++s) {
      Vector y = gaussian_matrix(m, 1, rng).array().abs();
      y = project_capped_simplex(y, cap);
      EXPECT_LE((v - p).dot(y - p), 1e-9);
    }
  }
}

TEST(DualQp, SymmetricPair) {
  for (double k : {-0.9, 0.0, 0.3, 0.95}) {
    for (double nu : {0.1, 0.25, 0.5}) {
      const Vector a = solve_dual_qp(two_by_two(k), with_nu(nu));
      EXPECT_NEAR(a(0), 0.5, 1e-6);
      EXPECT_NEAR(a(1), 0.5, 1e-6);
    }
  }
}

TEST(DualQp, IdentityCentroid) {
  const Vector a = solve_dual_qp(Matrix::Identity(3, 3), with_nu(1.0 / 3.0 + 1e-12));
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(a(i), 1.0 / 3.0, 1e-6);
}

TEST(DualQp, MatchesGridSearch) {
  std::mt19937_64 rng(17);
  // nu chosen so the cap lands on the grid
  const double nus[] = {0.5, 0.625, 0.8333333333333334};
  for (int t = 0; t < 6; ++t) {
    const Matrix k = random_gram(4, rng);
    const SMCConfig cfg = with_nu(nus[t % 3]);
    const Vector a = solve_dual_qp(k, cfg);
    const double obj = smc_dual_objective(k, a);
    const double grid = grid_max(k, cfg.cap(4), 0.01);
    EXPECT_GE(obj, grid - 1e-12);
    EXPECT_NEAR(obj, grid, 1e-3);
  }
}

TEST(DualQp, KktResidualSmall) {
  std::mt19937_64 rng(18);
  for (int t = 0; t < 10; ++t) {
    const Matrix k = random_gram(12, rng);
    const SMCConfig cfg = with_nu(0.3);
    const Vector a = solve_dual_qp(k, cfg);
    EXPECT_LE(smc_kkt_residual(k, a, cfg.cap(12)), cfg.qp_tolerance);
  }
}

TEST(DualQp, Errors) {
  EXPECT_THROW(solve_dual_qp(Matrix::Identity(1, 1), with_nu(0.5)), InputError);
  SMCConfig bad;
  bad.nu = 1.0;
  EXPECT_THROW(solve_dual_qp(Matrix::Identity(2, 2), bad), InputError);
  SMCConfig tight;
  tight.max_qp_iters = 1;
  tight.qp_tolerance = 1e-15;
  std::mt19937_64 rng(2);
  EXPECT_THROW(solve_dual_qp(random_gram(30, rng), tight), SolverError);
}

TEST(Classify, NoneAtCap) {
  const SupportSets s = classify_supports(Eigen::Vector2d(0.5, 0.5), with_nu(0.25));
  EXPECT_EQ(s.sm, (std::vector<Index>{0, 1}));
  EXPECT_EQ(s.bsm, (std::vector<Index>{0, 1}));
  EXPECT_TRUE(s.esm.empty());
}

TEST(Classify, IndexAtCap) {
  const SMCConfig cfg = with_nu(0.5);  // M=4, cap 0.5
  Vector a(4);
  a << 0.5, 0.3, 0.2, 0.0;
  const SupportSets s = classify_supports(a, cfg);
  EXPECT_EQ(s.esm, (std::vector<Index>{0}));
  EXPECT_EQ(s.bsm, (std::vector<Index>{1, 2}));
  EXPECT_EQ(s.sm.size(), 3u);
}

TEST(CenterDistance, SymmetricPair) {
  for (double k : {0.0, 0.4, 0.9}) {
    const Vector a = Eigen::Vector2d(0.5, 0.5);
    EXPECT_NEAR(center_distance_sq(a, two_by_two(k), 0), (1 - k) / 2, 1e-14);
    EXPECT_NEAR(center_distance_sq(a, two_by_two(k), 1), (1 - k) / 2, 1e-14);
  }
}

TEST(Radius, SymmetricPair) {
  const SMCSolution s = fit_gram(KernelSpec{}, two_by_two(0.3), with_nu(0.25));
  EXPECT_EQ(s.bsm.size(), 2u);
  EXPECT_NEAR(s.radius_sq, 0.35, 1e-8);
}

TEST(Radius, IdenticalSingletons) {
  std::vector<Dataset> ds(4, Dataset(column({1.5})));
  const SMCSolution s = fit(KernelSpec{}, SourceCollection(ds), with_nu(0.5));
  EXPECT_LE(std::abs(s.radius_sq), 1e-10);
}

TEST(Radius, EmptySupportThrows) {
  EXPECT_THROW(radius_squared(Eigen::Vector2d(0, 0), two_by_two(0.1), {}, {}), InputError);
}

TEST(Fit, TwoIdenticalSources) {
  std::mt19937_64 rng(1);
  const Matrix s = gaussian_matrix(30, 2, rng);
  const SMCSolution sol = fit(KernelSpec{}, SourceCollection({Dataset(s), Dataset(s)}), with_nu(0.5));
  EXPECT_LE(sol.radius_sq, 1e-8);
  EXPECT_NEAR(sol.alpha(0), 0.5, 1e-6);
  EXPECT_NEAR(sol.alpha(1), 0.5, 1e-6);
}

TEST(Fit, SeparatedSourcesBothSupport) {
  std::mt19937_64 rng(6);
  const SourceCollection c({Dataset(gaussian_matrix(200, 2, rng, 0.0)), Dataset(gaussian_matrix(200, 2, rng, 5.0))});
  const SMCSolution s = fit(KernelSpec{KernelFamily::rbf, median_heuristic(c)}, c, with_nu(0.4));
  EXPECT_EQ(s.sm.size(), 2u);
}

TEST(Fit, NuPropertyOnSyntheticSources) {
  MetaGenConfig meta;
  meta.sources = 20;
  const SourceCollection c = MetaGenerator(meta, 42).sources();
  const SMCSolution s = fit(KernelSpec{KernelFamily::rbf, median_heuristic(c)}, c, with_nu(0.2));
  EXPECT_LE(s.esm.size(), 4u);
  EXPECT_GE(s.sm.size(), 4u);
}

TEST(Fit, InteriorMeasuresInsideBall) {
  MetaGenConfig meta;
  meta.sources = 15;
  meta.n_lo = 30;
  meta.n_hi = 60;
  const SourceCollection c = MetaGenerator(meta, 7).sources();
  const KernelSpec spec{KernelFamily::rbf, median_heuristic(c)};
  const SMCSolution s = fit(spec, c, with_nu(0.3));
  for (Index i = 0; i < s.alpha.size(); ++i) {
    if (std::find(s.sm.begin(), s.sm.end(), i) != s.sm.end()) continue;
    EXPECT_LE(center_distance_sq(s.alpha, s.gram, i), s.radius_sq + 1e-8);
    EXPECT_TRUE(membership(s, spec, c, c[static_cast<std::size_t>(i)]).inside);
  }
}

TEST(Fit, TooFewSourcesThrows) {
  EXPECT_THROW(fit(KernelSpec{}, SourceCollection({Dataset(column({1, 2}))}), with_nu(0.5)), InputError);
}

TEST(Membership, BoundaryMeasureHasZeroSlack) {
  MetaGenConfig meta;
  meta.sources = 10;
  meta.n_lo = 40;
  meta.n_hi = 80;
  const SourceCollection c = MetaGenerator(meta, 9).sources();
  const KernelSpec spec{KernelFamily::rbf, median_heuristic(c)};
  const SMCSolution s = fit(spec, c, with_nu(0.3));
  ASSERT_FALSE(s.bsm.empty());
  double dmin = 1e300, dmax = -1e300;
  for (Index i : s.bsm) {
    const double d = membership(s, spec, c, c[static_cast<std::size_t>(i)]).distance_sq;
    dmin = std::min(dmin, d);
    dmax = std::max(dmax, d);
  }
  // all boundary distances coincide, so the median radius sits on each of them
  EXPECT_LE(dmax - dmin, 1e-6);
  const Index first = s.bsm.front();
  EXPECT_LE(std::abs(membership(s, spec, c, c[static_cast<std::size_t>(first)]).slack), 1e-6);
}

TEST(Membership, FarCandidateOutside) {
  MetaGenConfig meta;
  meta.sources = 10;
  meta.n_lo = 40;
  meta.n_hi = 80;
  const SourceCollection c = MetaGenerator(meta, 10).sources();
  const KernelSpec spec{KernelFamily::rbf, median_heuristic(c)};
  const SMCSolution s = fit(spec, c, with_nu(0.3));
  const Matrix far = c[0].samples().array() + 100.0 * spec.bandwidth;
  EXPECT_FALSE(membership(s, spec, c, far).inside);
}

TEST(SmcJson, HasFields) {
  const SMCSolution s = fit_gram(KernelSpec{}, two_by_two(0.3), with_nu(0.25));
  const auto j = to_json(s);
  EXPECT_TRUE(j.contains("alpha"));
  EXPECT_TRUE(j.contains("radius_sq"));
}
