#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "roodso/kernel.hpp"
#include "support.hpp"

using namespace roodso;
using testing_support::column;
using testing_support::gaussian_matrix;
using testing_support::row;

namespace {

const KernelSpec rbf1{KernelFamily::rbf, 1.0};

// plain double loop, no shared code with the library
double naive_kernel(const KernelSpec& s, const Matrix& a, Index i, const Matrix& b, Index j) {
  double d2 = 0;
  for (Index k = 0; k < a.cols(); ++k) d2 += (a(i, k) - b(j, k)) * (a(i, k) - b(j, k));
  return s.family == KernelFamily::rbf ? std::exp(-d2 / (2 * s.bandwidth * s.bandwidth))
                                       : std::exp(-std::sqrt(d2) / s.bandwidth);
}

}  // namespace

TEST(KernelEval, RbfDiagonalIsOne) {
  EXPECT_DOUBLE_EQ(kernel_eval(rbf1, Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0)), 1.0);
}

TEST(KernelEval, RbfAtDistanceTwo) {
  EXPECT_NEAR(kernel_eval(rbf1, Eigen::Vector2d(0, 0), Eigen::Vector2d(2, 0)), std::exp(-2.0), 1e-15);
  EXPECT_NEAR(std::exp(-2.0), 0.135335, 1e-6);
}

TEST(KernelEval, Laplace) {
  const KernelSpec lap{KernelFamily::laplace, 1.0};
  Vector x(1), y(1);
  x << 0;
  y << 1;
  EXPECT_NEAR(kernel_eval(lap, x, y), 0.367879, 1e-6);
}

TEST(KernelEval, DimensionMismatchThrows) {
  EXPECT_THROW(kernel_eval(rbf1, Eigen::Vector2d(0, 0), Eigen::Vector3d(0, 0, 0)), InputError);
}

TEST(KernelEval, BadBandwidthThrows) {
  const KernelSpec bad{KernelFamily::rbf, 0.0};
  EXPECT_THROW(kernel_eval(bad, Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0)), InputError);
}

TEST(KernelEval, FamilyNames) {
  EXPECT_EQ(kernel_family_from_string("rbf"), KernelFamily::rbf);
  EXPECT_EQ(kernel_family_from_string("laplace"), KernelFamily::laplace);
  EXPECT_THROW(kernel_family_from_string("poly"), InputError);
}

TEST(MedianHeuristic, TwoPoints) {
  SourceCollection c({Dataset(column({0, 2}))});
  EXPECT_DOUBLE_EQ(median_heuristic(c), 2.0);
}

TEST(MedianHeuristic, ThreePoints) {
  SourceCollection c({Dataset(column({0, 1})), Dataset(column({3}))});
  EXPECT_DOUBLE_EQ(median_heuristic(c), 2.0);
}

TEST(MedianHeuristic, MatchesSortedPairwiseDistances) {
  std::mt19937_64 rng(11);
  const Matrix pts = gaussian_matrix(57, 3, rng);
  std::vector<double> d;
  for (Index i = 0; i < pts.rows(); ++i)
    for (Index j = i + 1; j < pts.rows(); ++j) d.push_back((pts.row(i) - pts.row(j)).norm());
  std::sort(d.begin(), d.end());
  const std::size_t k = d.size();
  const double med = k % 2 ? d[k / 2] : 0.5 * (d[k / 2 - 1] + d[k / 2]);
  EXPECT_NEAR(median_pairwise_distance(pts), med, 1e-12);
}

TEST(MedianHeuristic, GaussianConcentration) {
  int inside = 0;
  for (int s = 0; s < 40; ++s) {
    std::mt19937_64 rng(1000 + s);
    SourceCollection c({Dataset(gaussian_matrix(200, 2, rng))});
    const double sigma = median_heuristic(c);
    if (sigma >= 1.5 && sigma <= 2.3) ++inside;
  }
  EXPECT_GE(inside, 38);
}

TEST(MedianHeuristic, Errors) {
  EXPECT_THROW(median_heuristic(SourceCollection({Dataset(column({1}))})), InputError);
  EXPECT_THROW(median_heuristic(SourceCollection({Dataset(column({1, 1, 1}))})), DegenerateDataError);
}

TEST(EmbeddingInner, Singletons) {
  EXPECT_NEAR(embedding_inner(rbf1, row({0, 0}), row({2, 0})), std::exp(-2.0), 1e-15);
  EXPECT_DOUBLE_EQ(embedding_inner(rbf1, row({1, 1}), row({1, 1})), 1.0);
}

TEST(EmbeddingInner, TwoTermAverage) {
  EXPECT_NEAR(embedding_inner(rbf1, column({0, 2}), column({1})), 0.606531, 1e-6);
}

TEST(GramMatrix, DistinctSingletons) {
  SourceCollection c({Dataset(row({0, 0})), Dataset(row({2, 0}))});
  const Matrix k = gram_matrix(rbf1, c);
  EXPECT_DOUBLE_EQ(k(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(k(1, 1), 1.0);
  EXPECT_NEAR(k(0, 1), std::exp(-2.0), 1e-15);
  EXPECT_EQ(k(0, 1), k(1, 0));
}

TEST(GramMatrix, IdenticalSourcesRankOne) {
  std::mt19937_64 rng(3);
  const Matrix s = gaussian_matrix(20, 2, rng);
  SourceCollection c({Dataset(s), Dataset(s), Dataset(s)});
  const Matrix k = gram_matrix(rbf1, c);
  EXPECT_LE((k.array() - k(0, 0)).abs().maxCoeff(), 1e-12);
  Eigen::SelfAdjointEigenSolver<Matrix> es(k);
  EXPECT_LE(es.eigenvalues()(1), 1e-10);
}

TEST(GramMatrix, MatchesDoubleLoop) {
  std::mt19937_64 rng(5);
  std::vector<Dataset> ds;
  for (int i = 0; i < 3; ++i) ds.emplace_back(gaussian_matrix(7 + 3 * i, 2, rng, i));
  SourceCollection c(ds);
  for (KernelSpec spec : {KernelSpec{KernelFamily::rbf, 0.8}, KernelSpec{KernelFamily::laplace, 1.3}}) {
    const Matrix k = gram_matrix(spec, c);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const Matrix& a = c[i].samples();
        const Matrix& b = c[j].samples();
        double sum = 0;
        for (Index p = 0; p < a.rows(); ++p)
          for (Index q = 0; q < b.rows(); ++q) sum += naive_kernel(spec, a, p, b, q);
        EXPECT_NEAR(k(i, j), sum / double(a.rows() * b.rows()), 1e-12);
      }
    }
  }
}

TEST(Mmd, SelfIsZero) {
  std::mt19937_64 rng(8);
  const Matrix a = gaussian_matrix(30, 2, rng);
  EXPECT_NEAR(mmd(rbf1, a, a), 0.0, 1e-8);
}

TEST(Mmd, SingletonClosedForm) {
  const double t = 2.0;
  EXPECT_NEAR(mmd(rbf1, column({0}), column({t})), std::sqrt(2 - 2 * std::exp(-t * t / 2)), 1e-12);
  EXPECT_NEAR(mmd(rbf1, column({0}), column({t})), 1.315, 1e-3);
}

TEST(CrossKernelBlock, Examples) {
  EXPECT_DOUBLE_EQ(cross_kernel_block(rbf1, row({3, 4}), row({3, 4}))(0, 0), 1.0);
  const Matrix k = cross_kernel_block(rbf1, column({0}), column({0, 2}));
  ASSERT_EQ(k.rows(), 1);
  ASSERT_EQ(k.cols(), 2);
  EXPECT_DOUBLE_EQ(k(0, 0), 1.0);
  EXPECT_NEAR(k(0, 1), std::exp(-2.0), 1e-15);
}

TEST(CrossKernelBlock, MatchesNaive) {
  std::mt19937_64 rng(9);
  const Matrix a = gaussian_matrix(13, 3, rng), b = gaussian_matrix(600, 3, rng);
  const Matrix k = cross_kernel_block(rbf1, a, b);
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) ASSERT_NEAR(k(i, j), naive_kernel(rbf1, a, i, b, j), 1e-13);
}

TEST(PsdFactor, Identity) {
  const PsdFactor f = psd_factor(Matrix::Identity(4, 4));
  EXPECT_EQ(f.jitter, 0.0);
  EXPECT_LE((f.lower - Matrix::Identity(4, 4)).norm(), 1e-15);
}

TEST(PsdFactor, Diagonal) {
  Matrix a(2, 2);
  a << 4, 0, 0, 9;
  const PsdFactor f = psd_factor(a);
  EXPECT_NEAR(f.lower(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(f.lower(1, 1), 3.0, 1e-15);
  EXPECT_EQ(f.lower(0, 1), 0.0);
}

TEST(PsdFactor, RankDeficientGetsJitter) {
  const Matrix pts = column({0, 0, 1});
  const Matrix k = cross_kernel_block(rbf1, pts, pts);
  const PsdFactor f = psd_factor(k);
  EXPECT_GT(f.jitter, 0.0);
  EXPECT_LE(f.jitter, 1e-6);
  Matrix shifted = k;
  shifted.diagonal().array() += f.jitter;
  EXPECT_LE((f.lower * f.lower.transpose() - shifted).norm(), 1e-12);
}

TEST(PsdFactor, IndefiniteThrows) {
  Matrix a(2, 2);
  a << 1, 0, 0, -1;
  EXPECT_THROW(psd_factor(a), IllConditionedError);
}

TEST(PsdFactor, AsymmetricThrows) {
  Matrix a(2, 2);
  a << 1, 0.5, 0, 1;
  EXPECT_THROW(psd_factor(a), InputError);
}

TEST(IsPsd, Basic) {
  EXPECT_TRUE(is_psd(Matrix::Identity(3, 3)));
  Matrix a(2, 2);
  a << 1, 2, 2, 1;
  EXPECT_FALSE(is_psd(a));
}

TEST(Nystrom, ReproducesKernelOnCandidates) {
  std::mt19937_64 rng(21);
  const Matrix cand = gaussian_matrix(40, 2, rng);
  const NystromBasis nb = NystromBasis::build(rbf1, cand, 1e-12);
  const Matrix f = nb.features(cand);
  const Matrix k = cross_kernel_block(rbf1, cand, cand);
  EXPECT_LE((f * f.transpose() - k).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Nystrom, ForcedPivotsComeFirst) {
  std::mt19937_64 rng(22);
  const Matrix cand = gaussian_matrix(25, 2, rng);
  const NystromBasis nb = NystromBasis::build(rbf1, cand, 1e-12, 5);
  ASSERT_GE(nb.rank(), 5);
  std::vector<Index> head(nb.pivot_indices().begin(), nb.pivot_indices().begin() + 5);
  std::sort(head.begin(), head.end());
  EXPECT_EQ(head, (std::vector<Index>{0, 1, 2, 3, 4}));
}

TEST(Nystrom, ForcedBlockKeepsFullRank) {
  // many near-duplicate forced points must not cut the rank short
  std::mt19937_64 rng(23);
  const Matrix cand = gaussian_matrix(1000, 2, rng);
  const NystromBasis free = NystromBasis::build(rbf1, cand, 1e-12);
  const NystromBasis forced = NystromBasis::build(rbf1, cand, 1e-12, 750);
  EXPECT_GE(forced.rank(), free.rank() - 2);
  const Matrix f = forced.features(cand);
  const Matrix k = cross_kernel_block(rbf1, cand, cand);
  EXPECT_LE((f * f.transpose() - k).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Nystrom, DuplicatesDoNotRaiseRank) {
  const Matrix cand = column({0, 0, 1, 1, 2});
  const NystromBasis nb = NystromBasis::build(rbf1, cand, 1e-12);
  EXPECT_EQ(nb.rank(), 3);
}
