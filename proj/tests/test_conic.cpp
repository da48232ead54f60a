#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "roodso/conic/program.hpp"
#include "support.hpp"

using namespace roodso;
using namespace roodso::conic;
using testing_support::gaussian_matrix;

namespace {

SparseMatrix sparse(const Matrix& m) { return m.sparseView(); }

}  // namespace

TEST(Ipm, TinyLp) {
  ConicProgram p(1);
  p.objective()(0) = 1.0;
  p.add_inequality({{0, -1.0}}, -1.0);  // x >= 1
  const SolveResult r = solve(p);
  ASSERT_EQ(r.status, Status::optimal);
  EXPECT_NEAR(r.primal(0), 1.0, 1e-7);
  EXPECT_NEAR(r.objective, 1.0, 1e-7);
}

TEST(Ipm, NormOverHalfspace) {
  ConicProgram p(2);
  p.add_norm_term({1.0, 0, Matrix::Identity(2, 2), Vector()});
  p.add_inequality({{0, -1.0}}, -3.0);
  const SolveResult r = solve(p);
  ASSERT_EQ(r.status, Status::optimal);
  EXPECT_NEAR(r.objective, 3.0, 1e-6);
  EXPECT_NEAR(r.primal(0), 3.0, 1e-5);
  EXPECT_NEAR(r.primal(1), 0.0, 1e-5);
}

TEST(Ipm, Infeasible) {
  ConicProgram p(1);
  p.objective()(0) = 1.0;
  p.add_inequality({{0, 1.0}}, 0.0);
  p.add_inequality({{0, -1.0}}, -1.0);
  EXPECT_EQ(solve(p).status, Status::infeasible);
}

TEST(Ipm, Unbounded) {
  ConicProgram p(2);
  p.objective() << -1.0, 0.0;
  p.add_inequality({{1, 1.0}}, 1.0);
  p.add_inequality({{0, -1.0}}, 0.0);
  EXPECT_EQ(solve(p).status, Status::unbounded);
}

TEST(Ipm, RandomLpKkt) {
  // feasible by construction (x0 strictly inside), bounded by a box
  std::mt19937_64 rng(31);
  for (int t = 0; t < 20; ++t) {
    const Index n = 5 + t % 6, m = 12 + t;
    const Matrix g0 = gaussian_matrix(m, n, rng);
    const Vector x0 = gaussian_matrix(n, 1, rng);
    Matrix g(m + 2 * n, n);
    g << g0, Matrix::Identity(n, n), -Matrix::Identity(n, n);
    Vector h(m + 2 * n);
    h << g0 * x0 + Vector::Constant(m, 1.0), Vector::Constant(2 * n, 5.0 + x0.cwiseAbs().maxCoeff());
    ConeProblem cp;
    cp.c = gaussian_matrix(n, 1, rng);
    cp.G = sparse(g);
    cp.h = h;
    cp.A = SparseMatrix(0, n);
    cp.b = Vector(0);
    cp.lp_dim = g.rows();
    const IpmResult r = solve_cone_problem(cp);
    ASSERT_EQ(r.status, Status::optimal) << t;
    const Vector slack = h - g * r.x;
    EXPECT_GE(slack.minCoeff(), -1e-7);
    EXPECT_GE(r.z.minCoeff(), -1e-9);
    EXPECT_LE((cp.c + g.transpose() * r.z).norm(), 1e-6 * (1 + cp.c.norm()));
    EXPECT_LE(std::abs(r.z.dot(slack)), 1e-6 * (1 + std::abs(cp.c.dot(r.x))));
  }
}

TEST(Ipm, LinearOverBall) {
  std::mt19937_64 rng(32);
  for (int t = 0; t < 10; ++t) {
    const Index n = 2 + t;
    ConicProgram p(n);
    p.objective() = gaussian_matrix(n, 1, rng);
    SocConstraint ball;
    ball.V = Matrix::Identity(n, n);
    ball.a0 = 1.0;
    p.add_soc_constraint(ball);
    const Vector c = p.objective();
    const SolveResult r = solve(p);
    ASSERT_EQ(r.status, Status::optimal);
    EXPECT_NEAR(r.objective, -c.norm(), 1e-6 * (1 + c.norm()));
    EXPECT_LE((r.primal + c / c.norm()).norm(), 1e-4);
  }
}

TEST(Ipm, ProjectionOntoAffineSet) {
  // min ||x - q|| s.t. A x = b has the closed form q - A^T (A A^T)^{-1} (A q - b)
  std::mt19937_64 rng(33);
  for (int t = 0; t < 10; ++t) {
    const Index n = 6, k = 1 + t % 4;
    const Matrix a = gaussian_matrix(k, n, rng);
    const Vector b = gaussian_matrix(k, 1, rng), q = gaussian_matrix(n, 1, rng);
    const Vector proj = q - a.transpose() * (a * a.transpose()).ldlt().solve(a * q - b);
    ConicProgram p(n);
    p.add_norm_term({1.0, 0, Matrix::Identity(n, n), -q});
    for (Index i = 0; i < k; ++i) {
      SparseRow row;
      for (Index j = 0; j < n; ++j) row.emplace_back(j, a(i, j));
      p.add_equality(row, b(i));
    }
    const SolveResult r = solve(p);
    ASSERT_EQ(r.status, Status::optimal);
    EXPECT_NEAR(r.objective, (proj - q).norm(), 1e-6);
    EXPECT_LE((r.primal - proj).norm(), 1e-4);
  }
}

TEST(Ipm, CappedNormTerm) {
  // the cap turns the norm into a constraint ||x - q|| <= 1 on top of the objective
  ConicProgram p(2);
  p.objective() << 1.0, 0.0;
  Vector q(2);
  q << 0, 0;
  NormTerm t{0.0, 0, Matrix::Identity(2, 2), q, 1.0};
  p.add_norm_term(t);
  const SolveResult r = solve(p);
  ASSERT_EQ(r.status, Status::optimal);
  EXPECT_NEAR(r.objective, -1.0, 1e-6);
}

TEST(Ipm, Trace) {
  ConicProgram p(1);
  p.objective()(0) = 1.0;
  p.add_inequality({{0, -1.0}}, -1.0);
  std::ostringstream os;
  IpmSettings s;
  s.trace = &os;
  solve(p, s);
  EXPECT_NE(os.str().find("pcost"), std::string::npos);
}

TEST(Program, RejectsBadIndices) {
  ConicProgram p(2);
  EXPECT_THROW(p.add_inequality({{2, 1.0}}, 0.0), InputError);
  EXPECT_THROW(p.add_norm_term({1.0, 1, Matrix::Identity(2, 2), Vector()}), InputError);
}

TEST(Program, EvaluateAndViolation) {
  ConicProgram p(2);
  p.objective() << 1.0, 2.0;
  p.constant() = 0.5;
  p.add_norm_term({3.0, 0, Matrix::Identity(2, 2), Vector()});
  p.add_inequality({{0, 1.0}}, 1.0);
  Vector z(2);
  z << 3.0, 4.0;
  EXPECT_DOUBLE_EQ(p.evaluate(z), 3.0 + 8.0 + 0.5 + 15.0);
  EXPECT_DOUBLE_EQ(p.max_violation(z), 2.0);
}

TEST(Program, ConeFormLayout) {
  ConicProgram p(3);
  p.add_inequality({{0, 1.0}}, 1.0);
  p.add_norm_term({2.0, 1, Matrix::Identity(2, 2), Vector()});
  const ConeProblem cp = p.to_cone_problem();
  EXPECT_EQ(cp.num_vars(), 4);
  EXPECT_EQ(cp.lp_dim, 1);
  ASSERT_EQ(cp.soc_dims.size(), 1u);
  EXPECT_EQ(cp.soc_dims[0], 3);
  EXPECT_EQ(cp.c(3), 2.0);
  cp.validate();
}
