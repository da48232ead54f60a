#pragma once

// Primal-dual interior-point method for
//
//   min c^T x  s.t.  A x = b,  G x + s = h,  s in K,
//
// K = nonnegative orthant (first `lp_dim` rows of G) times second-order cones.
// Homogeneous self-dual embedding, Nesterov-Todd scaling, Mehrotra
// predictor-corrector. Newton systems are reduced to G^T W^-2 G (equalities by
// Schur complement) and solved by sparse Cholesky with iterative refinement.

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "roodso/common.hpp"

namespace roodso::conic {

struct ConeProblem {
  Vector c;
  SparseMatrix A;  // p x n
  Vector b;
  SparseMatrix G;  // m x n
  Vector h;
  Index lp_dim = 0;
  std::vector<Index> soc_dims;

  Index num_vars() const { return c.size(); }
  Index degree() const { return lp_dim + static_cast<Index>(soc_dims.size()); }

  void validate() const {
    const Index n = c.size();
    require(A.rows() == 0 || A.cols() == n, "cone problem: A has wrong column count");
    require(G.cols() == n, "cone problem: G has wrong column count");
    require(A.rows() == b.size(), "cone problem: A and b disagree");
    require(G.rows() == h.size(), "cone problem: G and h disagree");
    Index m = lp_dim;
    for (Index q : soc_dims) {
      require(q >= 1, "cone problem: empty second-order cone");
      m += q;
    }
    require(m == G.rows(), "cone problem: cone dimensions do not match G");
    require(c.allFinite() && b.allFinite() && h.allFinite(), "cone problem: non-finite data");
  }
};

enum class Status { optimal, infeasible, unbounded, iteration_limit };

inline std::string to_string(Status s) {
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
    case Status::iteration_limit: return "iteration_limit";
  }
  return "unknown";
}

struct IpmSettings {
  double feastol = 1e-8;
  double abstol = 1e-8;
  double reltol = 1e-8;
  long max_iters = 200;
  double time_limit = 1800.0;
  int refinement_steps = 10;
  // A stalled iterate is accepted (flagged reduced_accuracy) below this.
  double stall_tol = 1e-6;
  std::ostream* trace = nullptr;  // one line per iteration when set
};

struct IpmResult {
  Status status = Status::iteration_limit;
  Vector x, y, z, s;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double pres = 0.0, dres = 0.0, gap = 0.0;
  double kkt_residual = std::numeric_limits<double>::infinity();
  long iterations = 0;
  double wall_time = 0.0;
  bool reduced_accuracy = false;
};

namespace detail {

/// LP part: W = diag(lp_w). SOC block k: W = eta_k * B(wbar_k) with the
/// hyperbolic rotation B(v) = [[v0, v1^T], [v1, I + v1 v1^T / (1 + v0)]].
struct Scaling {
  Vector lp_w;
  std::vector<Vector> wbar;
  std::vector<double> eta;
};

class Cones {
 public:
  Cones(Index lp_dim, const std::vector<Index>& soc_dims) : lp_(lp_dim), soc_(soc_dims) {
    Index off = lp_;
    for (Index q : soc_) {
      offsets_.push_back(off);
      off += q;
    }
    size_ = off;
  }

  Index size() const { return size_; }
  Index lp() const { return lp_; }
  std::size_t blocks() const { return soc_.size(); }
  Index offset(std::size_t k) const { return offsets_[k]; }
  Index dim(std::size_t k) const { return soc_[k]; }

  Vector identity() const {
    Vector e = Vector::Zero(size_);
    e.head(lp_).setOnes();
    for (std::size_t k = 0; k < blocks(); ++k) e(offsets_[k]) = 1.0;
    return e;
  }

  double min_eig(const Vector& u) const {
    double m = std::numeric_limits<double>::infinity();
    if (lp_ > 0) m = u.head(lp_).minCoeff();
    for (std::size_t k = 0; k < blocks(); ++k) {
      const Index o = offsets_[k], q = soc_[k];
      const double tail = q > 1 ? u.segment(o + 1, q - 1).norm() : 0.0;
      m = std::min(m, u(o) - tail);
    }
    return m;
  }

  Vector jordan(const Vector& u, const Vector& v) const {
    Vector out(size_);
    out.head(lp_) = u.head(lp_).cwiseProduct(v.head(lp_));
    for (std::size_t k = 0; k < blocks(); ++k) {
      const Index o = offsets_[k], q = soc_[k];
      out(o) = u.segment(o, q).dot(v.segment(o, q));
      if (q > 1) out.segment(o + 1, q - 1) = u(o) * v.segment(o + 1, q - 1) + v(o) * u.segment(o + 1, q - 1);
    }
    return out;
  }

  /// x with lambda o x = d.
  Vector jordan_solve(const Vector& lambda, const Vector& d) const {
    Vector out(size_);
    out.head(lp_) = d.head(lp_).cwiseQuotient(lambda.head(lp_));
    for (std::size_t k = 0; k < blocks(); ++k) {
      const Index o = offsets_[k], q = soc_[k];
      const double l0 = lambda(o);
      if (q == 1) {
        out(o) = d(o) / l0;
        continue;
      }
      const auto l1 = lambda.segment(o + 1, q - 1);
      const auto d1 = d.segment(o + 1, q - 1);
      const double x0 = (l0 * d(o) - l1.dot(d1)) / (l0 * l0 - l1.squaredNorm());
      out(o) = x0;
      out.segment(o + 1, q - 1) = (d1 - x0 * l1) / l0;
    }
    return out;
  }

  Scaling identity_scaling() const {
    Scaling w;
    w.lp_w = Vector::Ones(lp_);
    for (std::size_t k = 0; k < blocks(); ++k) {
      Vector e = Vector::Zero(soc_[k]);
      e(0) = 1.0;
      w.wbar.push_back(std::move(e));
      w.eta.push_back(1.0);
    }
    return w;
  }

  /// Nesterov-Todd point: W^2 z = s, so W z = W^-1 s.
  Scaling nt_scaling(const Vector& s, const Vector& z) const {
    Scaling w;
    w.lp_w = (s.head(lp_).array() / z.head(lp_).array()).sqrt().matrix();
    for (std::size_t k = 0; k < blocks(); ++k) {
      const Index o = offsets_[k], q = soc_[k];
      const Vector sk = s.segment(o, q), zk = z.segment(o, q);
      const double sn = std::sqrt(std::max(sk(0) * sk(0) - sk.tail(q - 1).squaredNorm(), 1e-300));
      const double zn = std::sqrt(std::max(zk(0) * zk(0) - zk.tail(q - 1).squaredNorm(), 1e-300));
      const Vector sb = sk / sn, zb = zk / zn;
      const double gamma = std::sqrt(std::max((1.0 + sb.dot(zb)) / 2.0, 1e-300));
      Vector wb(q);
      if (q > 1) {
        wb.tail(q - 1) = (sb.tail(q - 1) - zb.tail(q - 1)) / (2.0 * gamma);
        wb(0) = std::sqrt(1.0 + wb.tail(q - 1).squaredNorm());
      } else {
        wb(0) = 1.0;
      }
      w.wbar.push_back(std::move(wb));
      w.eta.push_back(std::sqrt(sn / zn));
    }
    return w;
  }

  /// W u, or W^-1 u when inverse is set (B(v)^-1 = B(Jv)).
  Vector apply_w(const Scaling& w, const Vector& u, bool inverse) const {
    Vector out(size_);
    if (inverse) out.head(lp_) = u.head(lp_).cwiseQuotient(w.lp_w);
    else out.head(lp_) = u.head(lp_).cwiseProduct(w.lp_w);
    for (std::size_t k = 0; k < blocks(); ++k) {
      const Index o = offsets_[k], q = soc_[k];
      const double eta = inverse ? 1.0 / w.eta[k] : w.eta[k];
      if (q == 1) {
        out(o) = eta * u(o);
        continue;
      }
      const Vector& wb = w.wbar[k];
      const double v0 = wb(0);
      const Vector v1 = inverse ? Vector(-wb.tail(q - 1)) : Vector(wb.tail(q - 1));
      const double u0 = u(o);
      const auto u1 = u.segment(o + 1, q - 1);
      const double v1u1 = v1.dot(u1);
      out(o) = eta * (v0 * u0 + v1u1);
      out.segment(o + 1, q - 1) = eta * (u1 + (u0 + v1u1 / (1.0 + v0)) * v1);
    }
    return out;
  }

  Vector apply_w2(const Scaling& w, const Vector& u, bool inverse) const {
    return apply_w(w, apply_w(w, u, inverse), inverse);
  }

  /// Largest a >= 0 keeping u + a d in the cone (infinity if unbounded).
  double max_step(const Vector& u, const Vector& d) const {
    double amax = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < lp_; ++i) {
      if (d(i) < 0.0) amax = std::min(amax, -u(i) / d(i));
    }
    for (std::size_t k = 0; k < blocks(); ++k) {
      const Index o = offsets_[k], q = soc_[k];
      const double u0 = u(o), d0 = d(o);
      double root = std::numeric_limits<double>::infinity();
      if (d0 < 0.0) root = -u0 / d0;
      if (q > 1) {
        const auto u1 = u.segment(o + 1, q - 1);
        const auto d1 = d.segment(o + 1, q - 1);
        // (u0 + a d0)^2 - ||u1 + a d1||^2 = qa a^2 + 2 qb a + qc
        const double qa = d0 * d0 - d1.squaredNorm();
        const double qb = u0 * d0 - u1.dot(d1);
        const double qc = std::max(u0 * u0 - u1.squaredNorm(), 0.0);
        const double disc = qb * qb - qa * qc;
        if (std::abs(qa) <= 1e-300) {
          if (qb < 0.0) root = std::min(root, -qc / (2.0 * qb));
        } else if (disc >= 0.0) {
          const double sq = std::sqrt(disc);
          const double t = -(qb + (qb >= 0.0 ? sq : -sq));
          const double r1 = t / qa;
          const double r2 = t != 0.0 ? qc / t : std::numeric_limits<double>::infinity();
          for (double r : {r1, r2}) {
            if (r >= 0.0 && r < root) root = r;
          }
        }
      }
      amax = std::min(amax, root);
    }
    return amax;
  }

 private:
  Index lp_;
  std::vector<Index> soc_;
  std::vector<Index> offsets_;
  Index size_ = 0;
};

/// Solver for [0 A^T G^T; A 0 0; G 0 -W^2] (dx, dy, dz) = (r1, r2, r3).
class KktSolver {
 public:
  KktSolver(const ConeProblem& p, const Cones& cones, int refinement_steps)
      : p_(p), cones_(cones), refine_(refinement_steps) {
    Gt_ = p.G.transpose();
    for (std::size_t k = 0; k < cones.blocks(); ++k) {
      const Index o = cones.offset(k), q = cones.dim(k);
      std::vector<char> seen(static_cast<std::size_t>(p.num_vars()), 0);
      std::vector<Index> cols;
      for (Index r = o; r < o + q; ++r) {
        for (SparseMatrix::InnerIterator it(Gt_, r); it; ++it) {
          if (!seen[static_cast<std::size_t>(it.index())]) {
            seen[static_cast<std::size_t>(it.index())] = 1;
            cols.push_back(it.index());
          }
        }
      }
      std::sort(cols.begin(), cols.end());
      block_cols_.push_back(std::move(cols));
    }
  }

  /// Factors G^T W^-2 G + delta I; returns false if no regularization works.
  bool factor(const Scaling& w) {
    w_ = &w;
    const Index n = p_.num_vars();
    Vector d(cones_.size());
    d.head(cones_.lp()) = w.lp_w.cwiseInverse().array().square().matrix();
    for (std::size_t k = 0; k < cones_.blocks(); ++k) {
      const Index o = cones_.offset(k), q = cones_.dim(k);
      const double inv_eta2 = 1.0 / (w.eta[k] * w.eta[k]);
      d(o) = q == 1 ? inv_eta2 : -inv_eta2;
      if (q > 1) d.segment(o + 1, q - 1).setConstant(inv_eta2);
    }
    SparseMatrix h = Gt_ * (d.asDiagonal() * p_.G);
    // Rank-one terms 2/eta^2 (G_k^T J wbar)(G_k^T J wbar)^T of W^-2.
    std::vector<Triplet> trips;
    for (std::size_t k = 0; k < cones_.blocks(); ++k) {
      const Index o = cones_.offset(k), q = cones_.dim(k);
      if (q == 1) continue;
      Vector u = Vector::Zero(cones_.size());
      u.segment(o, q) = w.wbar[k];
      u.segment(o + 1, q - 1) *= -1.0;
      const Vector gu = Gt_ * u;
      const double scale = 2.0 / (w.eta[k] * w.eta[k]);
      const auto& cols = block_cols_[k];
      for (Index a : cols) {
        for (Index b : cols) trips.emplace_back(a, b, scale * gu(a) * gu(b));
      }
    }
    if (!trips.empty()) {
      SparseMatrix extra(n, n);
      extra.setFromTriplets(trips.begin(), trips.end());
      h += extra;
    }
    double diag_max = 1.0;
    for (Index i = 0; i < n; ++i) diag_max = std::max(diag_max, std::abs(h.coeff(i, i)));
    SparseMatrix eye(n, n);
    eye.setIdentity();
    for (double delta = 1e-13 * diag_max; delta <= 1e-3 * diag_max; delta *= 100.0) {
      SparseMatrix reg = h + delta * eye;
      chol_.compute(reg);
      if (chol_.info() == Eigen::Success) {
        delta_ = delta;
        return factor_equalities();
      }
    }
    return false;
  }

  void solve(const Vector& r1, const Vector& r2, const Vector& r3, Vector& dx, Vector& dy, Vector& dz) const {
    solve_once(r1, r2, r3, dx, dy, dz);
    for (int it = 0; it < refine_; ++it) {
      const Vector e1 = r1 - (p_.A.transpose() * dy + Gt_ * dz);
      const Vector e2 = r2 - p_.A * dx;
      const Vector e3 = r3 - (p_.G * dx - cones_.apply_w2(*w_, dz, false));
      const double err = std::max({e1.lpNorm<Eigen::Infinity>(), e2.size() ? e2.lpNorm<Eigen::Infinity>() : 0.0,
                                   e3.lpNorm<Eigen::Infinity>()});
      const double ref = std::max({1.0, r1.lpNorm<Eigen::Infinity>(), r2.size() ? r2.lpNorm<Eigen::Infinity>() : 0.0,
                                   r3.lpNorm<Eigen::Infinity>()});
      if (err <= 1e-14 * ref) break;
      Vector cx, cy, cz;
      solve_once(e1, e2, e3, cx, cy, cz);
      dx += cx;
      dy += cy;
      dz += cz;
    }
  }

 private:
  bool factor_equalities() {
    const Index p = p_.A.rows();
    if (p == 0) return true;
    const Matrix at = Matrix(p_.A.transpose());
    z_ = chol_.solve(at);
    Matrix s = p_.A * z_;
    s = 0.5 * (s + s.transpose());
    const double tr = std::max(1.0, s.diagonal().cwiseAbs().maxCoeff());
    s.diagonal().array() += 1e-14 * tr;
    schur_.compute(s);
    return schur_.info() == Eigen::Success;
  }

  void solve_once(const Vector& r1, const Vector& r2, const Vector& r3, Vector& dx, Vector& dy, Vector& dz) const {
    const Vector rhs = r1 + Gt_ * cones_.apply_w2(*w_, r3, true);
    const Vector u = chol_.solve(rhs);
    if (p_.A.rows() > 0) {
      dy = schur_.solve(p_.A * u - r2);
      dx = u - z_ * dy;
    } else {
      dy = Vector::Zero(0);
      dx = u;
    }
    dz = cones_.apply_w2(*w_, Vector(p_.G * dx - r3), true);
  }

  const ConeProblem& p_;
  const Cones& cones_;
  int refine_;
  SparseMatrix Gt_;
  std::vector<std::vector<Index>> block_cols_;
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<SparseMatrix::StorageIndex>> chol_;
  Matrix z_;
  Eigen::LDLT<Matrix> schur_;
  const Scaling* w_ = nullptr;
  double delta_ = 0.0;
};

}  // namespace detail

/// Solves a cone problem. Row scaling of G and A is applied internally and
/// undone on the returned multipliers.
inline IpmResult solve_cone_problem(const ConeProblem& input, const IpmSettings& settings = {}) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  input.validate();

  // Equilibrate rows: each LP row, each SOC block and each equality row is
  // divided by its largest coefficient magnitude.
  ConeProblem p = input;
  const Index n = p.num_vars();
  const Index m = p.G.rows();
  const Index neq = p.A.rows();
  Vector g_scale = Vector::Ones(m), a_scale = Vector::Ones(neq);
  {
    Vector row_max = Vector::Zero(m);
    for (Index k = 0; k < p.G.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(p.G, k); it; ++it) {
        row_max(it.row()) = std::max(row_max(it.row()), std::abs(it.value()));
      }
    }
    for (Index i = 0; i < p.lp_dim; ++i) {
      if (row_max(i) > 0.0) g_scale(i) = 1.0 / row_max(i);
    }
    Index o = p.lp_dim;
    for (Index q : p.soc_dims) {
      const double mx = row_max.segment(o, q).maxCoeff();
      if (mx > 0.0) g_scale.segment(o, q).setConstant(1.0 / mx);
      o += q;
    }
    Vector eq_max = Vector::Zero(neq);
    for (Index k = 0; k < p.A.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(p.A, k); it; ++it) {
        eq_max(it.row()) = std::max(eq_max(it.row()), std::abs(it.value()));
      }
    }
    for (Index i = 0; i < neq; ++i) {
      if (eq_max(i) > 0.0) a_scale(i) = 1.0 / eq_max(i);
    }
    p.G = g_scale.asDiagonal() * p.G;
    p.h = g_scale.cwiseProduct(p.h);
    if (neq > 0) {
      p.A = a_scale.asDiagonal() * p.A;
      p.b = a_scale.cwiseProduct(p.b);
    }
    p.G.makeCompressed();
    p.A.makeCompressed();
  }

  detail::Cones cones(p.lp_dim, p.soc_dims);
  detail::KktSolver kkt(p, cones, settings.refinement_steps);
  const Vector e = cones.identity();
  const double deg = static_cast<double>(p.degree());
  const double nc = std::max(1.0, p.c.norm()), nb = std::max(1.0, p.b.norm()), nh = std::max(1.0, p.h.norm());

  IpmResult res;
  auto finish = [&](Status st, const Vector& x, const Vector& y, const Vector& z, const Vector& s, double tau) {
    res.status = st;
    const double t = (st == Status::optimal || st == Status::iteration_limit) ? tau : 1.0;
    res.x = x / t;
    res.y = a_scale.cwiseProduct(y / t);
    res.z = g_scale.cwiseProduct(z / t);
    res.s = g_scale.cwiseInverse().cwiseProduct(s / t);
    res.primal_objective = input.c.dot(res.x);
    res.dual_objective = -input.b.dot(res.y) - input.h.dot(res.z);
    res.wall_time = std::chrono::duration<double>(clock::now() - start).count();
    return res;
  };

  // Initial point: least-norm solves with W = I, shifted into the cone.
  Vector x, y, z, s;
  double tau = 1.0, kappa = 1.0;
  {
    const detail::Scaling w0 = cones.identity_scaling();
    if (!kkt.factor(w0)) throw SolverError("interior-point: initial factorization failed");
    Vector zp;
    kkt.solve(Vector::Zero(n), p.b, p.h, x, y, zp);
    s = -zp;
    Vector xd;
    kkt.solve(-p.c, Vector::Zero(neq), Vector::Zero(m), xd, y, z);
    const double as = -cones.min_eig(s);
    if (as >= -1e-8 * std::max(1.0, s.norm())) s += (1.0 + as) * e;
    const double az = -cones.min_eig(z);
    if (az >= -1e-8 * std::max(1.0, z.norm())) z += (1.0 + az) * e;
  }

  double last_kkt = std::numeric_limits<double>::infinity();
  long best_iter = 0;
  Vector best_x = x, best_y = y, best_z = z, best_s = s;
  double best_tau = tau;
  for (long iter = 0;; ++iter) {
    res.iterations = iter;
    const Vector rx = p.A.transpose() * y + p.G.transpose() * z + p.c * tau;
    const Vector ry = p.A * x - p.b * tau;
    const Vector rz = p.G * x + s - p.h * tau;
    const double cx = p.c.dot(x), by = p.b.dot(y), hz = p.h.dot(z);
    const double rt = kappa + cx + by + hz;

    const double pres = std::max(ry.size() ? ry.norm() / tau / nb : 0.0, rz.norm() / tau / nh);
    const double dres = rx.norm() / tau / nc;
    const double pcost = cx / tau, dcost = -(by + hz) / tau;
    const double gap = s.dot(z) / (tau * tau);
    double relgap = std::numeric_limits<double>::infinity();
    if (pcost < 0.0) relgap = gap / -pcost;
    else if (dcost > 0.0) relgap = gap / dcost;
    res.pres = pres;
    res.dres = dres;
    res.gap = gap;
    const double kkt_res = std::max({pres, dres, std::min(gap, relgap)});
    res.kkt_residual = kkt_res;
    if (settings.trace) {
      *settings.trace << "ipm " << iter << " pcost " << pcost << " dcost " << dcost << " pres " << pres << " dres "
                      << dres << " gap " << gap << " tau " << tau << " kappa " << kappa << '\n';
    }
    if (kkt_res < last_kkt) {
      if (kkt_res < 0.9 * last_kkt) best_iter = iter;
      last_kkt = kkt_res;
      best_x = x, best_y = y, best_z = z, best_s = s, best_tau = tau;
    }
    if (pres <= settings.feastol && dres <= settings.feastol &&
        (gap <= settings.abstol || relgap <= settings.reltol)) {
      return finish(Status::optimal, x, y, z, s, tau);
    }
    if (tau < kappa) {
      if (by + hz < 0.0) {
        const double scale = -(by + hz);
        const double cert = (p.A.transpose() * y + p.G.transpose() * z).norm() / scale;
        if (cert <= settings.feastol) {
          res.kkt_residual = cert;
          return finish(Status::infeasible, x, y / scale, z / scale, s, 1.0);
        }
      }
      if (cx < 0.0) {
        const double scale = -cx;
        const double cert =
            std::max(ry.size() ? (p.A * x).norm() / scale : 0.0, (p.G * x + s).norm() / scale);
        if (cert <= settings.feastol) {
          res.kkt_residual = cert;
          return finish(Status::unbounded, x / scale, y, z, s / scale, 1.0);
        }
      }
    }
    const double elapsed = std::chrono::duration<double>(clock::now() - start).count();
    if (iter >= settings.max_iters || elapsed > settings.time_limit) {
      res.kkt_residual = last_kkt;
      return finish(Status::iteration_limit, best_x, best_y, best_z, best_s, best_tau);
    }

    auto stalled = [&](const std::string& why) -> IpmResult {
      if (last_kkt <= settings.stall_tol) {
        res.reduced_accuracy = true;
        res.kkt_residual = last_kkt;
        return finish(Status::optimal, best_x, best_y, best_z, best_s, best_tau);
      }
      throw SolverError("interior-point: " + why + " at iteration " + std::to_string(iter) +
                        " (pres " + std::to_string(pres) + ", dres " + std::to_string(dres) + ", gap " +
                        std::to_string(gap) + ")");
    };

    if (iter - best_iter >= 30) return stalled("no progress");

    const detail::Scaling w = cones.nt_scaling(s, z);
    const Vector lambda = cones.apply_w(w, z, false);
    const double mu = (s.dot(z) + tau * kappa) / (deg + 1.0);
    if (!kkt.factor(w)) return stalled("factorization failed");

    Vector x1, y1, z1;
    kkt.solve(-p.c, p.b, p.h, x1, y1, z1);
    const double denom = -cones.apply_w(w, z1, false).squaredNorm() - kappa / tau;

    struct Direction {
      Vector dx, dy, dz, ds;
      double dtau, dkappa;
    };
    const Vector lambda_sq = cones.jordan(lambda, lambda);
    auto direction = [&](double sigma, const Vector& ds_target, double dk_target) {
      const double eta = 1.0 - sigma;
      const Vector ds_scaled = cones.jordan_solve(lambda, ds_target);
      Vector x2, y2, z2;
      kkt.solve(-eta * rx, -eta * ry, Vector(-eta * rz - cones.apply_w(w, ds_scaled, false)), x2, y2, z2);
      Direction d;
      d.dtau = (-eta * rt - dk_target / tau - (p.c.dot(x2) + p.b.dot(y2) + p.h.dot(z2))) / denom;
      d.dx = x2 + d.dtau * x1;
      d.dy = y2 + d.dtau * y1;
      d.dz = z2 + d.dtau * z1;
      d.ds = cones.apply_w(w, Vector(ds_scaled - cones.apply_w(w, d.dz, false)), false);
      d.dkappa = (dk_target - kappa * d.dtau) / tau;
      return d;
    };
    auto step_to_boundary = [&](const Direction& d) {
      double a = std::min(cones.max_step(s, d.ds), cones.max_step(z, d.dz));
      if (d.dtau < 0.0) a = std::min(a, -tau / d.dtau);
      if (d.dkappa < 0.0) a = std::min(a, -kappa / d.dkappa);
      return a;
    };

    const Direction aff = direction(0.0, Vector(-lambda_sq), -kappa * tau);
    const double alpha_aff = std::min(1.0, step_to_boundary(aff));
    if (!std::isfinite(alpha_aff)) return stalled("non-finite affine step");
    const double sigma = std::pow(1.0 - alpha_aff, 3);
    const Vector corr = cones.jordan(cones.apply_w(w, aff.ds, true), cones.apply_w(w, aff.dz, false));
    const Direction dir = direction(sigma, Vector(sigma * mu * e - lambda_sq - corr),
                                    sigma * mu - kappa * tau - aff.dkappa * aff.dtau);
    const double alpha = std::min(1.0, 0.99 * step_to_boundary(dir));
    if (!std::isfinite(alpha) || alpha < 1e-12 || !dir.dx.allFinite()) return stalled("step length collapsed");
    if (settings.trace) *settings.trace << "step " << alpha << " affine " << alpha_aff << " sigma " << sigma << '\n';

    x += alpha * dir.dx;
    y += alpha * dir.dy;
    z += alpha * dir.dz;
    s += alpha * dir.ds;
    tau += alpha * dir.dtau;
    kappa += alpha * dir.dkappa;
    if (cones.min_eig(s) <= 0.0 || cones.min_eig(z) <= 0.0 || tau <= 0.0 || kappa <= 0.0) {
      return stalled("iterate left the cone");
    }
  }
}

}  // namespace roodso::conic
