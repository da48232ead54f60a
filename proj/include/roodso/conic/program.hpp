#pragma once

// Modelling layer over the cone solver:
//
//   min  c^T z + c0 + sum_k rho_k ||W_k z + w_k||
//   s.t. A z <= b,  E z = e,  ||V_j z + v_j|| <= a_j^T z + a0_j.
//
// Norm terms become epigraph variables appended after the user variables.

#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "roodso/conic/ipm.hpp"

namespace roodso::conic {

using SparseRow = std::vector<std::pair<Index, double>>;

/// rho * ||W z[offset : offset + W.cols()] + w||, optionally capped.
struct NormTerm {
  double scale = 0.0;
  Index offset = 0;
  Matrix W;
  Vector w;
  double cap = std::numeric_limits<double>::infinity();
};

/// ||V z[offset : offset + V.cols()] + v|| <= a^T z + a0.
struct SocConstraint {
  Index offset = 0;
  Matrix V;
  Vector v;
  SparseRow a;
  double a0 = 0.0;
};

class ConicProgram {
 public:
  ConicProgram() = default;
  explicit ConicProgram(Index num_vars) : objective_(Vector::Zero(num_vars)) {}

  Index num_vars() const { return objective_.size(); }

  /// Appends `count` variables with zero cost; returns the first new index.
  Index add_vars(Index count) {
    const Index first = num_vars();
    objective_.conservativeResize(first + count);
    objective_.tail(count).setZero();
    return first;
  }

  Vector& objective() { return objective_; }
  const Vector& objective() const { return objective_; }
  double& constant() { return constant_; }
  double constant() const { return constant_; }

  Index add_inequality(const SparseRow& row, double rhs) {
    check_row(row);
    const Index r = static_cast<Index>(ineq_rhs_.size());
    for (const auto& [j, v] : row) {
      if (v != 0.0) ineq_.emplace_back(r, j, v);
    }
    ineq_rhs_.push_back(rhs);
    return r;
  }

  Index add_equality(const SparseRow& row, double rhs) {
    check_row(row);
    const Index r = static_cast<Index>(eq_rhs_.size());
    for (const auto& [j, v] : row) {
      if (v != 0.0) eq_.emplace_back(r, j, v);
    }
    eq_rhs_.push_back(rhs);
    return r;
  }

  void add_norm_term(NormTerm term) {
    require(term.scale >= 0.0 && std::isfinite(term.scale), "norm term scale must be finite and nonnegative");
    require(term.offset >= 0 && term.offset + term.W.cols() <= num_vars(), "norm term references missing variables");
    require(term.W.rows() >= 1, "norm term needs at least one row");
    if (term.w.size() == 0) term.w = Vector::Zero(term.W.rows());
    require(term.w.size() == term.W.rows(), "norm term offset has wrong length");
    require(term.cap > 0.0, "norm term cap must be positive");
    norms_.push_back(std::move(term));
  }

  void add_soc_constraint(SocConstraint con) {
    require(con.offset >= 0 && con.offset + con.V.cols() <= num_vars(), "SOC constraint references missing variables");
    check_row(con.a);
    if (con.v.size() == 0) con.v = Vector::Zero(con.V.rows());
    require(con.v.size() == con.V.rows(), "SOC constraint offset has wrong length");
    socs_.push_back(std::move(con));
  }

  Index num_inequalities() const { return static_cast<Index>(ineq_rhs_.size()); }
  Index num_equalities() const { return static_cast<Index>(eq_rhs_.size()); }
  const std::vector<NormTerm>& norm_terms() const { return norms_; }
  std::vector<NormTerm>& norm_terms() { return norms_; }
  const std::vector<SocConstraint>& soc_constraints() const { return socs_; }

  SparseMatrix inequality_matrix() const {
    SparseMatrix a(num_inequalities(), num_vars());
    a.setFromTriplets(ineq_.begin(), ineq_.end());
    return a;
  }
  Vector inequality_rhs() const { return Eigen::Map<const Vector>(ineq_rhs_.data(), num_inequalities()); }
  SparseMatrix equality_matrix() const {
    SparseMatrix a(num_equalities(), num_vars());
    a.setFromTriplets(eq_.begin(), eq_.end());
    return a;
  }
  Vector equality_rhs() const { return Eigen::Map<const Vector>(eq_rhs_.data(), num_equalities()); }

  double norm_value(std::size_t k, const Vector& z) const {
    const NormTerm& t = norms_[k];
    return (t.W * z.segment(t.offset, t.W.cols()) + t.w).norm();
  }

  /// Objective with norms evaluated exactly.
  double evaluate(const Vector& z) const {
    double v = objective_.dot(z) + constant_;
    for (std::size_t k = 0; k < norms_.size(); ++k) v += norms_[k].scale * norm_value(k, z);
    return v;
  }

  /// Largest violation over all constraints (0 when feasible).
  double max_violation(const Vector& z) const {
    double worst = 0.0;
    if (num_inequalities() > 0) {
      const Vector r = inequality_matrix() * z - inequality_rhs();
      worst = std::max(worst, r.maxCoeff());
    }
    if (num_equalities() > 0) {
      worst = std::max(worst, (equality_matrix() * z - equality_rhs()).cwiseAbs().maxCoeff());
    }
    for (const auto& c : socs_) {
      double rhs = c.a0;
      for (const auto& [j, v] : c.a) rhs += v * z(j);
      worst = std::max(worst, (c.V * z.segment(c.offset, c.V.cols()) + c.v).norm() - rhs);
    }
    for (std::size_t k = 0; k < norms_.size(); ++k) worst = std::max(worst, norm_value(k, z) - norms_[k].cap);
    return worst;
  }

  /// Standard cone form; epigraph variables for norm terms follow the user
  /// variables in norm-term order.
  ConeProblem to_cone_problem() const {
    const Index n = num_vars();
    const Index nt = static_cast<Index>(norms_.size());
    ConeProblem p;
    p.c = Vector::Zero(n + nt);
    p.c.head(n) = objective_;
    for (Index k = 0; k < nt; ++k) p.c(n + k) = norms_[static_cast<std::size_t>(k)].scale;

    std::vector<Triplet> g = ineq_;
    std::vector<double> h = ineq_rhs_;
    Index row = num_inequalities();
    for (Index k = 0; k < nt; ++k) {
      if (std::isfinite(norms_[static_cast<std::size_t>(k)].cap)) {
        g.emplace_back(row++, n + k, 1.0);
        h.push_back(norms_[static_cast<std::size_t>(k)].cap);
      }
    }
    p.lp_dim = row;
    auto push_dense = [&](Index offset, const Matrix& m, const Vector& off) {
      for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
          if (m(i, j) != 0.0) g.emplace_back(row + i, offset + j, -m(i, j));
        }
        h.push_back(off(i));
      }
      row += m.rows();
    };
    for (Index k = 0; k < nt; ++k) {
      const NormTerm& t = norms_[static_cast<std::size_t>(k)];
      g.emplace_back(row++, n + k, -1.0);
      h.push_back(0.0);
      push_dense(t.offset, t.W, t.w);
      p.soc_dims.push_back(t.W.rows() + 1);
    }
    for (const auto& c : socs_) {
      for (const auto& [j, v] : c.a) {
        if (v != 0.0) g.emplace_back(row, j, -v);
      }
      h.push_back(c.a0);
      ++row;
      push_dense(c.offset, c.V, c.v);
      p.soc_dims.push_back(c.V.rows() + 1);
    }
    p.G = SparseMatrix(row, n + nt);
    p.G.setFromTriplets(g.begin(), g.end());
    p.h = Eigen::Map<const Vector>(h.data(), row);
    p.A = SparseMatrix(num_equalities(), n + nt);
    p.A.setFromTriplets(eq_.begin(), eq_.end());
    p.b = equality_rhs();
    return p;
  }

  /// Plain-text dump for diffing programs across implementations.
  void dump(std::ostream& out) const {
    out << std::setprecision(17);
    out << "vars " << num_vars() << "\n";
    out << "objective constant " << constant_ << "\n";
    for (Index j = 0; j < num_vars(); ++j) {
      if (objective_(j) != 0.0) out << "c " << j << ' ' << objective_(j) << "\n";
    }
    const SparseMatrix a = inequality_matrix();
    const Eigen::SparseMatrix<double, Eigen::RowMajor> ar = a;
    for (Index r = 0; r < ar.rows(); ++r) {
      out << "ineq " << r;
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(ar, r); it; ++it) {
        out << ' ' << it.col() << ':' << it.value();
      }
      out << " <= " << ineq_rhs_[static_cast<std::size_t>(r)] << "\n";
    }
    const Eigen::SparseMatrix<double, Eigen::RowMajor> er = equality_matrix();
    for (Index r = 0; r < er.rows(); ++r) {
      out << "eq " << r;
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(er, r); it; ++it) {
        out << ' ' << it.col() << ':' << it.value();
      }
      out << " = " << eq_rhs_[static_cast<std::size_t>(r)] << "\n";
    }
    for (std::size_t k = 0; k < norms_.size(); ++k) {
      const NormTerm& t = norms_[k];
      out << "norm " << k << " scale " << t.scale << " offset " << t.offset << " rows " << t.W.rows() << " cols "
          << t.W.cols() << " cap " << t.cap << "\n";
      for (Index i = 0; i < t.W.rows(); ++i) {
        out << "  row " << i;
        for (Index j = 0; j < t.W.cols(); ++j) {
          if (t.W(i, j) != 0.0) out << ' ' << (t.offset + j) << ':' << t.W(i, j);
        }
        out << " + " << t.w(i) << "\n";
      }
    }
    for (std::size_t k = 0; k < socs_.size(); ++k) {
      const SocConstraint& c = socs_[k];
      out << "soc " << k << " offset " << c.offset << " rows " << c.V.rows() << " cols " << c.V.cols() << "\n";
      out << "  bound";
      for (const auto& [j, v] : c.a) out << ' ' << j << ':' << v;
      out << " + " << c.a0 << "\n";
      for (Index i = 0; i < c.V.rows(); ++i) {
        out << "  row " << i;
        for (Index j = 0; j < c.V.cols(); ++j) {
          if (c.V(i, j) != 0.0) out << ' ' << (c.offset + j) << ':' << c.V(i, j);
        }
        out << " + " << c.v(i) << "\n";
      }
    }
  }

 private:
  void check_row(const SparseRow& row) const {
    for (const auto& [j, v] : row) {
      require(j >= 0 && j < num_vars(), "constraint references variable " + std::to_string(j) + " of " +
                                            std::to_string(num_vars()));
      require(std::isfinite(v), "constraint coefficient is not finite");
    }
  }

  Vector objective_;
  double constant_ = 0.0;
  std::vector<Triplet> ineq_;
  std::vector<double> ineq_rhs_;
  std::vector<Triplet> eq_;
  std::vector<double> eq_rhs_;
  std::vector<NormTerm> norms_;
  std::vector<SocConstraint> socs_;
};

struct SolveResult {
  Status status = Status::iteration_limit;
  Vector primal;
  double objective = 0.0;
  double kkt_residual = std::numeric_limits<double>::infinity();
  long iterations = 0;
  double wall_time = 0.0;
  bool reduced_accuracy = false;
  Vector ineq_dual;
  Vector eq_dual;
  std::vector<double> norm_values;
  double max_violation = 0.0;  // filled by row generation
};

/// Solver backend seam; the default is the bundled interior-point method.
struct Backend {
  virtual ~Backend() = default;
  virtual IpmResult solve(const ConeProblem& p) const = 0;
};

struct InteriorPointBackend : Backend {
  IpmSettings settings;
  InteriorPointBackend() = default;
  explicit InteriorPointBackend(IpmSettings s) : settings(s) {}
  IpmResult solve(const ConeProblem& p) const override { return solve_cone_problem(p, settings); }
};

inline SolveResult solve(const ConicProgram& program, const Backend& backend) {
  const ConeProblem p = program.to_cone_problem();
  const IpmResult r = backend.solve(p);
  SolveResult out;
  out.status = r.status;
  out.kkt_residual = r.kkt_residual;
  out.iterations = r.iterations;
  out.wall_time = r.wall_time;
  out.reduced_accuracy = r.reduced_accuracy;
  const Index n = program.num_vars();
  out.primal = r.x.head(n);
  if (r.status == Status::optimal || r.status == Status::iteration_limit) {
    out.objective = program.evaluate(out.primal);
    for (std::size_t k = 0; k < program.norm_terms().size(); ++k) out.norm_values.push_back(program.norm_value(k, out.primal));
  } else if (r.status == Status::infeasible) {
    out.objective = std::numeric_limits<double>::infinity();
  } else {
    out.objective = -std::numeric_limits<double>::infinity();
  }
  out.ineq_dual = r.z.head(program.num_inequalities());
  out.eq_dual = r.y;
  return out;
}

inline SolveResult solve(const ConicProgram& program, const IpmSettings& settings = {}) {
  return solve(program, InteriorPointBackend(settings));
}

}  // namespace roodso::conic
