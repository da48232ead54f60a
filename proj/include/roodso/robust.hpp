#pragma once

// Min-max program over the kernel ball, in dual form:
//
//   min_{x, g, beta}  <mu_c, g> + R ||g||_H + beta
//   s.t.              f(x, u) <= g(u) + beta   for every u in Upsilon,
//
// with g expanded over a finite set. Two expansions are provided: kernel
// coefficients on the expansion points (norm via a Cholesky factor of their
// Gram matrix) and orthonormal Nystrom features (norm is the Euclidean norm).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "roodso/conic/program.hpp"
#include "roodso/problems.hpp"
#include "roodso/rng.hpp"
#include "roodso/sampling.hpp"
#include "roodso/smc.hpp"

namespace roodso {

/// mu_c = sum_j weights_j phi(points_j).
struct CenterAtoms {
  Matrix points;
  Vector weights;
};

/// Samples of every support measure, weighted alpha_i / n_i.
inline CenterAtoms center_atoms(const SMCSolution& smc, const SourceCollection& collection) {
  require(static_cast<Index>(collection.size()) == smc.alpha.size(), "center_atoms: collection does not match fit");
  Index total = 0;
  for (Index i : smc.sm) total += collection[static_cast<std::size_t>(i)].size();
  CenterAtoms atoms{Matrix(total, collection.dim()), Vector(total)};
  Index r = 0;
  for (Index i : smc.sm) {
    const Dataset& d = collection[static_cast<std::size_t>(i)];
    atoms.points.middleRows(r, d.size()) = d.samples();
    atoms.weights.segment(r, d.size()).setConstant(smc.alpha(i) / static_cast<double>(d.size()));
    r += d.size();
  }
  return atoms;
}

/// Finite parametrization of g: g(upsilon_l) = at_points.row(l) coef,
/// <mu_c, g> = center . coef, ||g||_H = ||norm_factor coef||.
struct Representer {
  Matrix at_points;
  Vector center;
  Matrix norm_factor;
  std::string mode;

  Index size() const { return center.size(); }
};

namespace detail {

inline Vector kernel_times_weights(const KernelSpec& spec, const Matrix& rows, const CenterAtoms& atoms) {
  Vector out = Vector::Zero(rows.rows());
  constexpr Index chunk = 2048;
  for (Index c = 0; c < atoms.points.rows(); c += chunk) {
    const Index len = std::min(chunk, atoms.points.rows() - c);
    out += cross_kernel_block(spec, rows, atoms.points.middleRows(c, len)) * atoms.weights.segment(c, len);
  }
  return out;
}

}  // namespace detail

/// Kernel-coefficient expansion over Gamma (reduced) or Upsilon (full).
inline Representer coefficient_representer(const KernelSpec& spec, const PointSets& points, bool use_reduced,
                                           const CenterAtoms& atoms) {
  const Matrix& expansion = use_reduced ? points.gamma : points.upsilon;
  Representer rep;
  rep.mode = "coefficients";
  rep.at_points = cross_kernel_block(spec, points.upsilon, expansion);
  rep.center = detail::kernel_times_weights(spec, expansion, atoms);
  const PsdFactor f = psd_factor(cross_kernel_block(spec, expansion, expansion));
  rep.norm_factor = f.lower.transpose();
  return rep;
}

/// Nystrom coordinates for span{phi(u) : u in Upsilon}, with the pivots drawn
/// from Gamma first so that the leading `reduced_rank` columns span the
/// reduced expansion.
struct FeatureSpace {
  NystromBasis basis;
  Matrix upsilon_features;
  Vector center;
  Index reduced_rank = 0;
  bool has_full = false;

  Index rank() const { return basis.rank(); }
};

/// Basis and Upsilon features only; the center is attached per fit.
inline FeatureSpace build_feature_space(const KernelSpec& spec, const PointSets& points, bool full,
                                        double tol = 1e-12) {
  FeatureSpace fs;
  fs.has_full = full;
  if (full) {
    std::vector<char> in_gamma(static_cast<std::size_t>(points.upsilon.rows()), 0);
    for (Index g : points.gamma_in_upsilon) in_gamma[static_cast<std::size_t>(g)] = 1;
    Matrix candidates(points.upsilon.rows(), points.dim());
    Index r = 0;
    for (Index g = 0; g < points.gamma.rows(); ++g) candidates.row(r++) = points.gamma.row(g);
    for (Index u = 0; u < points.upsilon.rows(); ++u) {
      if (!in_gamma[static_cast<std::size_t>(u)]) candidates.row(r++) = points.upsilon.row(u);
    }
    candidates.conservativeResize(r, Eigen::NoChange);
    const Index forced = points.gamma.rows();
    fs.basis = NystromBasis::build(spec, candidates, tol, forced);
    fs.reduced_rank = static_cast<Index>(std::count_if(fs.basis.pivot_indices().begin(), fs.basis.pivot_indices().end(),
                                                       [&](Index p) { return p < forced; }));
  } else {
    fs.basis = NystromBasis::build(spec, points.gamma, tol);
    fs.reduced_rank = fs.basis.rank();
  }
  fs.upsilon_features = fs.basis.features(points.upsilon);
  fs.center = Vector::Zero(fs.rank());
  return fs;
}

inline void assign_center(FeatureSpace& fs, const CenterAtoms& atoms) {
  fs.center = Vector::Zero(fs.rank());
  constexpr Index chunk = 2048;
  for (Index c = 0; c < atoms.points.rows(); c += chunk) {
    const Index len = std::min(chunk, atoms.points.rows() - c);
    fs.center += fs.basis.features(atoms.points.middleRows(c, len)).transpose() * atoms.weights.segment(c, len);
  }
}

inline FeatureSpace build_feature_space(const KernelSpec& spec, const PointSets& points, const CenterAtoms& atoms,
                                        bool full, double tol = 1e-12) {
  FeatureSpace fs = build_feature_space(spec, points, full, tol);
  assign_center(fs, atoms);
  return fs;
}

inline Representer feature_representer(const FeatureSpace& fs, bool use_reduced) {
  require(use_reduced || fs.has_full, "feature_representer: full expansion requested from a reduced feature space");
  const Index cols = use_reduced ? fs.reduced_rank : fs.rank();
  Representer rep;
  rep.mode = "features";
  rep.at_points = fs.upsilon_features.leftCols(cols);
  rep.center = fs.center.head(cols);
  rep.norm_factor = Matrix::Identity(cols, cols);
  return rep;
}

struct ProgramLayout {
  Index decision_dim = 0;
  Index coef_offset = 0;
  Index coef_size = 0;
  Index beta = 0;
  Index aux_offset = 0;
  std::vector<Index> scenarios;
};

/// Variables: x, coefficients, beta, then loss auxiliaries per scenario. The
/// norm term is always present so that an optional cap can bound it.
inline conic::ConicProgram assemble_program(const LossEncoder& loss, const Representer& rep, const Matrix& upsilon,
                                            double radius, const std::vector<Index>& scenarios,
                                            double cap = std::numeric_limits<double>::infinity(),
                                            ProgramLayout* layout = nullptr) {
  require(radius >= 0.0 && std::isfinite(radius), "assemble_program: radius must be finite and nonnegative");
  require(rep.at_points.rows() == upsilon.rows(), "assemble_program: representer does not match Upsilon");
  require(upsilon.cols() == loss.sample_dim(), "assemble_program: sample dimension does not match loss");
  const Index dx = loss.decision_dim();
  const Index p = rep.size();
  const Index naux = loss.aux_count();
  ProgramLayout lay;
  lay.decision_dim = dx;
  lay.coef_offset = dx;
  lay.coef_size = p;
  lay.beta = dx + p;
  lay.aux_offset = dx + p + 1;
  lay.scenarios = scenarios;

  conic::ConicProgram prog(lay.aux_offset + naux * static_cast<Index>(scenarios.size()));
  prog.objective().segment(lay.coef_offset, p) = rep.center;
  prog.objective()(lay.beta) = 1.0;
  if (p > 0) {
    conic::NormTerm nt;
    nt.scale = radius;
    nt.offset = lay.coef_offset;
    nt.W = rep.norm_factor;
    nt.cap = cap;
    prog.add_norm_term(std::move(nt));
  }

  for (const DecisionRow& row : loss.decision_space()) {
    conic::SparseRow sr;
    for (Index j = 0; j < dx; ++j) {
      if (row.coef(j) != 0.0) sr.emplace_back(j, row.coef(j));
    }
    if (row.equality) prog.add_equality(sr, row.rhs);
    else prog.add_inequality(sr, row.rhs);
  }

  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const Index l = scenarios[s];
    require(l >= 0 && l < upsilon.rows(), "assemble_program: scenario index out of range");
    const Index aux = lay.aux_offset + naux * static_cast<Index>(s);
    for (const EpigraphRow& er : loss.epigraph(upsilon.row(l))) {
      conic::SparseRow sr;
      for (Index j = 0; j < dx; ++j) {
        if (er.coef_x(j) != 0.0) sr.emplace_back(j, er.coef_x(j));
      }
      for (Index a = 0; a < naux; ++a) {
        if (er.coef_aux(a) != 0.0) sr.emplace_back(aux + a, er.coef_aux(a));
      }
      if (er.coef_r != 0.0) {
        for (Index j = 0; j < p; ++j) sr.emplace_back(lay.coef_offset + j, er.coef_r * rep.at_points(l, j));
        sr.emplace_back(lay.beta, er.coef_r);
      }
      prog.add_inequality(sr, er.rhs);
    }
  }
  if (layout) *layout = lay;
  return prog;
}

inline std::vector<Index> all_scenarios(Index count) {
  std::vector<Index> idx(static_cast<std::size_t>(count));
  std::iota(idx.begin(), idx.end(), Index{0});
  return idx;
}

/// v_l = f(x, u_l) - g(u_l) - beta for every row of Upsilon.
inline Vector violations(const LossEncoder& loss, const Representer& rep, const Matrix& upsilon, const Vector& x,
                         const Vector& coef, double beta) {
  Vector g = rep.at_points * coef;
  Vector v(upsilon.rows());
  parallel_for(static_cast<std::size_t>(upsilon.rows()), [&](std::size_t l) {
    const Index i = static_cast<Index>(l);
    v(i) = loss.evaluate(x, upsilon.row(i)) - g(i) - beta;
  });
  return v;
}

struct RGConfig {
  long m0 = 3;
  double epsilon = 1e-4;
  long i_max = 100;
  long c_max = 10;
  std::uint64_t seed = 0;
  // Initial bound on ||g||_H for restricted masters; enlarged when binding.
  double norm_cap = 1e3;

  void validate() const {
    require(m0 >= 1, "row generation: m0 must be at least 1");
    require(c_max >= 1, "row generation: c_max must be at least 1");
    require(i_max >= 1, "row generation: i_max must be at least 1");
    require(epsilon > 0.0, "row generation: epsilon must be positive");
    require(norm_cap > 0.0, "row generation: norm cap must be positive");
  }
};

struct RobustSolution {
  conic::SolveResult result;
  Vector decision;
  Vector coef;
  double beta = 0.0;
  double objective = 0.0;
  long rg_iterations = 0;
  double max_violation = 0.0;
  std::size_t constraint_groups = 0;
  double final_cap = std::numeric_limits<double>::infinity();
  ProgramLayout layout;

  bool optimal() const { return result.status == conic::Status::optimal; }
};

namespace detail {

inline RobustSolution unpack(const conic::SolveResult& r, const ProgramLayout& lay, const LossEncoder& loss,
                             const Representer& rep, const Matrix& upsilon) {
  RobustSolution out;
  out.result = r;
  out.layout = lay;
  out.constraint_groups = lay.scenarios.size();
  out.objective = r.objective;
  if (r.status == conic::Status::optimal || r.status == conic::Status::iteration_limit) {
    out.decision = r.primal.head(lay.decision_dim);
    out.coef = r.primal.segment(lay.coef_offset, lay.coef_size);
    out.beta = r.primal(lay.beta);
    out.max_violation = violations(loss, rep, upsilon, out.decision, out.coef, out.beta).maxCoeff();
    out.result.max_violation = out.max_violation;
  }
  return out;
}

}  // namespace detail

/// Solves the program with every Upsilon constraint group present.
inline RobustSolution solve_full(const LossEncoder& loss, const Representer& rep, const Matrix& upsilon, double radius,
                                 const conic::IpmSettings& settings = {}) {
  ProgramLayout lay;
  const conic::ConicProgram prog =
      assemble_program(loss, rep, upsilon, radius, all_scenarios(upsilon.rows()),
                       std::numeric_limits<double>::infinity(), &lay);
  RobustSolution out = detail::unpack(conic::solve(prog, settings), lay, loss, rep, upsilon);
  out.rg_iterations = 1;
  return out;
}

/// Row generation: start from m0 random groups and repeatedly add the c_max
/// most violated ones until no violation exceeds epsilon. Groups are never
/// removed.
inline RobustSolution row_generation(const LossEncoder& loss, const Representer& rep, const Matrix& upsilon,
                                     double radius, const RGConfig& config, const conic::IpmSettings& settings = {}) {
  config.validate();
  const Index n = upsilon.rows();
  require(n >= 1, "row generation: empty Upsilon");
  std::vector<char> included(static_cast<std::size_t>(n), 0);
  std::vector<Index> active;
  {
    Rng rng = make_rng(config.seed, {stream::row_seeds});
    std::vector<Index> pool = all_scenarios(n);
    const Index take = std::min<Index>(config.m0, n);
    for (Index i = 0; i < take; ++i) {
      std::uniform_int_distribution<Index> pick(i, n - 1);
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
      active.push_back(pool[static_cast<std::size_t>(i)]);
      included[static_cast<std::size_t>(pool[static_cast<std::size_t>(i)])] = 1;
    }
  }

  double cap = config.norm_cap;
  RobustSolution out;
  for (long it = 1; it <= config.i_max; ++it) {
    ProgramLayout lay;
    const conic::ConicProgram prog = assemble_program(loss, rep, upsilon, radius, active, cap, &lay);
    const conic::SolveResult r = conic::solve(prog, settings);
    out = detail::unpack(r, lay, loss, rep, upsilon);
    out.rg_iterations = it;
    out.final_cap = cap;
    if (r.status != conic::Status::optimal) return out;

    const Vector v = violations(loss, rep, upsilon, out.decision, out.coef, out.beta);
    std::vector<Index> violated;
    for (Index l = 0; l < n; ++l) {
      if (!included[static_cast<std::size_t>(l)] && v(l) > config.epsilon) violated.push_back(l);
    }
    if (violated.empty()) {
      const bool cap_binding = !r.norm_values.empty() && r.norm_values.front() >= cap * (1.0 - 1e-6);
      if (!cap_binding) return out;
      cap *= 4.0;
      continue;
    }
    std::sort(violated.begin(), violated.end(), [&](Index a, Index b) { return v(a) > v(b) || (v(a) == v(b) && a < b); });
    const std::size_t add = std::min<std::size_t>(violated.size(), static_cast<std::size_t>(config.c_max));
    for (std::size_t k = 0; k < add; ++k) {
      active.push_back(violated[k]);
      included[static_cast<std::size_t>(violated[k])] = 1;
    }
  }
  out.result.status = conic::Status::iteration_limit;
  return out;
}

struct InnerResult {
  conic::Status status = conic::Status::iteration_limit;
  double value = 0.0;
  Vector weights;
};

/// max_p sum_l p_l f(x, u_l) over the simplex on Upsilon subject to
/// ||Phi^T p - m|| <= R, where Phi holds Upsilon features and m the center.
inline InnerResult inner_worst_case(const Vector& x, const LossEncoder& loss, const Matrix& upsilon,
                                    const Matrix& upsilon_features, const Vector& center_features, double radius,
                                    const conic::IpmSettings& settings = {}) {
  require(upsilon_features.rows() == upsilon.rows(), "inner_worst_case: feature rows do not match Upsilon");
  require(center_features.size() == upsilon_features.cols(), "inner_worst_case: center dimension mismatch");
  require(radius >= 0.0, "inner_worst_case: negative radius");
  const Index n = upsilon.rows();
  const Index r = upsilon_features.cols();
  Vector f(n);
  for (Index l = 0; l < n; ++l) f(l) = loss.evaluate(x, upsilon.row(l));

  // Variables: p (n), then u = Phi^T p (r) when the ball has interior.
  const bool interior = radius > 1e-12;
  conic::ConicProgram prog(n + (interior ? r : 0));
  prog.objective().head(n) = -f;
  conic::SparseRow ones;
  for (Index l = 0; l < n; ++l) {
    ones.emplace_back(l, 1.0);
    prog.add_inequality({{l, -1.0}}, 0.0);
  }
  prog.add_equality(ones, 1.0);
  for (Index k = 0; k < r; ++k) {
    conic::SparseRow row;
    for (Index l = 0; l < n; ++l) {
      if (upsilon_features(l, k) != 0.0) row.emplace_back(l, upsilon_features(l, k));
    }
    if (interior) {
      row.emplace_back(n + k, -1.0);
      prog.add_equality(row, 0.0);
    } else {
      prog.add_equality(row, center_features(k));
    }
  }
  if (interior && r > 0) {
    conic::SocConstraint soc;
    soc.offset = n;
    soc.V = Matrix::Identity(r, r);
    soc.v = -center_features;
    soc.a0 = radius;
    prog.add_soc_constraint(std::move(soc));
  }
  const conic::SolveResult res = conic::solve(prog, settings);
  InnerResult out;
  out.status = res.status;
  if (res.status == conic::Status::optimal) {
    out.weights = res.primal.head(n);
    out.value = f.dot(out.weights);
  } else if (res.status == conic::Status::infeasible) {
    warn("inner_worst_case: no distribution on Upsilon lies inside the ball");
  }
  return out;
}

struct GapReport {
  double full_objective = 0.0;
  double reduced_objective = 0.0;
  double gap = 0.0;
  double relative_gap = 0.0;
  double nystrom_norm = 0.0;
  double theta_norm = 0.0;
  double c0 = 1.0;
  double bound = 0.0;
};

inline GapReport make_gap_report(double full_objective, double reduced_objective, double nystrom_norm,
                                 double theta_norm) {
  GapReport g;
  g.full_objective = full_objective;
  g.reduced_objective = reduced_objective;
  g.gap = reduced_objective - full_objective;
  g.relative_gap = g.gap / std::max(std::abs(full_objective), 1e-12);
  g.nystrom_norm = std::max(0.0, nystrom_norm);
  g.theta_norm = theta_norm;
  g.c0 = std::max(1.0, std::abs(full_objective));
  g.bound = g.c0 * theta_norm * std::sqrt(g.nystrom_norm);
  if (g.gap < -1e-6) warn("gap_bound: reduced objective below full objective by " + std::to_string(-g.gap));
  return g;
}

/// Dense form: residual R = K_NN - K_NS K_SS^+ K_SN with an eigenvalue
/// pseudoinverse (relative cutoff 1e-10).
inline GapReport gap_bound(double full_objective, double reduced_objective, const Matrix& k_nn, const Matrix& k_sn,
                           const Matrix& k_ss, const Vector& theta_star) {
  require(k_nn.rows() == k_nn.cols() && k_ss.rows() == k_ss.cols(), "gap_bound: Gram blocks must be square");
  require(k_sn.rows() == k_ss.rows() && k_sn.cols() == k_nn.rows(), "gap_bound: K_SN has wrong shape");
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (k_ss + k_ss.transpose()));
  const Vector ev = es.eigenvalues();
  const double cutoff = 1e-10 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  Vector inv = Vector::Zero(ev.size());
  for (Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > cutoff) inv(i) = 1.0 / ev(i);
  }
  const Matrix proj = es.eigenvectors().transpose() * k_sn;
  Matrix residual = k_nn - proj.transpose() * inv.asDiagonal() * proj;
  residual = 0.5 * (residual + residual.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> rs(residual, Eigen::EigenvaluesOnly);
  return make_gap_report(full_objective, reduced_objective, rs.eigenvalues().maxCoeff(), theta_star.norm());
}

inline GapReport gap_bound(const conic::SolveResult& full, const conic::SolveResult& reduced, const Matrix& k_nn,
                           const Matrix& k_sn, const Matrix& k_ss, const Vector& theta_star) {
  require(full.status == conic::Status::optimal && reduced.status == conic::Status::optimal,
          "gap_bound: both solves must be optimal");
  return gap_bound(full.objective, reduced.objective, k_nn, k_sn, k_ss, theta_star);
}

/// Feature form: with nested pivots, R = Phi_rest Phi_rest^T where Phi_rest are
/// the Upsilon feature columns beyond the reduced rank.
inline GapReport gap_bound_features(const RobustSolution& full, const RobustSolution& reduced, const FeatureSpace& fs) {
  require(full.optimal() && reduced.optimal(), "gap_bound: both solves must be optimal");
  require(fs.has_full, "gap_bound: feature space lacks the full expansion");
  double nystrom = 0.0;
  const Index extra = fs.rank() - fs.reduced_rank;
  if (extra > 0) {
    const Matrix rest = fs.upsilon_features.rightCols(extra);
    Eigen::SelfAdjointEigenSolver<Matrix> es(rest.transpose() * rest, Eigen::EigenvaluesOnly);
    nystrom = es.eigenvalues().maxCoeff();
  }
  const Vector theta = fs.basis.pivot_coefficients(full.coef);
  return make_gap_report(full.objective, reduced.objective, nystrom, theta.norm());
}

}  // namespace roodso
