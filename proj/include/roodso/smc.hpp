#pragma once

// Support measure clustering: a soft minimum enclosing ball of source
// embeddings in the RKHS, fitted through its dual QP
//
//   max  -a^T K a + a^T diag(K)   s.t.  0 <= a_i <= 1/(M nu),  sum a = 1.
//
// The center is sum_i a_i mu_i; the squared radius is the squared distance from
// the center to any boundary support measure.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "roodso/kernel.hpp"

namespace roodso {

struct SMCConfig {
  double nu = 0.5;
  double qp_tolerance = 1e-8;
  double boundary_tol = 1e-6;
  long max_qp_iters = 100000;

  void validate() const {
    require(std::isfinite(nu) && nu > 0.0 && nu < 1.0, "nu must lie in (0, 1), got " + std::to_string(nu));
    require(qp_tolerance > 0.0, "qp_tolerance must be positive");
    require(boundary_tol > 0.0, "boundary_tol must be positive");
    require(max_qp_iters > 0, "max_qp_iters must be positive");
  }

  double cap(std::size_t m) const { return 1.0 / (static_cast<double>(m) * nu); }
};

struct SupportSets {
  std::vector<Index> sm, bsm, esm;
};

struct SMCSolution {
  double nu = 0.0;
  Vector alpha;
  std::vector<Index> sm, bsm, esm;
  double radius_sq = 0.0;
  double objective = 0.0;
  Matrix gram;
  KernelSpec kernel;
  bool degenerate_radius = false;  // BSM was empty; radius taken from ESM

  double radius() const { return std::sqrt(std::max(0.0, radius_sq)); }
  /// ||mu_c||^2 = a^T K a.
  double center_norm_sq() const { return alpha.dot(gram * alpha); }
};

/// Euclidean projection onto {0 <= a <= cap, sum a = 1}. Bisection on the shift
/// theta in clip(v - theta, 0, cap), finished by an exact solve on the free set.
inline Vector project_capped_simplex(const Vector& v, double cap) {
  const Index m = v.size();
  require(m >= 1, "project_capped_simplex: empty vector");
  require(cap > 0.0, "project_capped_simplex: cap must be positive");
  if (static_cast<double>(m) * cap < 1.0 - 1e-12) {
    throw InfeasibleError("project_capped_simplex: M * cap = " + std::to_string(static_cast<double>(m) * cap) +
                          " < 1, constraint set is empty");
  }
  auto mass = [&](double theta) { return (v.array() - theta).max(0.0).min(cap).sum(); };
  double lo = v.minCoeff() - cap;  // mass(lo) = M cap >= 1
  double hi = v.maxCoeff();        // mass(hi) = 0
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mass(mid) >= 1.0) lo = mid;
    else hi = mid;
  }
  double theta = 0.5 * (lo + hi);
  // Exact shift on the free set identified by the bracket.
  {
    double free_sum = 0.0, capped = 0.0;
    Index free_count = 0;
    for (Index i = 0; i < m; ++i) {
      const double t = v(i) - theta;
      if (t >= cap) capped += cap;
      else if (t > 0.0) {
        free_sum += v(i);
        ++free_count;
      }
    }
    if (free_count > 0) {
      const double exact = (free_sum - (1.0 - capped)) / static_cast<double>(free_count);
      if (std::abs(exact - theta) <= 1e-9 * std::max(1.0, std::abs(theta))) theta = exact;
    }
  }
  return (v.array() - theta).max(0.0).min(cap).matrix();
}

inline double smc_dual_objective(const Matrix& gram, const Vector& alpha) {
  return -alpha.dot(gram * alpha) + alpha.dot(gram.diagonal());
}

/// Projected-gradient norm with unit step; zero exactly at the QP optimum.
inline double smc_kkt_residual(const Matrix& gram, const Vector& alpha, double cap) {
  const Vector grad = -2.0 * (gram * alpha) + gram.diagonal();
  return (project_capped_simplex(alpha + grad, cap) - alpha).norm();
}

/// Projected gradient ascent with Barzilai-Borwein steps, safeguarded by a
/// monotone fallback step 1/L.
inline Vector solve_dual_qp(const Matrix& gram, const SMCConfig& config) {
  config.validate();
  const Index m = gram.rows();
  require(gram.cols() == m, "solve_dual_qp: Gram matrix is not square");
  require(m >= 2, "solve_dual_qp: need at least 2 sources");
  require(gram.allFinite(), "solve_dual_qp: non-finite Gram matrix");
  const double cap = config.cap(static_cast<std::size_t>(m));

  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (gram + gram.transpose()), Eigen::EigenvaluesOnly);
  const double lipschitz = std::max(2.0 * es.eigenvalues().maxCoeff(), 1e-12);
  const double safe_step = 1.0 / lipschitz;

  auto gradient = [&](const Vector& a) -> Vector { return -2.0 * (gram * a) + gram.diagonal(); };

  Vector alpha = project_capped_simplex(Vector::Constant(m, 1.0 / static_cast<double>(m)), cap);
  Vector grad = gradient(alpha);
  double obj = smc_dual_objective(gram, alpha);
  double step = safe_step;
  double residual = 0.0;
  for (long it = 0; it < config.max_qp_iters; ++it) {
    residual = (project_capped_simplex(alpha + grad, cap) - alpha).norm();
    if (residual <= config.qp_tolerance) return alpha;

    Vector trial = project_capped_simplex(alpha + step * grad, cap);
    double trial_obj = smc_dual_objective(gram, trial);
    if (!(trial_obj >= obj - 1e-15 * std::max(1.0, std::abs(obj)))) {
      trial = project_capped_simplex(alpha + safe_step * grad, cap);
      trial_obj = smc_dual_objective(gram, trial);
    }
    const Vector trial_grad = gradient(trial);
    const Vector s = trial - alpha;
    const Vector y = trial_grad - grad;
    const double sy = -s.dot(y);  // = 2 s^T K s >= 0
    step = (sy > 1e-300) ? s.squaredNorm() / sy : safe_step;
    if (!std::isfinite(step) || step <= 0.0) step = safe_step;
    step = std::min(step, 1e6 * safe_step);
    alpha = trial;
    grad = trial_grad;
    obj = trial_obj;
  }
  residual = (project_capped_simplex(alpha + grad, cap) - alpha).norm();
  if (residual <= config.qp_tolerance) return alpha;
  throw SolverError("solve_dual_qp: no convergence after " + std::to_string(config.max_qp_iters) +
                    " iterations, KKT residual " + std::to_string(residual));
}

/// SM = {a_i > tau}; ESM = {a_i >= cap - tau}; BSM = SM \ ESM, tau = boundary_tol * cap.
inline SupportSets classify_supports(const Vector& alpha, const SMCConfig& config) {
  config.validate();
  const double cap = config.cap(static_cast<std::size_t>(alpha.size()));
  const double tau = config.boundary_tol * cap;
  SupportSets sets;
  for (Index i = 0; i < alpha.size(); ++i) {
    if (alpha(i) > tau) {
      sets.sm.push_back(i);
      if (alpha(i) >= cap - tau) sets.esm.push_back(i);
      else sets.bsm.push_back(i);
    }
  }
  return sets;
}

/// ||mu_i - mu_c||^2 = K_ii - 2 (K a)_i + a^T K a, clamped at zero.
inline double center_distance_sq(const Vector& alpha, const Matrix& gram, Index i) {
  require(i >= 0 && i < gram.rows(), "center_distance_sq: index out of range");
  const double value = gram(i, i) - 2.0 * gram.row(i).dot(alpha) + alpha.dot(gram * alpha);
  return value < 0.0 ? 0.0 : value;
}

struct RadiusResult {
  double radius_sq = 0.0;
  bool degenerate = false;
};

/// Median of the BSM distances; the minimum ESM distance when BSM is empty.
inline RadiusResult radius_squared_detail(const Vector& alpha, const Matrix& gram, const std::vector<Index>& bsm,
                                          const std::vector<Index>& esm) {
  if (bsm.empty() && esm.empty()) throw InputError("radius_squared: support set is empty");
  if (!bsm.empty()) {
    std::vector<double> d;
    d.reserve(bsm.size());
    for (Index i : bsm) d.push_back(center_distance_sq(alpha, gram, i));
    std::sort(d.begin(), d.end());
    const std::size_t k = d.size();
    const double med = (k % 2 == 1) ? d[k / 2] : 0.5 * (d[k / 2 - 1] + d[k / 2]);
    return {med, false};
  }
  warn("radius_squared: no boundary support measures; radius taken as the minimum exterior distance");
  double best = std::numeric_limits<double>::infinity();
  for (Index i : esm) best = std::min(best, center_distance_sq(alpha, gram, i));
  return {best, true};
}

inline double radius_squared(const Vector& alpha, const Matrix& gram, const std::vector<Index>& bsm,
                             const std::vector<Index>& esm) {
  return radius_squared_detail(alpha, gram, bsm, esm).radius_sq;
}

/// Fit from a precomputed Gram matrix.
inline SMCSolution fit_gram(const KernelSpec& spec, const Matrix& gram, const SMCConfig& config) {
  config.validate();
  require(gram.rows() >= 2, "SMC fit needs at least 2 sources, got " + std::to_string(gram.rows()));
  SMCSolution sol;
  sol.nu = config.nu;
  sol.kernel = spec;
  sol.gram = gram;
  sol.alpha = solve_dual_qp(gram, config);
  const SupportSets sets = classify_supports(sol.alpha, config);
  sol.sm = sets.sm;
  sol.bsm = sets.bsm;
  sol.esm = sets.esm;
  const RadiusResult r = radius_squared_detail(sol.alpha, gram, sol.bsm, sol.esm);
  sol.radius_sq = r.radius_sq;
  sol.degenerate_radius = r.degenerate;
  sol.objective = smc_dual_objective(gram, sol.alpha);
  return sol;
}

inline SMCSolution fit(const KernelSpec& spec, const SourceCollection& collection, const SMCConfig& config) {
  config.validate();
  require(collection.size() >= 2, "SMC fit needs at least 2 sources, got " + std::to_string(collection.size()));
  return fit_gram(spec, gram_matrix(spec, collection), config);
}

struct MembershipResult {
  double distance_sq = 0.0;
  bool inside = false;
  double slack = 0.0;
};

/// Whether the empirical embedding of `candidate` lies in the fitted ball. The
/// collection must be the one the solution was fitted on.
inline MembershipResult membership(const SMCSolution& solution, const KernelSpec& spec,
                                   const SourceCollection& collection, const Matrix& candidate) {
  require(candidate.rows() > 0, "membership: empty candidate");
  require(candidate.cols() == collection.dim(), "membership: dimension mismatch");
  require(static_cast<Index>(collection.size()) == solution.alpha.size(),
          "membership: collection does not match the fitted solution");
  double cross = 0.0;
  for (Index i : solution.sm) {
    cross += solution.alpha(i) *
             embedding_inner(spec, candidate, collection[static_cast<std::size_t>(i)].samples());
  }
  MembershipResult out;
  out.distance_sq = solution.center_norm_sq() - 2.0 * cross + embedding_inner(spec, candidate, candidate);
  out.slack = solution.radius_sq - out.distance_sq;
  out.inside = out.slack >= -1e-10;
  return out;
}

inline MembershipResult membership(const SMCSolution& solution, const KernelSpec& spec,
                                   const SourceCollection& collection, const Dataset& candidate) {
  return membership(solution, spec, collection, candidate.samples());
}

inline nlohmann::json to_json(const SMCSolution& s) {
  nlohmann::json j;
  j["nu"] = s.nu;
  j["alpha"] = std::vector<double>(s.alpha.data(), s.alpha.data() + s.alpha.size());
  j["sm"] = s.sm;
  j["bsm"] = s.bsm;
  j["esm"] = s.esm;
  j["radius_sq"] = s.radius_sq;
  j["objective"] = s.objective;
  j["kernel"] = {{"family", to_string(s.kernel.family)}, {"bandwidth", s.kernel.bandwidth}};
  return j;
}

/// Inverse of to_json. The Gram matrix is not serialized; callers refit or
/// recompute it from the sources when needed.
inline SMCSolution smc_from_json(const nlohmann::json& j) {
  SMCSolution s;
  s.nu = j.at("nu").get<double>();
  const auto alpha = j.at("alpha").get<std::vector<double>>();
  s.alpha = Eigen::Map<const Vector>(alpha.data(), static_cast<Index>(alpha.size()));
  s.sm = j.at("sm").get<std::vector<Index>>();
  s.bsm = j.at("bsm").get<std::vector<Index>>();
  s.esm = j.at("esm").get<std::vector<Index>>();
  s.radius_sq = j.at("radius_sq").get<double>();
  s.objective = j.at("objective").get<double>();
  s.kernel.family = kernel_family_from_string(j.at("kernel").at("family").get<std::string>());
  s.kernel.bandwidth = j.at("kernel").at("bandwidth").get<double>();
  return s;
}

}  // namespace roodso
