#pragma once

// Pinned-seed verification suites. Each returns measurements plus a verdict
// at the documented thresholds.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "roodso/pipeline.hpp"

namespace roodso {

struct SuiteReport {
  std::string suite;
  bool passed = false;
  std::string message;
  nlohmann::json details = nlohmann::json::object();
};

/// |ESM| <= ceil(nu M) and |SM| >= floor(nu M) on random instances over
/// nu in {0.1, 0.2, 0.5} and M in {5, 20}.
inline SuiteReport verify_nu_property(std::uint64_t seed, Index instances = 100) {
  const double nus[] = {0.1, 0.2, 0.5};
  const Index ms[] = {5, 20};
  SuiteReport rep;
  rep.suite = "nu-property";
  Index failures = 0;
  nlohmann::json rows = nlohmann::json::array();
  for (Index k = 0; k < instances; ++k) {
    const double nu = nus[k % 3];
    const Index m = ms[(k / 3) % 2];
    MetaGenConfig meta;
    meta.sources = m;
    meta.n_lo = 20;
    meta.n_hi = 60;
    const MetaGenerator gen(meta, sub_seed(seed, {stream::instance, static_cast<std::uint64_t>(k)}));
    const SourceCollection data = gen.sources();
    const KernelSpec spec{KernelFamily::rbf, median_heuristic(data)};
    SMCConfig cfg;
    cfg.nu = nu;
    const SMCSolution s = fit(spec, data, cfg);
    const double nm = nu * static_cast<double>(m);
    const auto esm = static_cast<Index>(s.esm.size()), sm = static_cast<Index>(s.sm.size());
    const bool ok = esm <= static_cast<Index>(std::ceil(nm - 1e-9)) && sm >= static_cast<Index>(std::floor(nm + 1e-9));
    if (!ok) ++failures;
    rows.push_back({{"nu", nu}, {"M", m}, {"sm", sm}, {"bsm", s.bsm.size()}, {"esm", esm}, {"ok", ok}});
  }
  rep.passed = failures == 0;
  rep.message = std::to_string(instances - failures) + "/" + std::to_string(instances) + " instances satisfy the bounds";
  rep.details = {{"instances", rows}, {"failures", failures}};
  return rep;
}

struct DualityCase {
  double objective = 0.0;
  double inner = 0.0;
  double error = 0.0;
  Index upsilon = 0;
};

/// Small newsvendor instance with |Upsilon| <= 30 solved over all of
/// Upsilon, compared against the inner worst case at the optimal decision.
inline DualityCase duality_case(std::uint64_t seed, Index k) {
  MetaGenConfig meta;
  meta.sources = 3;
  meta.n_lo = 4;
  meta.n_hi = 6;
  const MetaGenerator gen(meta, sub_seed(seed, {stream::instance, static_cast<std::uint64_t>(k)}));
  const SourceCollection data = gen.sources();
  const KernelSpec spec{KernelFamily::rbf, median_heuristic(data)};
  std::vector<Matrix> herded;
  for (const Dataset& d : data) herded.push_back(d.samples());
  const auto [lo, hi] = sample_box(data);
  const Matrix sup = latin_hypercube(10, lo, hi, seed + static_cast<std::uint64_t>(k));
  const PointSets pts = build_point_sets(data, herded, sup);
  SMCConfig cfg;
  cfg.nu = 0.2 + 0.3 * static_cast<double>(k % 3);
  const SMCSolution smc = fit(spec, data, cfg);
  const FeatureSpace fs = build_feature_space(spec, pts, center_atoms(smc, data), true);
  const Newsvendor loss = newsvendor_for(data);
  const RobustSolution sol = solve_full(loss, feature_representer(fs, false), pts.upsilon, smc.radius());
  if (!sol.optimal()) throw SolverError("duality case " + std::to_string(k) + ": solve failed");
  const InnerResult inner = inner_worst_case(sol.decision, loss, pts.upsilon, fs.upsilon_features, fs.center,
                                             smc.radius());
  if (inner.status != conic::Status::optimal) throw SolverError("duality case " + std::to_string(k) + ": inner failed");
  DualityCase c;
  c.objective = sol.objective;
  c.inner = inner.value;
  c.error = std::abs(inner.value - sol.objective) / (1.0 + std::abs(sol.objective));
  c.upsilon = pts.upsilon.rows();
  return c;
}

inline SuiteReport verify_duality(std::uint64_t seed, Index instances = 20) {
  SuiteReport rep;
  rep.suite = "duality";
  double worst = 0.0;
  nlohmann::json rows = nlohmann::json::array();
  for (Index k = 0; k < instances; ++k) {
    const DualityCase c = duality_case(seed, k);
    worst = std::max(worst, c.error);
    rows.push_back({{"objective", c.objective}, {"inner", c.inner}, {"scaled_error", c.error}, {"upsilon", c.upsilon}});
  }
  rep.passed = worst <= 1e-4;
  rep.message = "largest scaled duality gap " + std::to_string(worst);
  rep.details = {{"cases", rows}, {"max_scaled_error", worst}};
  return rep;
}

struct GapCase {
  GapReport reduced;    // Gamma from herding
  GapReport identity;   // Gamma = Upsilon
  Index upsilon = 0, gamma = 0;
};

/// RCR gap on the synthetic newsvendor at M sources with n samples each.
inline GapCase gap_case(std::uint64_t seed, Index k, Index sources = 20, Index samples = 500, double nu = 0.5) {
  MetaGenConfig meta;
  meta.sources = sources;
  meta.n_lo = meta.n_hi = samples;
  const std::uint64_t s = sub_seed(seed, {stream::instance, static_cast<std::uint64_t>(k)});
  const MetaGenerator gen(meta, s);
  const SourceCollection data = gen.sources();
  PipelineConfig pc;
  pc.seed = s;
  pc.nu = nu;
  pc.compare_full = true;
  const PreparedData prepared = prepare(data, pc);
  const RoodResult r = solve_with_nu(data, newsvendor_for(data), pc, prepared, nu);
  if (!r.gap) throw SolverError("gap case " + std::to_string(k) + ": solve failed");
  GapCase c;
  c.reduced = *r.gap;
  c.upsilon = prepared.points.upsilon.rows();
  c.gamma = prepared.points.gamma.rows();

  PointSets same = prepared.points;
  same.gamma = same.upsilon;
  same.gamma_tags = same.upsilon_tags;
  same.gamma_in_upsilon = all_scenarios(same.upsilon.rows());
  const FeatureSpace fs = build_feature_space(prepared.spec, same, r.model.atoms, false, pc.feature_tol);
  const RobustSolution again = solve_representer(newsvendor_for(data), feature_representer(fs, true),
                                                 same.upsilon, r.model.smc.radius(), pc);
  if (!again.optimal()) throw SolverError("gap case " + std::to_string(k) + ": Gamma = Upsilon solve failed");
  c.identity = make_gap_report(r.full_solution->objective, again.objective, 0.0, 0.0);
  return c;
}

inline SuiteReport verify_gap(std::uint64_t seed, Index seeds = 10) {
  SuiteReport rep;
  rep.suite = "gap";
  std::vector<double> rel;
  double min_gap = std::numeric_limits<double>::infinity(), max_identity = 0.0;
  nlohmann::json rows = nlohmann::json::array();
  for (Index k = 0; k < seeds; ++k) {
    const GapCase c = gap_case(seed, k);
    rel.push_back(c.reduced.relative_gap);
    min_gap = std::min(min_gap, c.reduced.gap);
    max_identity = std::max(max_identity, std::abs(c.identity.gap));
    rows.push_back({{"full", c.reduced.full_objective}, {"reduced", c.reduced.reduced_objective},
                    {"gap", c.reduced.gap}, {"relative_gap", c.reduced.relative_gap},
                    {"bound", c.reduced.bound}, {"upsilon", c.upsilon}, {"gamma", c.gamma}});
  }
  const double med = median_of(rel);
  rep.passed = min_gap >= -1e-6 && max_identity <= 1e-6 && med <= 0.04;
  rep.message = "median relative gap " + std::to_string(med) + ", smallest gap " + std::to_string(min_gap);
  rep.details = {{"cases", rows}, {"median_relative_gap", med}, {"min_gap", min_gap}, {"identity_gap", max_identity}};
  return rep;
}

inline SuiteReport verify_rates(std::uint64_t seed, const RateConfig& config = {}) {
  const RateReport r = rate_experiments(seed, config);
  SuiteReport rep;
  rep.suite = "rates";
  const bool emb = std::abs(r.embedding_slope + 1.0) <= 0.2;
  const bool gram = std::abs(r.gram_slope + 0.5) <= 0.15;
  const bool rad = std::abs(r.radius_slope + 0.5) <= 0.2;
  rep.passed = emb && gram && rad && r.moment_bound_holds;
  rep.message = "slopes: embedding " + std::to_string(r.embedding_slope) + ", gram " + std::to_string(r.gram_slope) +
                ", radius " + std::to_string(r.radius_slope);
  rep.details = {{"n", r.sample_sizes},
                 {"embedding_sq_error", r.embedding_sq_error},
                 {"gram_error", r.gram_error},
                 {"radius_error", r.radius_error},
                 {"embedding_slope", r.embedding_slope},
                 {"gram_slope", r.gram_slope},
                 {"radius_slope", r.radius_slope},
                 {"moment_bound_holds", r.moment_bound_holds}};
  return rep;
}

inline SuiteReport verify_coverage(std::uint64_t seed, const CoverageConfig& config = {}) {
  const CoverageResult c = coverage_experiment(config, seed);
  SuiteReport rep;
  rep.suite = "coverage";
  const double target = 1.0 - config.nu - 0.05;
  rep.passed = c.coverage >= target;
  rep.message = "coverage " + std::to_string(c.coverage) + " (target " + std::to_string(target) + ")";
  rep.details = {{"coverage", c.coverage}, {"inside", c.inside}, {"total", c.total},
                 {"ci_low", c.ci_low},     {"ci_high", c.ci_high}, {"nu", config.nu}};
  return rep;
}

inline const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> names{"nu-property", "rates", "coverage", "duality", "gap"};
  return names;
}

inline SuiteReport run_suite(const std::string& name, std::uint64_t seed) {
  if (name == "nu-property") return verify_nu_property(seed);
  if (name == "rates") return verify_rates(seed);
  if (name == "coverage") return verify_coverage(seed);
  if (name == "duality") return verify_duality(seed);
  if (name == "gap") return verify_gap(seed);
  throw InputError("unknown verification suite '" + name + "'");
}

}  // namespace roodso
