#pragma once

// End-to-end solve, baselines, the synthetic meta-distribution, validation
// based selection of nu, and Monte Carlo experiments.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "roodso/robust.hpp"

namespace roodso {

enum class Representation { features, coefficients };

inline std::vector<double> default_nu_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 19; ++k) g.push_back(0.05 * k);
  return g;
}

struct PipelineConfig {
  std::vector<double> nu_grid = default_nu_grid();
  std::optional<double> nu;  // fixed nu; otherwise selected on the grid
  long herding_steps = 50;
  long supplemental = -1;  // negative: max(10, ceil(0.1 N))
  RGConfig rg;
  KernelFamily family = KernelFamily::rbf;
  double bandwidth = 0.0;  // 0: median heuristic on pooled samples
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;
  bool use_rcr = true;
  bool use_rg = true;
  bool herded_gram = true;
  bool compare_full = false;  // also solve over all of Upsilon and report the gap
  Representation representation = Representation::features;
  double feature_tol = 1e-12;
  conic::IpmSettings ipm;

  void validate() const {
    require(!nu_grid.empty() || nu.has_value(), "pipeline: nu grid is empty");
    for (double v : nu_grid) require(v > 0.0 && v < 1.0, "pipeline: nu grid values must lie in (0, 1)");
    if (nu) require(*nu > 0.0 && *nu < 1.0, "pipeline: nu must lie in (0, 1)");
    require(herding_steps >= 1, "pipeline: herding steps must be positive");
    require(validation_fraction > 0.0 && validation_fraction < 1.0, "pipeline: validation fraction must lie in (0, 1)");
    require(bandwidth >= 0.0 && std::isfinite(bandwidth), "pipeline: bandwidth must be nonnegative");
    rg.validate();
  }
};

/// nu-independent artifacts shared across a nu grid.
struct PreparedData {
  KernelSpec spec;
  std::vector<Matrix> herded;
  Matrix gram;
  PointSets points;
  FeatureSpace features;
};

inline PreparedData prepare(const SourceCollection& collection, const PipelineConfig& config) {
  config.validate();
  require(collection.size() >= 2, "pipeline: need at least 2 sources, got " + std::to_string(collection.size()));
  PreparedData d;
  d.spec.family = config.family;
  d.spec.bandwidth = config.bandwidth > 0.0 ? config.bandwidth : median_heuristic(collection);
  d.spec.validate();
  d.herded = herd_collection(d.spec, collection, HerdingConfig{config.herding_steps});
  if (config.herded_gram) {
    std::vector<Dataset> hd;
    for (std::size_t i = 0; i < d.herded.size(); ++i) hd.emplace_back(d.herded[i], collection[i].label());
    d.gram = gram_matrix(d.spec, SourceCollection(std::move(hd)));
  } else {
    d.gram = gram_matrix(d.spec, collection);
  }
  const Index j = config.supplemental >= 0 ? static_cast<Index>(config.supplemental)
                                           : default_supplemental_count(collection.total_samples());
  auto [lo, hi] = sample_box(collection);
  for (Index k = 0; k < lo.size(); ++k) {
    if (!(lo(k) < hi(k))) hi(k) = lo(k) + 1e-9 * std::max(1.0, std::abs(lo(k)));
  }
  const Matrix supplemental = latin_hypercube(j, lo, hi, config.seed);
  d.points = build_point_sets(collection, d.herded, supplemental);
  if (config.representation == Representation::features) {
    d.features = build_feature_space(d.spec, d.points, !config.use_rcr || config.compare_full, config.feature_tol);
  }
  return d;
}

struct UncertaintyModel {
  SMCSolution smc;
  KernelSpec spec;
  PointSets points;
  CenterAtoms atoms;
};

struct RoodResult {
  double nu = 0.0;
  Vector decision;
  UncertaintyModel model;
  RobustSolution solution;
  std::optional<RobustSolution> full_solution;
  std::optional<GapReport> gap;
};

inline RobustSolution solve_representer(const LossEncoder& loss, const Representer& rep, const Matrix& upsilon,
                                        double radius, const PipelineConfig& config) {
  if (!config.use_rg) return solve_full(loss, rep, upsilon, radius, config.ipm);
  RGConfig rg = config.rg;
  rg.seed = config.seed;
  return row_generation(loss, rep, upsilon, radius, rg, config.ipm);
}

inline RoodResult solve_with_nu(const SourceCollection& collection, const LossEncoder& loss,
                                const PipelineConfig& config, const PreparedData& prepared, double nu) {
  SMCConfig smc_config;
  smc_config.nu = nu;
  RoodResult out;
  out.nu = nu;
  out.model.spec = prepared.spec;
  out.model.points = prepared.points;
  out.model.smc = fit_gram(prepared.spec, prepared.gram, smc_config);
  out.model.atoms = center_atoms(out.model.smc, collection);
  const double radius = out.model.smc.radius();
  const Matrix& ups = prepared.points.upsilon;

  if (config.representation == Representation::features) {
    FeatureSpace fs = prepared.features;
    assign_center(fs, out.model.atoms);
    out.solution = solve_representer(loss, feature_representer(fs, config.use_rcr), ups, radius, config);
    if (config.use_rcr && config.compare_full) {
      out.full_solution = solve_representer(loss, feature_representer(fs, false), ups, radius, config);
      if (out.solution.optimal() && out.full_solution->optimal()) {
        out.gap = gap_bound_features(*out.full_solution, out.solution, fs);
      }
    }
  } else {
    const Representer rep = coefficient_representer(prepared.spec, prepared.points, config.use_rcr, out.model.atoms);
    out.solution = solve_representer(loss, rep, ups, radius, config);
    if (config.use_rcr && config.compare_full) {
      const Representer full = coefficient_representer(prepared.spec, prepared.points, false, out.model.atoms);
      out.full_solution = solve_representer(loss, full, ups, radius, config);
      if (out.solution.optimal() && out.full_solution->optimal()) {
        const Matrix k_nn = cross_kernel_block(prepared.spec, ups, ups);
        const Matrix k_sn = cross_kernel_block(prepared.spec, prepared.points.gamma, ups);
        const Matrix k_ss = cross_kernel_block(prepared.spec, prepared.points.gamma, prepared.points.gamma);
        out.gap = gap_bound(out.full_solution->objective, out.solution.objective, k_nn, k_sn, k_ss,
                            out.full_solution->coef);
      }
    }
  }
  out.decision = out.solution.decision;
  return out;
}

/// Mean over test distributions of the empirical mean loss at `decision`.
inline double evaluate_ood(const Vector& decision, const LossEncoder& loss, const std::vector<Dataset>& tests) {
  require(!tests.empty(), "evaluate_ood: no test distributions");
  double total = 0.0;
  for (const Dataset& t : tests) total += loss.mean_loss(decision, t.samples());
  return total / static_cast<double>(tests.size());
}

struct NuSelection {
  double nu = 0.0;
  std::vector<double> grid;
  std::vector<double> validation_cost;  // NaN where the solve failed
};

struct SplitCollections {
  SourceCollection train;
  std::vector<Dataset> validation;
};

/// Per-source random split; each source keeps its identity in both parts.
inline SplitCollections split_sources(const SourceCollection& collection, double validation_fraction,
                                      std::uint64_t seed) {
  std::vector<Dataset> train, val;
  for (std::size_t i = 0; i < collection.size(); ++i) {
    const Dataset& d = collection[i];
    require(d.size() >= 5, "validation split: source '" + d.label() + "' has fewer than 5 samples");
    std::vector<Index> idx = all_scenarios(d.size());
    Rng rng = make_rng(seed, {stream::validation_split, static_cast<std::uint64_t>(i)});
    std::shuffle(idx.begin(), idx.end(), rng);
    const Index nval = std::clamp<Index>(static_cast<Index>(std::llround(validation_fraction * d.size())), 1,
                                         d.size() - 2);
    Matrix vs(nval, d.dim()), ts(d.size() - nval, d.dim());
    for (Index k = 0; k < nval; ++k) vs.row(k) = d.row(idx[static_cast<std::size_t>(k)]);
    for (Index k = nval; k < d.size(); ++k) ts.row(k - nval) = d.row(idx[static_cast<std::size_t>(k)]);
    train.emplace_back(std::move(ts), d.label());
    val.emplace_back(std::move(vs), d.label());
  }
  return {SourceCollection(std::move(train)), std::move(val)};
}

/// Grid search on a per-source 80/20 split; validation cost is the mean loss
/// over the pooled held-out samples. Ties go to the smaller nu.
inline NuSelection select_nu(const SourceCollection& collection, const LossEncoder& loss,
                             const PipelineConfig& config) {
  config.validate();
  NuSelection sel;
  sel.grid = config.nu_grid;
  std::sort(sel.grid.begin(), sel.grid.end());
  if (sel.grid.size() == 1) {
    sel.nu = sel.grid.front();
    sel.validation_cost.assign(1, std::numeric_limits<double>::quiet_NaN());
    return sel;
  }
  const SplitCollections split = split_sources(collection, config.validation_fraction, config.seed);
  const PreparedData prepared = prepare(split.train, config);
  const Matrix validation = SourceCollection(split.validation).pooled();
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  for (double nu : sel.grid) {
    double cost = std::numeric_limits<double>::quiet_NaN();
    try {
      const RoodResult r = solve_with_nu(split.train, loss, config, prepared, nu);
      if (r.solution.optimal()) cost = loss.mean_loss(r.decision, validation);
      else warn("select_nu: solve at nu = " + std::to_string(nu) + " ended with status " +
                conic::to_string(r.solution.result.status));
    } catch (const Error& e) {
      warn("select_nu: nu = " + std::to_string(nu) + " failed: " + e.what());
    }
    sel.validation_cost.push_back(cost);
    if (std::isfinite(cost) && cost < best) {
      best = cost;
      sel.nu = nu;
      found = true;
    }
  }
  if (!found) throw SolverError("select_nu: every grid point failed");
  return sel;
}

/// Full procedure; nu is fixed by the config or selected on its grid.
inline RoodResult run_rood_so(const SourceCollection& collection, const LossEncoder& loss,
                              const PipelineConfig& config) {
  config.validate();
  require(collection.size() >= 2, "run_rood_so: need at least 2 sources");
  double nu = 0.0;
  if (config.nu) nu = *config.nu;
  else nu = select_nu(collection, loss, config).nu;
  const PreparedData prepared = prepare(collection, config);
  return solve_with_nu(collection, loss, config, prepared, nu);
}

struct BaselineResult {
  Vector decision;
  double objective = 0.0;
  conic::SolveResult result;
};

namespace detail {

/// Scenario LP over groups of samples. Each sample gets a loss epigraph
/// variable r and the loss auxiliaries. worst_group: minimize the largest
/// group average; otherwise minimize sum_j weight_j r_j over one group.
/// Group averages use running partial sums q_j >= q_{j-1} + w_j r_j so that
/// every row stays sparse.
inline BaselineResult scenario_lp(const LossEncoder& loss, const std::vector<Matrix>& groups,
                                  const std::vector<Vector>& weights, bool worst_group,
                                  const conic::IpmSettings& settings) {
  const Index dx = loss.decision_dim();
  const Index naux = loss.aux_count();
  Index total = 0;
  for (const Matrix& g : groups) total += g.rows();
  const Index per_sample = 1 + naux + (worst_group ? 1 : 0);
  const Index u = dx + total * per_sample;
  conic::ConicProgram prog(u + (worst_group ? 1 : 0));
  for (const DecisionRow& row : loss.decision_space()) {
    conic::SparseRow sr;
    for (Index j = 0; j < dx; ++j) {
      if (row.coef(j) != 0.0) sr.emplace_back(j, row.coef(j));
    }
    if (row.equality) prog.add_equality(sr, row.rhs);
    else prog.add_inequality(sr, row.rhs);
  }
  Index var = dx;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    Index prev_sum = -1;
    for (Index j = 0; j < groups[g].rows(); ++j) {
      const Index r = var;
      const Index aux = var + 1;
      var += per_sample;
      if (worst_group) {
        const Index q = aux + naux;
        conic::SparseRow chain{{r, weights[g](j)}, {q, -1.0}};
        if (prev_sum >= 0) chain.emplace_back(prev_sum, 1.0);
        prog.add_inequality(chain, 0.0);
        prev_sum = q;
      } else {
        prog.objective()(r) = weights[g](j);
      }
      for (const EpigraphRow& er : loss.epigraph(groups[g].row(j))) {
        conic::SparseRow sr;
        for (Index k = 0; k < dx; ++k) {
          if (er.coef_x(k) != 0.0) sr.emplace_back(k, er.coef_x(k));
        }
        for (Index a = 0; a < naux; ++a) {
          if (er.coef_aux(a) != 0.0) sr.emplace_back(aux + a, er.coef_aux(a));
        }
        if (er.coef_r != 0.0) sr.emplace_back(r, er.coef_r);
        prog.add_inequality(sr, er.rhs);
      }
    }
    if (worst_group && prev_sum >= 0) prog.add_inequality({{prev_sum, 1.0}, {u, -1.0}}, 0.0);
  }
  if (worst_group) prog.objective()(u) = 1.0;
  BaselineResult out;
  out.result = conic::solve(prog, settings);
  if (out.result.status != conic::Status::optimal) {
    throw SolverError("scenario program ended with status " + conic::to_string(out.result.status));
  }
  out.decision = out.result.primal.head(dx);
  out.objective = out.result.objective;
  return out;
}

}  // namespace detail

/// Minimizes sum_j w_j f(x, xi_j).
inline BaselineResult weighted_saa(const LossEncoder& loss, const Matrix& samples, const Vector& weights,
                                   const conic::IpmSettings& settings = {}) {
  require(samples.rows() >= 1 && weights.size() == samples.rows(), "weighted_saa: weights do not match samples");
  return detail::scenario_lp(loss, {samples}, {weights}, false, settings);
}

/// Sample average approximation over the pooled samples.
inline BaselineResult saa_baseline(const SourceCollection& collection, const LossEncoder& loss,
                                   const conic::IpmSettings& settings = {}) {
  const Matrix pooled = collection.pooled();
  return weighted_saa(loss, pooled, Vector::Constant(pooled.rows(), 1.0 / static_cast<double>(pooled.rows())),
                      settings);
}

/// min_x max_i (1/n_i) sum_j f(x, xi_j^(i)): the worst mixture of the source
/// empirical distributions sits at a vertex.
inline BaselineResult dro_conv_baseline(const SourceCollection& collection, const LossEncoder& loss,
                                        const conic::IpmSettings& settings = {}) {
  std::vector<Matrix> groups;
  std::vector<Vector> weights;
  for (const Dataset& d : collection) {
    groups.push_back(d.samples());
    weights.push_back(Vector::Constant(d.size(), 1.0 / static_cast<double>(d.size())));
  }
  return detail::scenario_lp(loss, groups, weights, true, settings);
}

struct GaussianLaw {
  Vector mean;
  Matrix cov;

  Matrix sample(Index n, Rng& rng) const {
    const Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) throw NumericalError("Gaussian covariance is not positive definite");
    const Matrix l = llt.matrixL();
    std::normal_distribution<double> normal;
    Matrix out(n, mean.size());
    Vector z(mean.size());
    for (Index i = 0; i < n; ++i) {
      for (Index k = 0; k < z.size(); ++k) z(k) = normal(rng);
      out.row(i) = (mean + l * z).transpose();
    }
    return out;
  }
};

/// Two-dimensional Gaussian sources: mean uniform on a box, covariance a
/// random rotation and scaling of a nominal covariance.
struct MetaGenConfig {
  double mean_lo = 1.0, mean_hi = 3.0;
  Matrix nominal_cov = (Matrix(2, 2) << 0.01, 0.008, 0.008, 0.01).finished();
  double angle_lo = 0.0, angle_hi = M_PI;
  double scale_lo = 0.5, scale_hi = 2.0;
  Index sources = 20;
  Index n_lo = 200, n_hi = 500;

  void validate() const {
    require(mean_lo <= mean_hi, "meta generator: empty mean box");
    require(nominal_cov.rows() == 2 && nominal_cov.cols() == 2, "meta generator: nominal covariance must be 2x2");
    require(is_psd(nominal_cov), "meta generator: nominal covariance is not PSD");
    require(angle_lo <= angle_hi, "meta generator: empty angle range");
    require(scale_lo > 0.0 && scale_lo <= scale_hi, "meta generator: scale range must be positive");
    require(sources >= 1, "meta generator: need at least one source");
    require(n_lo >= 1 && n_lo <= n_hi, "meta generator: bad sample size range");
  }
};

class MetaGenerator {
 public:
  MetaGenerator(MetaGenConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
    config_.validate();
  }

  const MetaGenConfig& config() const { return config_; }

  GaussianLaw draw_law(Rng& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    GaussianLaw law;
    law.mean = Vector(2);
    for (Index k = 0; k < 2; ++k) law.mean(k) = config_.mean_lo + (config_.mean_hi - config_.mean_lo) * unif(rng);
    const double angle = config_.angle_lo + (config_.angle_hi - config_.angle_lo) * unif(rng);
    const double scale = config_.scale_lo + (config_.scale_hi - config_.scale_lo) * unif(rng);
    Matrix g(2, 2);
    g << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    law.cov = scale * g * config_.nominal_cov * g.transpose();
    law.cov = 0.5 * (law.cov + law.cov.transpose());
    return law;
  }

  GaussianLaw source_law(Index i) const {
    Rng rng = make_rng(seed_, {stream::meta_sources, static_cast<std::uint64_t>(i)});
    return draw_law(rng);
  }

  Dataset source(Index i) const {
    Rng rng = make_rng(seed_, {stream::meta_sources, static_cast<std::uint64_t>(i)});
    const GaussianLaw law = draw_law(rng);
    std::uniform_int_distribution<Index> size(config_.n_lo, config_.n_hi);
    const Index n = size(rng);
    return Dataset(law.sample(n, rng), "source" + std::to_string(i));
  }

  SourceCollection sources() const {
    std::vector<Dataset> out;
    for (Index i = 0; i < config_.sources; ++i) out.push_back(source(i));
    return SourceCollection(std::move(out));
  }

  GaussianLaw test_law(Index k) const {
    Rng rng = make_rng(seed_, {stream::meta_tests, static_cast<std::uint64_t>(k)});
    return draw_law(rng);
  }

  Dataset test_draw(Index k, Index n) const {
    Rng rng = make_rng(seed_, {stream::meta_tests, static_cast<std::uint64_t>(k)});
    const GaussianLaw law = draw_law(rng);
    return Dataset(law.sample(n, rng), "test" + std::to_string(k));
  }

  std::vector<Dataset> test_draws(Index count, Index n) const {
    std::vector<Dataset> out;
    for (Index k = 0; k < count; ++k) out.push_back(test_draw(k, n));
    return out;
  }

 private:
  MetaGenConfig config_;
  std::uint64_t seed_;
};

inline MetaGenerator synth_meta_generator(const MetaGenConfig& config, std::uint64_t seed) {
  return MetaGenerator(config, seed);
}

struct CoverageConfig {
  MetaGenConfig meta;
  Index sources = 200;
  double nu = 0.05;
  Index samples = 300;   // per source and per test distribution
  Index trials = 1000;   // fresh test distributions in total
  Index repetitions = 1; // independent ball fits sharing the trials
  double bandwidth = 0.0;
};

struct CoverageResult {
  double coverage = 0.0;
  double ci_low = 0.0, ci_high = 0.0;
  Index inside = 0, total = 0;
};

/// Wilson score interval at 95%.
inline std::pair<double, double> wilson_interval(Index successes, Index total) {
  if (total == 0) return {0.0, 1.0};
  const double z = 1.959963984540054;
  const double n = static_cast<double>(total);
  const double p = static_cast<double>(successes) / n;
  const double denom = 1.0 + z * z / n;
  const double centre = (p + z * z / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

/// Fraction of fresh distributions from the meta-law whose empirical
/// embedding lies in the ball fitted on M empirical sources.
inline CoverageResult coverage_experiment(const CoverageConfig& config, std::uint64_t seed) {
  require(config.trials >= 100, "coverage_experiment: need at least 100 trials");
  require(config.repetitions >= 1 && config.repetitions <= config.trials, "coverage_experiment: bad repetition count");
  require(config.sources >= 2, "coverage_experiment: need at least 2 sources");
  CoverageResult out;
  for (Index rep = 0; rep < config.repetitions; ++rep) {
    MetaGenConfig meta = config.meta;
    meta.sources = config.sources;
    meta.n_lo = meta.n_hi = config.samples;
    const MetaGenerator gen(meta, sub_seed(seed, {stream::experiment, static_cast<std::uint64_t>(rep)}));
    const SourceCollection sources = gen.sources();
    KernelSpec spec{KernelFamily::rbf, config.bandwidth > 0.0 ? config.bandwidth : median_heuristic(sources)};
    SMCConfig smc_config;
    smc_config.nu = config.nu;
    const SMCSolution smc = fit(spec, sources, smc_config);
    const Index tests = config.trials / config.repetitions + (rep < config.trials % config.repetitions ? 1 : 0);
    std::vector<char> inside(static_cast<std::size_t>(tests), 0);
    parallel_for(static_cast<std::size_t>(tests), [&](std::size_t k) {
      const Dataset t = gen.test_draw(static_cast<Index>(k), config.samples);
      inside[k] = membership(smc, spec, sources, t).inside ? 1 : 0;
    });
    for (char c : inside) out.inside += c;
    out.total += tests;
  }
  out.coverage = static_cast<double>(out.inside) / static_cast<double>(out.total);
  std::tie(out.ci_low, out.ci_high) = wilson_interval(out.inside, out.total);
  return out;
}

/// <mu_P, mu_Q> for Gaussians P, Q under the RBF kernel with bandwidth s:
/// s^d det(S)^{-1/2} exp(-dm^T S^{-1} dm / 2), S = S_P + S_Q + s^2 I.
inline double gaussian_rbf_inner(const GaussianLaw& p, const GaussianLaw& q, double bandwidth) {
  const Index d = p.mean.size();
  const Matrix s = p.cov + q.cov + bandwidth * bandwidth * Matrix::Identity(d, d);
  const Eigen::LLT<Matrix> llt(s);
  const Vector dm = p.mean - q.mean;
  const double quad = dm.dot(llt.solve(dm));
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return std::pow(bandwidth, static_cast<double>(d)) * std::exp(-0.5 * logdet - 0.5 * quad);
}

/// <phi(y), mu_P> for a Gaussian P under the RBF kernel.
inline Vector gaussian_rbf_point_inner(const Matrix& points, const GaussianLaw& p, double bandwidth) {
  const Index d = p.mean.size();
  const Matrix s = p.cov + bandwidth * bandwidth * Matrix::Identity(d, d);
  const Eigen::LLT<Matrix> llt(s);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double scale = std::pow(bandwidth, static_cast<double>(d)) * std::exp(-0.5 * logdet);
  Vector out(points.rows());
  for (Index i = 0; i < points.rows(); ++i) {
    const Vector dm = points.row(i).transpose() - p.mean;
    out(i) = scale * std::exp(-0.5 * dm.dot(llt.solve(dm)));
  }
  return out;
}

struct RateConfig {
  std::vector<Index> sample_sizes{50, 200, 800, 3200};
  Index seeds = 50;
  Index sources = 5;
  double nu = 0.5;
  double bandwidth = 1.0;
  MetaGenConfig meta;
};

struct RateReport {
  std::vector<Index> sample_sizes;
  std::vector<double> embedding_sq_error;  // mean over seeds and sources
  std::vector<double> gram_error;          // median spectral error over seeds
  std::vector<double> radius_error;        // median |R^2 - R^2_ref| over seeds
  double embedding_slope = 0.0, gram_slope = 0.0, radius_slope = 0.0;
  bool moment_bound_holds = true;          // E||mu_hat - mu||^2 <= 16.04 / n
};

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "loglog_slope: need at least two points");
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    require(x[i] > 0.0 && y[i] > 0.0, "loglog_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

inline double median_of(std::vector<double> v) {
  require(!v.empty(), "median_of: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size();
  return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

/// Convergence rates of empirical embeddings, Gram matrices and the fitted
/// radius, against closed-form Gaussian-RBF references.
inline RateReport rate_experiments(std::uint64_t seed, const RateConfig& config = {}) {
  require(config.sources >= 2 && config.seeds >= 1, "rate_experiments: bad configuration");
  MetaGenConfig meta = config.meta;
  meta.sources = config.sources;
  const MetaGenerator gen(meta, sub_seed(seed, {stream::experiment}));
  std::vector<GaussianLaw> laws;
  for (Index i = 0; i < config.sources; ++i) laws.push_back(gen.source_law(i));
  const Index m = config.sources;
  const double bw = config.bandwidth;
  const KernelSpec spec{KernelFamily::rbf, bw};

  Matrix k_ref(m, m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < m; ++j) k_ref(i, j) = gaussian_rbf_inner(laws[i], laws[j], bw);
  }
  SMCConfig smc_config;
  smc_config.nu = config.nu;
  const double r2_ref = fit_gram(spec, k_ref, smc_config).radius_sq;

  RateReport rep;
  rep.sample_sizes = config.sample_sizes;
  for (Index n : config.sample_sizes) {
    std::vector<double> emb(static_cast<std::size_t>(config.seeds)), gram(emb.size()), rad(emb.size());
    parallel_for(static_cast<std::size_t>(config.seeds), [&](std::size_t s) {
      std::vector<Dataset> ds;
      double emb_sum = 0.0;
      for (Index i = 0; i < m; ++i) {
        Rng rng = make_rng(seed, {stream::experiment, static_cast<std::uint64_t>(n), s, static_cast<std::uint64_t>(i)});
        ds.emplace_back(laws[static_cast<std::size_t>(i)].sample(n, rng));
      }
      const SourceCollection col(ds);
      const Matrix k_hat = gram_matrix(spec, col);
      for (Index i = 0; i < m; ++i) {
        const double cross = gaussian_rbf_point_inner(ds[static_cast<std::size_t>(i)].samples(),
                                                      laws[static_cast<std::size_t>(i)], bw)
                                 .mean();
        emb_sum += k_hat(i, i) - 2.0 * cross + k_ref(i, i);
      }
      emb[s] = emb_sum / static_cast<double>(m);
      const Matrix diff = k_hat - k_ref;
      Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (diff + diff.transpose()), Eigen::EigenvaluesOnly);
      gram[s] = es.eigenvalues().cwiseAbs().maxCoeff();
      rad[s] = std::abs(fit_gram(spec, k_hat, smc_config).radius_sq - r2_ref);
    });
    const double mean_emb = std::accumulate(emb.begin(), emb.end(), 0.0) / static_cast<double>(emb.size());
    rep.embedding_sq_error.push_back(mean_emb);
    rep.gram_error.push_back(median_of(gram));
    rep.radius_error.push_back(median_of(rad));
    if (mean_emb > 16.04 / static_cast<double>(n)) rep.moment_bound_holds = false;
  }
  std::vector<double> xs(config.sample_sizes.begin(), config.sample_sizes.end());
  rep.embedding_slope = loglog_slope(xs, rep.embedding_sq_error);
  rep.gram_slope = loglog_slope(xs, rep.gram_error);
  rep.radius_slope = loglog_slope(xs, rep.radius_error);
  return rep;
}

struct BenchmarkSetting {
  Index sources = 20;
  Index n_lo = 200, n_hi = 500;

  std::string name() const {
    return "M=" + std::to_string(sources) + ",n=[" + std::to_string(n_lo) + "," + std::to_string(n_hi) + "]";
  }
};

struct BenchmarkConfig {
  std::vector<BenchmarkSetting> settings{{2, 30, 100}, {2, 200, 500}, {20, 30, 100}, {20, 200, 500}};
  std::vector<std::string> methods{"saa", "dro-conv", "rood-so"};
  Index seeds = 10;
  std::uint64_t seed = 0;
  Index test_distributions = 100;
  Index test_samples = 10000;
  PipelineConfig pipeline;
  MetaGenConfig meta;

  /// Reduced evaluation protocol for quick runs.
  void make_fast() {
    test_distributions = 20;
    test_samples = 2000;
  }
};

struct ReportRow {
  std::string setting;
  Index sources = 0, n_lo = 0, n_hi = 0;
  Index seed_index = 0;
  std::string method;
  double ood_cost = 0.0;
  double objective = 0.0;
  double nu = std::numeric_limits<double>::quiet_NaN();
  Vector decision;
  double wall_time = 0.0;  // kept out of the JSON report
};

struct ExperimentReport {
  nlohmann::json config;
  std::vector<ReportRow> rows;

  /// Mean cost per (setting, method).
  double mean_cost(const std::string& setting, const std::string& method) const {
    double sum = 0.0;
    Index count = 0;
    for (const auto& r : rows) {
      if (r.setting == setting && r.method == method) {
        sum += r.ood_cost;
        ++count;
      }
    }
    return count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["config"] = config;
    nlohmann::json rs = nlohmann::json::array();
    std::vector<std::string> settings, methods;
    for (const auto& r : rows) {
      nlohmann::json row = {{"setting", r.setting}, {"sources", r.sources}, {"n_lo", r.n_lo},
                            {"n_hi", r.n_hi},       {"seed", r.seed_index}, {"method", r.method},
                            {"ood_cost", r.ood_cost}, {"objective", r.objective}};
      row["nu"] = std::isfinite(r.nu) ? nlohmann::json(r.nu) : nlohmann::json(nullptr);
      row["decision"] = std::vector<double>(r.decision.data(), r.decision.data() + r.decision.size());
      rs.push_back(std::move(row));
      if (std::find(settings.begin(), settings.end(), r.setting) == settings.end()) settings.push_back(r.setting);
      if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    }
    j["rows"] = rs;
    nlohmann::json summary = nlohmann::json::array();
    for (const auto& s : settings) {
      for (const auto& m : methods) summary.push_back({{"setting", s}, {"method", m}, {"mean_ood_cost", mean_cost(s, m)}});
    }
    j["summary"] = summary;
    return j;
  }

  nlohmann::json timing_json() const {
    nlohmann::json t = nlohmann::json::array();
    for (const auto& r : rows) {
      t.push_back({{"setting", r.setting}, {"seed", r.seed_index}, {"method", r.method}, {"wall_time", r.wall_time}});
    }
    return t;
  }

  /// One row per setting x seed x method; fixed column order.
  void write_csv(std::ostream& out) const {
    out << "setting,sources,n_lo,n_hi,seed,method,ood_cost,objective,nu\n";
    out.precision(17);
    for (const auto& r : rows) {
      out << '"' << r.setting << "\"," << r.sources << ',' << r.n_lo << ',' << r.n_hi << ',' << r.seed_index << ','
          << r.method << ',' << r.ood_cost << ',' << r.objective << ',';
      if (std::isfinite(r.nu)) out << r.nu;
      out << '\n';
    }
  }
};

/// Newsvendor instance with the order box derived from the pooled samples.
inline Newsvendor newsvendor_for(const SourceCollection& collection,
                                 const NewsvendorParams& params = NewsvendorParams::two_item()) {
  return Newsvendor(params, Newsvendor::demand_bound(collection.pooled()));
}

/// Settings x seeds x methods on the synthetic newsvendor task.
inline ExperimentReport benchmark(const BenchmarkConfig& config) {
  using clock = std::chrono::steady_clock;
  require(config.seeds >= 1, "benchmark: need at least one seed");
  for (const auto& m : config.methods) {
    require(m == "saa" || m == "dro-conv" || m == "rood-so", "benchmark: unknown method '" + m + "'");
  }
  ExperimentReport report;
  report.config = {{"seeds", config.seeds},
                   {"seed", config.seed},
                   {"test_distributions", config.test_distributions},
                   {"test_samples", config.test_samples},
                   {"methods", config.methods},
                   {"herding_steps", config.pipeline.herding_steps},
                   {"nu_grid", config.pipeline.nu_grid}};
  nlohmann::json settings = nlohmann::json::array();
  for (const auto& s : config.settings) settings.push_back(s.name());
  report.config["settings"] = settings;

  for (std::size_t si = 0; si < config.settings.size(); ++si) {
    const BenchmarkSetting& setting = config.settings[si];
    for (Index seed = 0; seed < config.seeds; ++seed) {
      MetaGenConfig meta = config.meta;
      meta.sources = setting.sources;
      meta.n_lo = setting.n_lo;
      meta.n_hi = setting.n_hi;
      const std::uint64_t instance_seed =
          sub_seed(config.seed, {stream::instance, static_cast<std::uint64_t>(si), static_cast<std::uint64_t>(seed)});
      const MetaGenerator gen(meta, instance_seed);
      const SourceCollection sources = gen.sources();
      const std::vector<Dataset> tests = gen.test_draws(config.test_distributions, config.test_samples);
      const Newsvendor loss = newsvendor_for(sources);
      for (const auto& method : config.methods) {
        const auto start = clock::now();
        ReportRow row;
        row.setting = setting.name();
        row.sources = setting.sources;
        row.n_lo = setting.n_lo;
        row.n_hi = setting.n_hi;
        row.seed_index = seed;
        row.method = method;
        if (method == "saa") {
          const BaselineResult b = saa_baseline(sources, loss, config.pipeline.ipm);
          row.decision = b.decision;
          row.objective = b.objective;
        } else if (method == "dro-conv") {
          const BaselineResult b = dro_conv_baseline(sources, loss, config.pipeline.ipm);
          row.decision = b.decision;
          row.objective = b.objective;
        } else {
          PipelineConfig pc = config.pipeline;
          pc.seed = instance_seed;
          const RoodResult r = run_rood_so(sources, loss, pc);
          if (!r.solution.optimal()) {
            throw SolverError("benchmark: RooD-SO solve ended with status " +
                              conic::to_string(r.solution.result.status));
          }
          row.decision = r.decision;
          row.objective = r.solution.objective;
          row.nu = r.nu;
        }
        row.ood_cost = evaluate_ood(row.decision, loss, tests);
        row.wall_time = std::chrono::duration<double>(clock::now() - start).count();
        report.rows.push_back(std::move(row));
      }
    }
  }
  return report;
}

}  // namespace roodso
