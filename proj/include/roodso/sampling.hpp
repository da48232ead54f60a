#pragma once

// Kernel herding, Latin hypercube supplemental points and the discretization
// sets Upsilon (all samples + supplemental) and Gamma (herded + supplemental).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "roodso/kernel.hpp"
#include "roodso/parallel.hpp"
#include "roodso/rng.hpp"

namespace roodso {

struct HerdingConfig {
  long steps = 50;
};

/// Greedy herding over the dataset's own samples. Returns sample indices in
/// selection order; indices may repeat.
inline std::vector<Index> kernel_herding_indices(const KernelSpec& spec, const Matrix& samples, long steps) {
  spec.validate();
  const Index n = samples.rows();
  require(n >= 1, "kernel_herding: empty dataset");
  require(steps >= 1, "kernel_herding: steps must be positive");

  // mean_sim(c) = (1/n) sum_j k(xi_j, xi_c), accumulated in fixed chunk order.
  Vector mean_sim = Vector::Zero(n);
  constexpr Index chunk = 512;
  for (Index r0 = 0; r0 < n; r0 += chunk) {
    const Index rows = std::min(chunk, n - r0);
    mean_sim += cross_kernel_block(spec, samples.middleRows(r0, rows), samples).colwise().sum().transpose();
  }
  mean_sim /= static_cast<double>(n);

  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(steps));
  Vector repulsion = Vector::Zero(n);  // sum over chosen l of k(y_l, candidate)
  for (long t = 1; t <= steps; ++t) {
    Index best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    const double inv = t == 1 ? 0.0 : 1.0 / static_cast<double>(t - 1);
    for (Index c = 0; c < n; ++c) {
      const double score = mean_sim(c) - inv * repulsion(c);
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    chosen.push_back(best);
    repulsion += cross_kernel_block(spec, samples.row(best), samples).row(0).transpose();
  }
  return chosen;
}

inline Matrix kernel_herding(const KernelSpec& spec, const Dataset& dataset, long steps) {
  const auto idx = kernel_herding_indices(spec, dataset.samples(), steps);
  Matrix out(static_cast<Index>(idx.size()), dataset.dim());
  for (std::size_t t = 0; t < idx.size(); ++t) out.row(static_cast<Index>(t)) = dataset.row(idx[t]);
  return out;
}

/// Herds every source; T is clamped to n_i with a warning.
inline std::vector<Matrix> herd_collection(const KernelSpec& spec, const SourceCollection& collection,
                                           const HerdingConfig& config) {
  require(config.steps >= 1, "herding steps must be positive");
  std::vector<Matrix> out(collection.size());
  for (std::size_t i = 0; i < collection.size(); ++i) {
    if (config.steps > collection[i].size()) {
      warn("herding steps " + std::to_string(config.steps) + " exceed size of source '" + collection[i].label() +
           "' (" + std::to_string(collection[i].size()) + "); clamped");
    }
  }
  parallel_for(collection.size(), [&](std::size_t i) {
    const long steps = std::min<long>(config.steps, collection[i].size());
    out[i] = kernel_herding(spec, collection[i], steps);
  });
  return out;
}

/// One point per equal-width stratum in every coordinate, strata independently
/// permuted per coordinate, uniform placement inside each stratum.
inline Matrix latin_hypercube(Index count, const Vector& lower, const Vector& upper, std::uint64_t seed) {
  require(lower.size() == upper.size() && lower.size() >= 1, "latin_hypercube: bad box dimensions");
  for (Index k = 0; k < lower.size(); ++k) {
    require(std::isfinite(lower(k)) && std::isfinite(upper(k)) && lower(k) < upper(k),
            "latin_hypercube: lower must be below upper in coordinate " + std::to_string(k));
  }
  require(count >= 0, "latin_hypercube: negative count");
  const Index d = lower.size();
  Matrix out(count, d);
  if (count == 0) return out;
  Rng rng = make_rng(seed, {stream::lhs});
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Index> perm(static_cast<std::size_t>(count));
  for (Index k = 0; k < d; ++k) {
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index i = count - 1; i > 0; --i) {
      std::uniform_int_distribution<Index> pick(0, i);
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(pick(rng))]);
    }
    const double width = (upper(k) - lower(k)) / static_cast<double>(count);
    for (Index j = 0; j < count; ++j) {
      const double u = unif(rng);
      double v = lower(k) + (static_cast<double>(perm[static_cast<std::size_t>(j)]) + u) * width;
      out(j, k) = std::min(v, upper(k));
    }
  }
  return out;
}

inline Index default_supplemental_count(Index total_samples) {
  return std::max<Index>(10, static_cast<Index>(std::ceil(0.1 * static_cast<double>(total_samples))));
}

/// Componentwise [min, max] over all source samples.
inline std::pair<Vector, Vector> sample_box(const SourceCollection& collection) {
  Vector lo = Vector::Constant(collection.dim(), std::numeric_limits<double>::infinity());
  Vector hi = -lo;
  for (const auto& s : collection) {
    lo = lo.cwiseMin(s.samples().colwise().minCoeff().transpose());
    hi = hi.cwiseMax(s.samples().colwise().maxCoeff().transpose());
  }
  return {lo, hi};
}

/// Row origin: source index >= 0, or -1 for a supplemental point.
inline constexpr int supplemental_tag = -1;

struct PointSets {
  Matrix upsilon;
  Matrix gamma;
  std::vector<int> upsilon_tags;
  std::vector<int> gamma_tags;
  std::vector<Index> gamma_in_upsilon;  // row of upsilon holding each gamma row

  Index dim() const { return upsilon.cols(); }
};

namespace detail {

using PointKey = std::vector<std::int64_t>;

inline PointKey point_key(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  PointKey key(static_cast<std::size_t>(row.size()));
  for (Index k = 0; k < row.size(); ++k) key[static_cast<std::size_t>(k)] = std::llround(row(k) * 1e12);
  return key;
}

struct PointAccumulator {
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<int> tags;
  std::map<PointKey, Index> index;

  Index add(const Eigen::Ref<const Eigen::RowVectorXd>& row, int tag) {
    auto [it, inserted] = index.emplace(point_key(row), static_cast<Index>(rows.size()));
    if (inserted) {
      rows.emplace_back(row);
      tags.push_back(tag);
    }
    return it->second;
  }

  Matrix matrix(Index d) const {
    Matrix out(static_cast<Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = rows[i];
    return out;
  }
};

}  // namespace detail

/// Upsilon = all samples + supplemental, Gamma = herded + supplemental, both
/// deduplicated at 1e-12 coordinate resolution keeping the first occurrence.
inline PointSets build_point_sets(const SourceCollection& collection, const std::vector<Matrix>& herded,
                                  const Matrix& supplemental) {
  const Index d = collection.dim();
  require(herded.size() == collection.size(), "build_point_sets: one herded set per source required");
  require(supplemental.rows() == 0 || supplemental.cols() == d, "build_point_sets: supplemental dimension mismatch");
  if (supplemental.rows() > 0) {
    const auto [lo, hi] = sample_box(collection);
    for (Index j = 0; j < supplemental.rows(); ++j) {
      const Vector p = supplemental.row(j).transpose();
      if ((p.array() < lo.array() - 1e-12).any() || (p.array() > hi.array() + 1e-12).any()) {
        warn("supplemental point " + std::to_string(j) + " lies outside the sample box");
        break;
      }
    }
  }

  detail::PointAccumulator ups, gam;
  for (std::size_t i = 0; i < collection.size(); ++i) {
    for (Index j = 0; j < collection[i].size(); ++j) ups.add(collection[i].row(j), static_cast<int>(i));
  }
  for (Index j = 0; j < supplemental.rows(); ++j) ups.add(supplemental.row(j), supplemental_tag);

  for (std::size_t i = 0; i < herded.size(); ++i) {
    require(herded[i].cols() == d, "build_point_sets: herded dimension mismatch");
    for (Index j = 0; j < herded[i].rows(); ++j) gam.add(herded[i].row(j), static_cast<int>(i));
  }
  for (Index j = 0; j < supplemental.rows(); ++j) gam.add(supplemental.row(j), supplemental_tag);

  PointSets ps;
  ps.upsilon = ups.matrix(d);
  ps.gamma = gam.matrix(d);
  ps.upsilon_tags = ups.tags;
  ps.gamma_tags = gam.tags;
  ps.gamma_in_upsilon.resize(gam.rows.size());
  for (std::size_t g = 0; g < gam.rows.size(); ++g) {
    auto it = ups.index.find(detail::point_key(gam.rows[g]));
    require(it != ups.index.end(), "build_point_sets: herded point not found among source samples");
    ps.gamma_in_upsilon[g] = it->second;
  }
  return ps;
}

inline std::string tag_name(int tag) {
  return tag == supplemental_tag ? std::string("supplemental") : "source:" + std::to_string(tag);
}

/// CSV with columns set,x0..x{d-1},tag.
inline void write_points_csv(std::ostream& out, const PointSets& ps) {
  out << "set";
  for (Index k = 0; k < ps.dim(); ++k) out << ",x" << k;
  out << ",tag\n";
  out.precision(17);
  auto emit = [&](const char* name, const Matrix& m, const std::vector<int>& tags) {
    for (Index r = 0; r < m.rows(); ++r) {
      out << name;
      for (Index k = 0; k < m.cols(); ++k) out << ',' << m(r, k);
      out << ',' << tag_name(tags[static_cast<std::size_t>(r)]) << '\n';
    }
  };
  emit("upsilon", ps.upsilon, ps.upsilon_tags);
  emit("gamma", ps.gamma, ps.gamma_tags);
}

}  // namespace roodso
