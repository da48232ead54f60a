#pragma once

// Kernel evaluation, empirical mean embeddings and their Gram matrices.
//
// Points are rows of an Eigen matrix. Both supported kernels are bounded by one
// on the diagonal, so every embedding has RKHS norm at most one.

#include <algorithm>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "roodso/common.hpp"
#include "roodso/data.hpp"
#include "roodso/parallel.hpp"

namespace roodso {

enum class KernelFamily { rbf, laplace };

inline std::string to_string(KernelFamily f) { return f == KernelFamily::rbf ? "rbf" : "laplace"; }

inline KernelFamily kernel_family_from_string(const std::string& s) {
  if (s == "rbf" || s == "RBF" || s == "gaussian") return KernelFamily::rbf;
  if (s == "laplace" || s == "Laplace") return KernelFamily::laplace;
  throw InputError("unknown kernel family '" + s + "'");
}

struct KernelSpec {
  KernelFamily family = KernelFamily::rbf;
  double bandwidth = 1.0;

  void validate() const {
    require(std::isfinite(bandwidth) && bandwidth > 0.0, "kernel bandwidth must be positive");
  }

  /// Kernel value from a squared Euclidean distance.
  double from_sqdist(double d2) const {
    if (family == KernelFamily::rbf) return std::exp(-d2 / (2.0 * bandwidth * bandwidth));
    return std::exp(-std::sqrt(d2) / bandwidth);
  }
};

template <class A, class B>
double kernel_eval(const KernelSpec& spec, const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
  spec.validate();
  require(x.size() == y.size(), "kernel_eval: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                                    std::to_string(y.size()) + ")");
  double d2 = 0.0;
  for (Index k = 0; k < x.size(); ++k) {
    const double diff = x(k) - y(k);
    d2 += diff * diff;
  }
  return spec.from_sqdist(d2);
}

/// Entry (i, j) = k(rows_i, cols_j).
inline Matrix cross_kernel_block(const KernelSpec& spec, const Matrix& rows, const Matrix& cols) {
  spec.validate();
  require(rows.rows() > 0 && cols.rows() > 0, "cross_kernel_block: empty point list");
  require(rows.cols() == cols.cols(), "cross_kernel_block: dimension mismatch");
  Matrix d2 = Matrix::Zero(rows.rows(), cols.rows());
  for (Index k = 0; k < rows.cols(); ++k) {
    for (Index j = 0; j < cols.rows(); ++j) {
      d2.col(j).array() += (rows.col(k).array() - cols(j, k)).square();
    }
  }
  if (spec.family == KernelFamily::rbf) {
    return (d2.array() * (-1.0 / (2.0 * spec.bandwidth * spec.bandwidth))).exp().matrix();
  }
  return (d2.array().sqrt() * (-1.0 / spec.bandwidth)).exp().matrix();
}

namespace detail {

/// Sum of all kernel values between two point sets, evaluated in row chunks.
inline double kernel_block_sum(const KernelSpec& spec, const Matrix& a, const Matrix& b) {
  constexpr Index chunk = 512;
  double total = 0.0;
  for (Index r = 0; r < a.rows(); r += chunk) {
    const Index len = std::min(chunk, a.rows() - r);
    total += cross_kernel_block(spec, a.middleRows(r, len), b).sum();
  }
  return total;
}

}  // namespace detail

/// <mu_a, mu_b> for the empirical embeddings of two sample matrices.
inline double embedding_inner(const KernelSpec& spec, const Matrix& a, const Matrix& b) {
  require(a.rows() > 0 && b.rows() > 0, "embedding_inner: empty dataset");
  require(a.cols() == b.cols(), "embedding_inner: dimension mismatch");
  return detail::kernel_block_sum(spec, a, b) / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

inline double embedding_inner(const KernelSpec& spec, const Dataset& a, const Dataset& b) {
  return embedding_inner(spec, a.samples(), b.samples());
}

/// Empirical Gram matrix of the source embeddings. Pairs are evaluated once.
inline Matrix gram_matrix(const KernelSpec& spec, const SourceCollection& collection) {
  spec.validate();
  const std::size_t m = collection.size();
  require(m >= 1, "gram_matrix: empty collection");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(m * (m + 1) / 2);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j) pairs.emplace_back(i, j);
  std::vector<double> values(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t p) {
    values[p] = embedding_inner(spec, collection[pairs[p].first], collection[pairs[p].second]);
  });
  Matrix gram(m, m);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    gram(static_cast<Index>(i), static_cast<Index>(j)) = values[p];
    gram(static_cast<Index>(j), static_cast<Index>(i)) = values[p];
  }
  return gram;
}

/// Maximum mean discrepancy between two empirical distributions.
inline double mmd(const KernelSpec& spec, const Matrix& a, const Matrix& b) {
  const double aa = embedding_inner(spec, a, a);
  const double bb = embedding_inner(spec, b, b);
  const double ab = embedding_inner(spec, a, b);
  double radicand = aa + bb - 2.0 * ab;
  if (radicand < -1e-10) {
    throw NumericalError("mmd: negative squared distance " + std::to_string(radicand) +
                         " (kernel is not positive definite?)");
  }
  return std::sqrt(std::max(0.0, radicand));
}

inline double mmd(const KernelSpec& spec, const Dataset& a, const Dataset& b) {
  return mmd(spec, a.samples(), b.samples());
}

/// Median of pairwise Euclidean distances over a point set. Exact, computed in
/// two passes over a distance histogram so memory stays linear in the number of
/// points. Falls back to the smallest nonzero distance when the median is zero.
inline double median_pairwise_distance(const Matrix& pts) {
  const Index n = pts.rows();
  require(n >= 2, "median heuristic needs at least 2 samples");
  require(pts.allFinite(), "median heuristic: non-finite samples");

  auto for_each_distance = [&](auto&& fn) {
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) fn((pts.row(i) - pts.row(j)).norm());
  };

  double dmax = 0.0;
  double min_positive = std::numeric_limits<double>::infinity();
  for_each_distance([&](double d) {
    dmax = std::max(dmax, d);
    if (d > 0.0) min_positive = std::min(min_positive, d);
  });
  if (dmax == 0.0) throw DegenerateDataError("median heuristic: all samples are identical");

  const std::uint64_t count = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n - 1) / 2;
  constexpr std::size_t bins = 1 << 16;
  auto bin_of = [&](double d) {
    return std::min<std::size_t>(bins - 1, static_cast<std::size_t>(d / dmax * static_cast<double>(bins)));
  };
  std::vector<std::uint64_t> hist(bins, 0);
  for_each_distance([&](double d) { ++hist[bin_of(d)]; });

  // 0-based ranks of the middle order statistics.
  const std::uint64_t lo_rank = (count - 1) / 2;
  const std::uint64_t hi_rank = count / 2;
  std::size_t lo_bin = 0, hi_bin = 0;
  std::uint64_t lo_base = 0, hi_base = 0;
  {
    std::uint64_t cum = 0;
    bool lo_found = false;
    for (std::size_t b = 0; b < bins; ++b) {
      if (!lo_found && cum + hist[b] > lo_rank) {
        lo_bin = b;
        lo_base = cum;
        lo_found = true;
      }
      if (cum + hist[b] > hi_rank) {
        hi_bin = b;
        hi_base = cum;
        break;
      }
      cum += hist[b];
    }
  }
  std::vector<double> lo_vals, hi_vals;
  for_each_distance([&](double d) {
    const std::size_t b = bin_of(d);
    if (b == lo_bin) lo_vals.push_back(d);
    if (b == hi_bin && hi_bin != lo_bin) hi_vals.push_back(d);
  });
  auto select = [](std::vector<double>& v, std::uint64_t k) {
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
  };
  const double lo = select(lo_vals, lo_rank - lo_base);
  const double hi = hi_bin == lo_bin ? select(lo_vals, hi_rank - lo_base) : select(hi_vals, hi_rank - hi_base);
  const double median = 0.5 * (lo + hi);
  return median > 0.0 ? median : min_positive;
}

/// Bandwidth from the pooled samples of all sources.
inline double median_heuristic(const SourceCollection& collection) {
  require(collection.total_samples() >= 2, "median heuristic needs at least 2 samples");
  return median_pairwise_distance(collection.pooled());
}

struct PsdFactor {
  Matrix lower;       // L with L L^T = A + jitter I
  double jitter = 0;  // jitter actually used
};

/// Cholesky factor of a symmetric PSD matrix with geometric jitter escalation
/// 1e-12, 1e-11, ..., 1e-6 on failure.
inline PsdFactor psd_factor(const Matrix& a, double jitter = 0.0) {
  require(a.rows() == a.cols(), "psd_factor: matrix is not square");
  require(jitter >= 0.0, "psd_factor: negative jitter");
  require((a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, a.cwiseAbs().maxCoeff()),
          "psd_factor: matrix is not symmetric");
  const Index n = a.rows();
  auto attempt = [&](double j) -> std::optional<Matrix> {
    Matrix shifted = a;
    shifted.diagonal().array() += j;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() != Eigen::Success) return std::nullopt;
    Matrix l = llt.matrixL();
    if (!l.allFinite() || (l.diagonal().array() <= 0.0).any()) return std::nullopt;
    return l;
  };
  if (auto l = attempt(jitter)) return {*l, jitter};
  for (double j = std::max(jitter, 1e-12); j <= 1e-6 * (1 + 1e-9); j *= 10.0) {
    if (j <= jitter) continue;
    if (auto l = attempt(j)) return {*l, j};
  }
  throw IllConditionedError("psd_factor: factorization failed at maximum jitter 1e-6 (n=" + std::to_string(n) + ")");
}

/// Orthonormal coordinates for span{phi(p) : p in pivots}, built by greedy
/// pivoted Cholesky over a candidate set. For any point y the feature vector
/// psi(y) satisfies psi(y)^T psi(y') = k(y, y') up to the residual tolerance
/// whenever y, y' lie in the candidate set.
class NystromBasis {
 public:
  NystromBasis() = default;

  /// Pivots come from the `forced` leading candidates until their residuals
  /// drop below tolerance, then from all candidates. Greedy max-residual in both
  /// phases; taking forced candidates in input order loses rank to roundoff.
  static NystromBasis build(const KernelSpec& spec, const Matrix& candidates, double tol, Index forced = 0,
                            Index max_rank = -1) {
    spec.validate();
    const Index n = candidates.rows();
    require(n >= 1, "NystromBasis: no candidates");
    if (max_rank < 0 || max_rank > n) max_rank = n;
    NystromBasis basis;
    basis.spec_ = spec;
    Vector residual = Vector::Ones(n);
    for (Index i = 0; i < n; ++i) residual(i) = spec.from_sqdist(0.0);
    Matrix l(n, std::min<Index>(max_rank, 64));
    Index rank = 0;
    std::vector<Index> pivots;
    bool forcing = forced > 0;
    while (rank < max_rank) {
      Index p = -1;
      if (forcing) {
        // greedy within the forced block first
        Index arg = 0;
        if (residual.head(forced).maxCoeff(&arg) > tol) p = arg;
        else forcing = false;
      }
      if (p < 0) {
        Index arg = 0;
        const double best = residual.maxCoeff(&arg);
        if (best <= tol) break;
        p = arg;
      }
      if (rank == l.cols()) l.conservativeResize(Eigen::NoChange, std::min<Index>(max_rank, 2 * l.cols()));
      Vector col = cross_kernel_block(spec, candidates, candidates.row(p)).col(0);
      if (rank > 0) col.noalias() -= l.leftCols(rank) * l.row(p).head(rank).transpose();
      const double pivot = std::sqrt(residual(p));
      col /= pivot;
      l.col(rank) = col;
      residual.array() -= col.array().square();
      residual(p) = 0.0;
      pivots.push_back(p);
      ++rank;
    }
    basis.pivot_indices_ = pivots;
    basis.pivots_.resize(rank, candidates.cols());
    basis.factor_.resize(rank, rank);
    for (Index k = 0; k < rank; ++k) {
      basis.pivots_.row(k) = candidates.row(pivots[static_cast<std::size_t>(k)]);
      basis.factor_.row(k) = l.row(pivots[static_cast<std::size_t>(k)]).head(rank);
    }
    basis.factor_ = basis.factor_.triangularView<Eigen::Lower>();
    basis.max_residual_ = residual.size() > 0 ? std::max(0.0, residual.maxCoeff()) : 0.0;
    return basis;
  }

  Index rank() const { return pivots_.rows(); }
  const Matrix& pivots() const { return pivots_; }
  const std::vector<Index>& pivot_indices() const { return pivot_indices_; }
  /// Lower-triangular L_P with K_PP = L_P L_P^T.
  const Matrix& factor() const { return factor_; }
  double max_residual() const { return max_residual_; }
  const KernelSpec& spec() const { return spec_; }

  /// Row i = psi(points_i)^T, i.e. K(points, P) L_P^{-T}.
  Matrix features(const Matrix& points) const {
    if (rank() == 0) return Matrix::Zero(points.rows(), 0);
    Matrix out(points.rows(), rank());
    constexpr Index chunk = 2048;
    for (Index r = 0; r < points.rows(); r += chunk) {
      const Index len = std::min(chunk, points.rows() - r);
      Matrix kp = cross_kernel_block(spec_, points.middleRows(r, len), pivots_);
      out.middleRows(r, len) = factor_.triangularView<Eigen::Lower>().solve(kp.transpose()).transpose();
    }
    return out;
  }

  /// Coefficients on the pivot points of the function with coordinates w.
  Vector pivot_coefficients(const Vector& w) const {
    return factor_.transpose().triangularView<Eigen::Upper>().solve(w);
  }

 private:
  KernelSpec spec_;
  Matrix pivots_;
  Matrix factor_;
  std::vector<Index> pivot_indices_;
  double max_residual_ = 0.0;
};

/// Smallest eigenvalue check used by Gram invariants.
inline bool is_psd(const Matrix& a, double rel_tol = 1e-8) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues().cwiseAbs().maxCoeff();
  return es.eigenvalues().minCoeff() >= -rel_tol * std::max(top, 1e-300);
}

}  // namespace roodso
