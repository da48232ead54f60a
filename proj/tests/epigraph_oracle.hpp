#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "roodso/problems.hpp"

namespace testing_support {

using roodso::EpigraphRow;
using roodso::Index;
using roodso::Vector;

// Exact minimum of r over the epigraph rows at fixed x. Handles the row shapes
// the encoders emit: lower bounds on a single auxiliary (coef_r = 0), and rows
// r >= affine(x) + nonnegative combination of auxiliaries. Returns NaN on any
// other shape.
inline double epigraph_minimum(const roodso::LossEncoder& loss, const Vector& x,
                               const Eigen::Ref<const Eigen::RowVectorXd>& xi) {
  const auto rows = loss.epigraph(xi);
  const Index na = loss.aux_count();
  Vector aux = Vector::Constant(na, -std::numeric_limits<double>::infinity());
  for (const EpigraphRow& r : rows) {
    if (r.coef_r != 0.0) continue;
    Index which = -1, nz = 0;
    for (Index a = 0; a < na; ++a)
      if (r.coef_aux(a) != 0.0) {
        which = a;
        ++nz;
      }
    if (nz != 1 || r.coef_aux(which) >= 0.0) return std::nan("");
    aux(which) = std::max(aux(which), (r.coef_x.dot(x) - r.rhs) / -r.coef_aux(which));
  }
  double best = -std::numeric_limits<double>::infinity();
  for (const EpigraphRow& r : rows) {
    if (r.coef_r == 0.0) continue;
    if (r.coef_r > 0.0) return std::nan("");
    double v = r.coef_x.dot(x) - r.rhs;
    for (Index a = 0; a < na; ++a) {
      if (r.coef_aux(a) == 0.0) continue;
      if (r.coef_aux(a) < 0.0 || !std::isfinite(aux(a))) return std::nan("");
      v += r.coef_aux(a) * aux(a);
    }
    best = std::max(best, v / -r.coef_r);
  }
  return best;
}

// Loss formulas written out independently of the library.
inline double reference_newsvendor(const Vector& p, const Vector& c, const Vector& h, const Vector& b, const Vector& x,
                                   const Vector& xi) {
  double v = 0;
  for (Index k = 0; k < x.size(); ++k) {
    const double sold = x(k) < xi(k) ? x(k) : xi(k);
    const double over = x(k) > xi(k) ? x(k) - xi(k) : 0.0;
    const double under = xi(k) > x(k) ? xi(k) - x(k) : 0.0;
    v += c(k) * x(k) - p(k) * sold + h(k) * over + b(k) * under;
  }
  return v;
}

inline double reference_cvar(double d1, double d2, const Vector& w, double tau, const Vector& xi) {
  const double loss = -w.dot(xi);
  const double excess = loss - tau > 0 ? loss - tau : 0.0;
  return loss + d1 * tau + d1 * excess / d2;
}

}  // namespace testing_support
