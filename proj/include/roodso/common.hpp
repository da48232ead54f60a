#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace roodso {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;
using Index = Eigen::Index;

// Error taxonomy. Everything derives from Error so callers can catch once.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InputError : Error {
  using Error::Error;
};
struct DegenerateDataError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct IllConditionedError : NumericalError {
  using NumericalError::NumericalError;
};
struct SolverError : Error {
  using Error::Error;
};
struct InfeasibleError : Error {
  using Error::Error;
};

/// Sink for non-fatal diagnostics. Defaults to stderr; tests silence it.
inline std::function<void(std::string_view)>& warning_handler() {
  static std::function<void(std::string_view)> handler = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return handler;
}

inline void warn(std::string_view msg) {
  if (warning_handler()) warning_handler()(msg);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InputError(what);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace roodso
