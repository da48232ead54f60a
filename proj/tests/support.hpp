#pragma once

#include <random>

#include <gtest/gtest.h>

#include "roodso/common.hpp"
#include "roodso/data.hpp"

namespace testing_support {

using roodso::Index;
using roodso::Matrix;
using roodso::Vector;

// Keeps warning chatter out of test logs.
struct QuietWarnings : ::testing::Environment {
  void SetUp() override { roodso::warning_handler() = nullptr; }
};
inline const auto* const quiet_env = ::testing::AddGlobalTestEnvironment(new QuietWarnings);

inline Matrix gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng, double mean = 0.0, double sd = 1.0) {
  std::normal_distribution<double> n(mean, sd);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Index>(v.size()));
  Index k = 0;
  for (double x : v) m(0, k++) = x;
  return m;
}

inline Matrix column(std::initializer_list<double> v) {
  Matrix m(static_cast<Index>(v.size()), 1);
  Index k = 0;
  for (double x : v) m(k++, 0) = x;
  return m;
}

}  // namespace testing_support
