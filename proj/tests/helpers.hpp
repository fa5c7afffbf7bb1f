#ifndef TRACEIHT_TESTS_HELPERS_HPP
#define TRACEIHT_TESTS_HELPERS_HPP

#include "traceiht/linalg.hpp"

#include <random>

namespace testing_support {

using traceiht::CMatrix;
using traceiht::Complex;
using traceiht::Index;
using traceiht::RMatrix;
using traceiht::RVector;

// Test-side randomness uses std::mt19937 so oracles never share the
// library's generator.
inline CMatrix random_complex(Index rows, Index cols, std::mt19937& gen) {
  std::normal_distribution<double> normal;
  CMatrix a(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) a(i, j) = Complex(normal(gen), normal(gen));
  }
  return a;
}

inline RMatrix random_real(Index rows, Index cols, std::mt19937& gen) {
  std::normal_distribution<double> normal;
  RMatrix a(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) a(i, j) = normal(gen);
  }
  return a;
}

inline CMatrix random_density(Index d, Index k, std::mt19937& gen) {
  const CMatrix g = random_complex(d, k, gen);
  CMatrix rho = g * g.adjoint();
  return rho / rho.trace().real();
}

// Re tr(a^H b) by explicit double loop.
inline double naive_trace_inner(const CMatrix& a, const CMatrix& b) {
  double s = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) s += (std::conj(a(i, j)) * b(i, j)).real();
  }
  return s;
}

inline double max_abs_diff(const CMatrix& a, const CMatrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace testing_support

#endif
