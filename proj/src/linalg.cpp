#include "traceiht/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace traceiht {

namespace {

// Relative tolerance below which a singular value is treated as numerically zero.
double null_tolerance(const RVector& sv, Index rows, Index cols) {
  const double top = sv.size() > 0 ? sv(0) : 0.0;
  return top * static_cast<double>(std::max(rows, cols)) *
         std::numeric_limits<double>::epsilon();
}

// Replace columns [rank, m) of `basis` by canonical basis vectors e_0, e_1, ...
// orthogonalized against every column already fixed, in index order.
void complete_with_canonical_basis(CMatrix& basis, Index rank) {
  const Index dim = basis.rows();
  Index filled = rank;
  for (Index e = 0; e < dim && filled < basis.cols(); ++e) {
    CVector candidate = CVector::Zero(dim);
    candidate(e) = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (Index c = 0; c < filled; ++c) {
        candidate -= basis.col(c) * basis.col(c).dot(candidate);
      }
    }
    const double norm = candidate.norm();
    if (norm > 1e-6) {
      basis.col(filled++) = candidate / norm;
    }
  }
}

}  // namespace

void require_finite(const CMatrix& a, const std::string& what) {
  if (!a.allFinite()) throw std::invalid_argument(what + ": non-finite entry");
}

void require_finite(const RMatrix& a, const std::string& what) {
  if (!a.allFinite()) throw std::invalid_argument(what + ": non-finite entry");
}

void require_finite(const RVector& a, const std::string& what) {
  if (!a.allFinite()) throw std::invalid_argument(what + ": non-finite entry");
}

CMatrix SvdFactors::reconstruct() const {
  return left * singular_values.cast<Complex>().asDiagonal() * right.adjoint();
}

Index SvdFactors::count_at_least(double threshold) const {
  return (singular_values.array() >= threshold).count();
}

SvdFactors svd(const CMatrix& a) {
  require_finite(a, "svd input");
  const Index rows = a.rows();
  const Index cols = a.cols();
  const Index m = std::min(rows, cols);

  Eigen::BDCSVD<CMatrix> dec(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (dec.info() != Eigen::Success) {
    throw NumericalError("svd: decomposition did not converge");
  }

  SvdFactors out{dec.matrixU(), dec.singularValues(), dec.matrixV()};
  if (!out.left.allFinite() || !out.right.allFinite() ||
      !out.singular_values.allFinite()) {
    throw NumericalError("svd: non-finite factors");
  }

  const double tol = null_tolerance(out.singular_values, rows, cols);
  Index rank = 0;
  while (rank < m && out.singular_values(rank) > tol) ++rank;

  for (Index i = 0; i < rank; ++i) {
    auto u = out.left.col(i);
    const double peak = u.cwiseAbs().maxCoeff();
    Index pivot = 0;
    while (std::abs(u(pivot)) < peak * (1.0 - 1e-12)) ++pivot;
    const Complex phase = std::conj(u(pivot)) / std::abs(u(pivot));
    out.left.col(i) *= phase;
    out.right.col(i) *= phase;
    out.left(pivot, i) = Complex(out.left(pivot, i).real(), 0.0);
  }

  if (rank < m) {
    out.singular_values.tail(m - rank).setZero();
    complete_with_canonical_basis(out.left, rank);
    complete_with_canonical_basis(out.right, rank);
  }
  return out;
}

RVector hard_threshold_entries(const RVector& u, double threshold) {
  if (!(threshold >= 0.0)) {
    throw std::invalid_argument("hard_threshold_entries: negative threshold");
  }
  return (u.array().abs() >= threshold).select(u, 0.0);
}

CMatrix hard_threshold_singular(const SvdFactors& factors, double threshold) {
  if (!(threshold >= 0.0)) {
    throw std::invalid_argument("hard_threshold_singular: negative threshold");
  }
  const Index kept = factors.count_at_least(threshold);
  // Singular values are sorted, so the kept ones are a leading block.
  return factors.left.leftCols(kept) *
         factors.singular_values.head(kept).cast<Complex>().asDiagonal() *
         factors.right.leftCols(kept).adjoint();
}

CMatrix hard_threshold_singular(const CMatrix& a, double threshold) {
  if (!(threshold >= 0.0)) {
    throw std::invalid_argument("hard_threshold_singular: negative threshold");
  }
  return hard_threshold_singular(svd(a), threshold);
}

double schatten_norm(const CMatrix& a, double p) {
  if (!(p > 0.0)) throw std::invalid_argument("schatten_norm: p must be positive");
  require_finite(a, "schatten_norm input");
  Eigen::BDCSVD<CMatrix> dec(a);
  const RVector sv = dec.singularValues();
  if (sv.size() == 0) return 0.0;
  if (std::isinf(p)) return sv(0);
  if (p == 2.0) return std::sqrt(sv.squaredNorm());
  if (p == 1.0) return sv.sum();
  // Scale by the top singular value so large p does not overflow.
  const double top = sv(0);
  if (top == 0.0) return 0.0;
  return top * std::pow((sv.array() / top).pow(p).sum(), 1.0 / p);
}

double operator_norm(const CMatrix& a) { return schatten_norm(a, kOperatorNorm); }

double frobenius_norm(const CMatrix& a) { return a.norm(); }

double entrywise_inf_norm(const CMatrix& a) {
  require_finite(a, "entrywise_inf_norm input");
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

double trace_inner(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("trace_inner: shape mismatch");
  }
  return (a.conjugate().cwiseProduct(b)).sum().real();
}

SingularBoundCheck restricted_singular_bound_check(const CMatrix& m, Index j,
                                                   const CMatrix& w) {
  if (j < 1 || j > std::min(m.rows(), m.cols())) {
    throw std::invalid_argument("restricted_singular_bound_check: j out of range");
  }
  if (w.cols() != j - 1) {
    throw std::invalid_argument(
        "restricted_singular_bound_check: W must hold exactly j-1 vectors");
  }
  if (w.cols() > 0) {
    if (w.rows() != m.rows()) {
      throw std::invalid_argument("restricted_singular_bound_check: W dimension mismatch");
    }
    const CMatrix gram = w.adjoint() * w;
    const CMatrix eye = CMatrix::Identity(w.cols(), w.cols());
    if ((gram - eye).cwiseAbs().maxCoeff() > 1e-8) {
      throw std::invalid_argument("restricted_singular_bound_check: W is not orthonormal");
    }
  }

  Eigen::BDCSVD<CMatrix> dec(m);
  SingularBoundCheck out;
  out.singular_value = dec.singularValues()(j - 1);

  CMatrix projected = m;
  if (w.cols() > 0) projected -= w * (w.adjoint() * m);
  out.bound = operator_norm(projected);
  out.holds = out.singular_value <= out.bound + 1e-8;
  return out;
}

CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

}  // namespace traceiht
