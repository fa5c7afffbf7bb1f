#ifndef TRACEIHT_LINALG_HPP
#define TRACEIHT_LINALG_HPP

#include <Eigen/Dense>

#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

namespace traceiht {

using Complex = std::complex<double>;
using Index = Eigen::Index;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

/// Raised when a decomposition fails to converge or produces non-finite output.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation needs data the instance does not carry
/// (e.g. the realized noise of a non-simulated dataset).
class UnsupportedInstance : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws std::invalid_argument naming `what` if any entry is NaN or infinite.
void require_finite(const CMatrix& a, const std::string& what);
void require_finite(const RMatrix& a, const std::string& what);
void require_finite(const RVector& a, const std::string& what);

/// Thin singular value decomposition A = left * diag(singular_values) * right^H.
///
/// Factors are canonical: every non-null left singular vector has its
/// largest-modulus component real and positive (lowest index on ties, the
/// right vector is rotated by the same phase), and singular directions of the
/// numerical null space are replaced by the Gram-Schmidt completion of the
/// canonical basis taken in index order, with their singular values set to 0.
struct SvdFactors {
  CMatrix left;
  RVector singular_values;
  CMatrix right;

  [[nodiscard]] CMatrix reconstruct() const;
  /// Number of singular values >= threshold.
  [[nodiscard]] Index count_at_least(double threshold) const;
};

SvdFactors svd(const CMatrix& a);

/// v_i = u_i if |u_i| >= threshold, else 0.
RVector hard_threshold_entries(const RVector& u, double threshold);

/// left * diag(floor(sigma)_T) * right^H: keeps singular values >= threshold.
CMatrix hard_threshold_singular(const CMatrix& a, double threshold);
CMatrix hard_threshold_singular(const SvdFactors& factors, double threshold);

/// Selector for the operator (spectral) norm in schatten_norm.
inline constexpr double kOperatorNorm = std::numeric_limits<double>::infinity();

/// (sum_i sigma_i^p)^(1/p); p == kOperatorNorm gives the largest singular value.
double schatten_norm(const CMatrix& a, double p);
double operator_norm(const CMatrix& a);
double frobenius_norm(const CMatrix& a);
double entrywise_inf_norm(const CMatrix& a);

/// Trace inner product Re tr(a^H b).
double trace_inner(const CMatrix& a, const CMatrix& b);

struct SingularBoundCheck {
  bool holds = false;
  double singular_value = 0.0;  // lambda_j(M)
  double bound = 0.0;           // || (I - W W^H) M ||_op
};

/// Variational bound on the j-th singular value (j is 1-based): for any
/// j-1 orthonormal vectors W, lambda_j(M) <= sup{|u^H M v| : u unit, u ⟂ W, v unit}.
/// The supremum is the operator norm of M projected onto the orthocomplement
/// of span(W). `w` holds the vectors as columns.
SingularBoundCheck restricted_singular_bound_check(const CMatrix& m, Index j,
                                                   const CMatrix& w);

/// Kronecker product, a on the left (most significant index).
CMatrix kron(const CMatrix& a, const CMatrix& b);

}  // namespace traceiht

#endif  // TRACEIHT_LINALG_HPP
