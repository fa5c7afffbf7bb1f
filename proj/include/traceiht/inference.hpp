#ifndef TRACEIHT_INFERENCE_HPP
#define TRACEIHT_INFERENCE_HPP

#include "traceiht/linalg.hpp"
#include "traceiht/trace_model.hpp"

#include <iosfwd>
#include <optional>

namespace traceiht {

/// How the normal quantile in the interval half-width is chosen.
enum class QuantileConvention {
  /// z at `level` itself (1.645 for 0.95), the construction used in the
  /// original simulations; nominal two-sided coverage is 2*level - 1.
  paper_literal,
  /// z at (1 + level) / 2, a symmetric interval with coverage `level`.
  two_sided,
};

struct CiOptions {
  double level = 0.95;
  QuantileConvention convention = QuantileConvention::paper_literal;
};

/// Entrywise confidence intervals around the debiased estimate. Intervals for
/// the real part are stored explicitly; the imaginary part uses the same
/// half-width around debiased.imag().
struct InferenceReport {
  CMatrix debiased;
  RMatrix ci_lower;
  RMatrix ci_upper;
  RMatrix half_widths;
  RMatrix entry_scales;
  double sigma_hat = 0.0;
  double quantile = 0.0;
  std::optional<double> coverage;
  /// Mean full interval length, (1/d^2) sum 2 c_{m,m'}.
  double mean_ci_length = 0.0;
};

/// estimate + (1/n) sum_i X^i (Y_i - tr((X^i)^H estimate)).
CMatrix debias(const CMatrix& estimate, const DesignBatch& design, const Observations& y);

struct DeltaZ {
  CMatrix delta;
  CMatrix z;
};

/// Bias/noise split of sqrt(n)(debias(estimate) - theta) for simulated data:
/// delta = sqrt(n)(estimate - theta) - (1/sqrt n) sum X^i tr((X^i)^H (estimate - theta)),
/// z = (1/sqrt n) sum X^i eps_i.
DeltaZ delta_z_decomposition(const CMatrix& estimate, const CMatrix& theta,
                             const DesignBatch& design, const RVector& noise);
/// Throws UnsupportedInstance when the observations carry no realized noise.
DeltaZ delta_z_decomposition(const CMatrix& estimate, const CMatrix& theta,
                             const DesignBatch& design, const Observations& y);

/// sqrt((1/n) sum_i |X^i_{m,m'}|^2).
double entry_scale(const DesignBatch& design, Index m, Index m_prime);
RMatrix entry_scales(const DesignBatch& design);

/// (1/n) sum_i X^i_{j,j'} X^i_{l,l'} (real part for complex designs).
double z_covariance_entry(const DesignBatch& design, Index j, Index j_prime, Index l,
                          Index l_prime);

double ci_quantile(const CiOptions& options);

InferenceReport confidence_intervals(const CMatrix& debiased, const DesignBatch& design,
                                     double sigma_hat, const CiOptions& options = {});

/// Fraction of entries whose true value lies inside its interval (both the
/// real and imaginary parts for complex matrices).
double coverage_report(const CMatrix& theta, const InferenceReport& report);

/// Columns m,m_prime,estimate_re,estimate_im,ci_lower,ci_upper[,covered].
void write_inference_csv(std::ostream& out, const InferenceReport& report,
                         const CMatrix* theta = nullptr);

}  // namespace traceiht

#endif  // TRACEIHT_INFERENCE_HPP
