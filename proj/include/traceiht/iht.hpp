#ifndef TRACEIHT_IHT_HPP
#define TRACEIHT_IHT_HPP

#include "traceiht/linalg.hpp"
#include "traceiht/trace_model.hpp"

#include <iosfwd>
#include <optional>
#include <variant>
#include <vector>

namespace traceiht {

/// Constant threshold increment upsilon.
struct FixedUpsilon {
  double value = 0.0;
};

/// upsilon_r = sigma_r * sqrt(d/n) * z_quantile, recomputed every iteration
/// from the empirical risk at the previous estimate.
struct DataDrivenUpsilon {
  double quantile = 0.90;
};

/// T_0 = B supplied by the caller.
struct FixedStart {
  double value = 0.0;
};

/// T_0 = sigma_hat(0) + upsilon(1), an upper bound on ||Theta||_F w.h.p.
struct DataDrivenStart {};

struct IhtConfig {
  double rho = 0.5;
  std::variant<FixedUpsilon, DataDrivenUpsilon> upsilon = DataDrivenUpsilon{};
  std::variant<FixedStart, DataDrivenStart> start = DataDrivenStart{};
  double e = 0.1;
  /// Iteration cap; defaults to ceil(10 ln n).
  std::optional<Index> max_iters;
  /// Confidence level carried into reports.
  double delta = 0.05;

  void validate() const;
  [[nodiscard]] Index iteration_cap(Index n) const;
};

struct IterationRecord {
  Index iter = 0;
  double threshold = 0.0;    // T_r
  double upsilon = 0.0;      // upsilon_r
  double sigma = 0.0;        // sigma_hat_r, at the previous estimate
  Index rank = 0;            // rank of the thresholded estimate
  double residual_l2 = 0.0;  // ||Y - X(estimate_r)||_2
};

struct IhtState {
  CMatrix estimate;
  double threshold = 0.0;        // T_r (T_0 before the first step)
  double start_threshold = 0.0;  // T_0
  Index iter = 0;
  RVector residual;              // Y - X(estimate)
  std::vector<IterationRecord> trace;
};

struct IhtResult {
  CMatrix estimate;
  IhtState state;
  bool converged = false;
  /// Closed-form cap 1 + log(10(1-rho)T_0/upsilon)/log(1/rho), evaluated at the
  /// upsilon the stopping rule fired on.
  double iteration_bound = 0.0;
  /// False when the data-driven upsilon increased somewhere along the run,
  /// in which case iteration_bound carries no guarantee.
  bool bound_applicable = false;

  [[nodiscard]] Index iterations() const { return state.iter; }
  [[nodiscard]] double final_sigma() const {
    return state.trace.empty() ? 0.0 : state.trace.back().sigma;
  }
};

/// ||Y - X(estimate)||_2 / sqrt(n).
double empirical_sigma(const DesignBatch& design, const Observations& y, const CMatrix& estimate);

/// sigma * sqrt(d/n) * z_quantile.
double upsilon_r(double sigma, Index d, Index n, double quantile);

double threshold_step(double previous, double rho, double upsilon);

/// Threshold after r steps from start with a constant increment:
/// (rho^r ((1-rho) T_0 - upsilon) + upsilon) / (1 - rho).
double threshold_closed_form(double start, double rho, double upsilon, Index r);

/// T_0 per the configured start mode.
double initial_threshold(const DesignBatch& design, const Observations& y, const IhtConfig& config);

IhtState initial_state(const DesignBatch& design, const Observations& y, const IhtConfig& config);

/// One backprojection + spectral thresholding step.
///
/// With a fixed upsilon the threshold follows T_r = rho T_{r-1} + upsilon.
/// With the data-driven upsilon it is the constant-increment closed form
/// anchored at T_0 and evaluated at the current upsilon_r, clamped so it never
/// increases; both coincide while upsilon stays constant.
IhtState iht_step(const IhtState& state, const DesignBatch& design, const Observations& y,
                  const IhtConfig& config);

/// T_r <= (1 + e) upsilon_r / (1 - rho).
bool stopping_check(double threshold, double upsilon, double rho, double e);

double stopping_iteration_bound(double rho, double start, double upsilon);

IhtResult run_iht(const DesignBatch& design, const Observations& y, const IhtConfig& config);

/// Columns iter,T_r,sigma_r,rank,residual_l2.
void write_trace_csv(std::ostream& out, const IhtState& state);

/// Validity condition rho >= 4 sqrt(K) c(2K), evaluated with a probed RIP
/// deviation at rank 2K. Reported, never enforced.
struct ValidityDiagnostic {
  double required_rho = 0.0;
  bool satisfied = false;
};
ValidityDiagnostic validity_diagnostic(const IhtConfig& config, const RipEstimate& rip_at_2k,
                                       Index max_rank);

}  // namespace traceiht

#endif  // TRACEIHT_IHT_HPP
