#ifndef TRACEIHT_SPARSE_IHT_HPP
#define TRACEIHT_SPARSE_IHT_HPP

#include "traceiht/linalg.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace traceiht {

/// Linear model Y = X theta + eps with an n x p design.
struct SparseInstance {
  RMatrix x;
  RVector y;
  std::optional<RVector> theta;
  std::optional<RVector> noise;

  [[nodiscard]] Index samples() const { return x.rows(); }
  [[nodiscard]] Index features() const { return x.cols(); }
  [[nodiscard]] RMatrix gram() const;  // X^T X / n
  void validate() const;
};

/// Isotropic Gaussian design with a k-sparse theta: support drawn uniformly,
/// values of random sign and magnitude uniform on [1, 2].
SparseInstance gen_sparse_instance(Index n, Index p, Index k, double noise_std,
                                   std::uint64_t seed);

struct IdentityStrategy {};

/// Row-wise program: v_j minimizes 1/2 v^T S v - v_j + mu ||v||_1, whose
/// optimality conditions are exactly ||S v - e_j||_inf <= mu.
struct RowProgramStrategy {
  /// Defaults to sqrt(log p / n) when unset.
  std::optional<double> mu;
  double tolerance = 1e-6;
};

using DecorrelatorStrategy = std::variant<IdentityStrategy, RowProgramStrategy>;

class InfeasibleProgram : public std::runtime_error {
 public:
  InfeasibleProgram(Index row, double mu, double smallest_feasible_mu);
  Index row;
  double mu;
  double smallest_feasible_mu;
};

struct Decorrelator {
  RMatrix v;
  std::string construction;  // "identity" or "row_program(mu=...)"
  double mu = 0.0;
  std::map<Index, double> certified_r;

  [[nodiscard]] double r(Index k) const;
};

/// sup over k-sparse u of ||V S u - u||_inf / ||u||_inf, computed exactly as
/// the largest sum of the k biggest |(V S - I)_{ij}| over a row.
double estimate_r_k(const RMatrix& v, const RMatrix& gram, Index k);

Decorrelator build_decorrelator(const RMatrix& x, const DecorrelatorStrategy& strategy,
                                const std::vector<Index>& ks);

struct SparseConfig {
  /// T_0 = B, a loose bound on ||theta||_inf.
  double start = 1.0;
  /// Upper bound on twice the sparsity; r_K drives the contraction.
  Index max_sparsity = 2;
  double delta = 0.05;
  /// Replaces 2 sqrt(M log(p/delta)/n) when set.
  std::optional<double> upsilon;
};

struct SparseIterationRecord {
  Index iter = 0;
  double threshold = 0.0;
  Index support = 0;
  double error_inf = -1.0;  // ||theta - theta_r||_inf when the truth is known
};

struct SparseResult {
  RVector theta_hat;
  std::vector<SparseIterationRecord> trace;
  Index iterations = 0;
  double r_k = 0.0;
  double upsilon = 0.0;
  double max_variance = 0.0;  // M = max diag(V S V^T)
};

class AssumptionViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs ceil(log n / log(1/(2 r_K))) iterations (at least one) of
/// alpha_r = floor((1/n) V X^T (Y - X theta_{r-1}))_{T_r}, theta_r = theta_{r-1} + alpha_r,
/// with T_r = 2 r_K T_{r-1} + upsilon.
SparseResult sparse_iht_run(const SparseInstance& instance, const Decorrelator& decorrelator,
                            const SparseConfig& config);

/// theta_r + (1/n) V X^T (Y - X theta_r).
RVector desparsify(const RVector& theta_r, const SparseInstance& instance, const RMatrix& v);

struct SparseDeltaZ {
  RVector delta;
  RVector z;
};

/// delta = sqrt(n)(I - V S)(theta_r - theta), z = (1/sqrt n) V X^T eps.
SparseDeltaZ sparse_delta_z(const RVector& theta_r, const SparseInstance& instance,
                            const RMatrix& v);

struct SparseIntervals {
  RVector estimate;
  RVector lower;
  RVector upper;
  RVector half_widths;
};

/// Half-width sigma_hat * sqrt((V S V^T)_jj / n) * z_{(1+level)/2}.
SparseIntervals sparse_confidence_intervals(const RVector& theta_hat,
                                            const SparseInstance& instance, const RMatrix& v,
                                            double sigma_hat, double level);

/// ||Y - X theta||_2 / sqrt(n).
double sparse_sigma(const SparseInstance& instance, const RVector& theta);

/// Columns j,theta_hat,ci_lower,ci_upper,in_support; in_support marks the
/// coordinates kept by the thresholded estimate theta_r.
void write_coordinate_csv(std::ostream& out, const SparseIntervals& intervals,
                          const RVector& theta_r);

/// Design with X^T X / n = I exactly (requires n >= p).
RMatrix orthogonal_design(Index n, Index p, std::uint64_t seed);

}  // namespace traceiht

#endif  // TRACEIHT_SPARSE_IHT_HPP
