#ifndef TRACEIHT_TRACE_MODEL_HPP
#define TRACEIHT_TRACE_MODEL_HPP

#include "traceiht/linalg.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace traceiht {

/// The measurement operator X: n square d x d matrices X^i.
///
/// Stored as an n x d^2 real part and an (optionally empty) n x d^2 imaginary
/// part; row i holds vec(X^i) in column-major order. A design built from real
/// matrices keeps no imaginary storage, which is the same as holding exact zeros.
class DesignBatch {
 public:
  DesignBatch(Index dim, RMatrix real_part, RMatrix imag_part = RMatrix());

  static DesignBatch from_matrices(const std::vector<CMatrix>& matrices);

  [[nodiscard]] Index size() const { return real_.rows(); }
  [[nodiscard]] Index dim() const { return dim_; }
  [[nodiscard]] bool is_real() const { return imag_.size() == 0; }

  /// Mark every X^i as Hermitian; apply_design then checks that the traces
  /// it discards the imaginary part of are real to 1e-9.
  void set_hermitian(bool hermitian) { hermitian_ = hermitian; }
  [[nodiscard]] bool hermitian() const { return hermitian_; }

  [[nodiscard]] CMatrix matrix(Index i) const;
  [[nodiscard]] Complex entry(Index i, Index row, Index col) const;

  [[nodiscard]] const RMatrix& real_part() const { return real_; }
  [[nodiscard]] const RMatrix& imag_part() const { return imag_; }

 private:
  Index dim_;
  RMatrix real_;
  RMatrix imag_;
  bool hermitian_ = false;
};

struct Observations {
  RVector values;
  double noise_std = 0.0;
  /// Realized additive noise, so that values == apply_design(X, Theta) + *noise.
  std::optional<RVector> noise;
  std::optional<std::string> truth_ref;
};

/// Monte-Carlo lower estimate of the restricted isometry deviation at rank k.
struct RipEstimate {
  Index k = 0;
  Index trials = 0;
  double max_deviation = 0.0;
  std::vector<double> deviations;
};

/// (Re tr((X^i)^H A))_i.
RVector apply_design(const DesignBatch& design, const CMatrix& a);

/// Largest |Im tr((X^i)^H A)| over i.
double imaginary_residue(const DesignBatch& design, const CMatrix& a);

/// (1/n) sum_i v_i X^i, the adjoint of apply_design for the inner products
/// <u,v>/n on R^n and Re tr(A^H B) on matrices.
CMatrix adjoint_apply(const DesignBatch& design, const RVector& v);

DesignBatch gen_gaussian_design(Index n, Index d, std::uint64_t seed);

/// n = d^2 matrices d * E_{jl}: an exact isometry on the whole matrix space.
DesignBatch orthonormal_basis_design(Index d);

/// sum_{l<k} N_l N_l^T with N_l ~ N(0, I_d).
CMatrix gen_low_rank_theta(Index d, Index k, std::uint64_t seed);

Observations simulate_observations(const DesignBatch& design, const CMatrix& theta,
                                   double noise_std, std::uint64_t seed);

/// Random rank-<=k probe used by estimate_rip_constant: G H^H / ||G H^H||_F.
CMatrix random_rank_probe(Index d, Index k, std::uint64_t seed);

/// Hermitian rank-<=k probe U diag(+-1) U^H / ||.||_F with complex Gaussian U.
CMatrix random_hermitian_probe(Index d, Index k, std::uint64_t seed);

/// Hermitian designs only see the Hermitian part of A, so they are probed
/// with random_hermitian_probe; other designs with random_rank_probe.
RipEstimate estimate_rip_constant(const DesignBatch& design, Index k, Index trials,
                                  std::uint64_t seed);

/// |(1/n) ||X(A)||^2 - ||A||_F^2|.
double isometry_deviation(const DesignBatch& design, const CMatrix& a);

// Binary container: "TRCM", u32 version, u64 n, u64 d, n*d*d complex entries as
// little-endian f64 (re, im) pairs with each X^i row-major, then u64 count
// (0 or n) followed by that many f64 observations.
struct TraceContainer {
  DesignBatch design;
  std::optional<Observations> observations;
};

inline constexpr std::uint32_t kContainerVersion = 1;

void write_container(std::ostream& out, const DesignBatch& design,
                     const Observations* observations = nullptr);
void write_container(const std::string& path, const DesignBatch& design,
                     const Observations* observations = nullptr);
TraceContainer read_container(std::istream& in);
TraceContainer read_container(const std::string& path);

/// CSV with columns sample,row,col,re,im.
void write_design_csv(std::ostream& out, const DesignBatch& design);
/// CSV with columns sample,y.
void write_observations_csv(std::ostream& out, const Observations& obs);

}  // namespace traceiht

#endif  // TRACEIHT_TRACE_MODEL_HPP
