#ifndef TRACEIHT_QUANTUM_HPP
#define TRACEIHT_QUANTUM_HPP

#include "traceiht/linalg.hpp"
#include "traceiht/trace_model.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace traceiht {

/// Per-qubit Pauli indices: 1 = X, 2 = Y, 3 = Z, and 0 = identity (only in
/// marginalized settings). Qubit 1 is the leftmost Kronecker factor.
struct PauliSetting {
  std::vector<int> qubits;

  [[nodiscard]] Index size() const { return static_cast<Index>(qubits.size()); }
  /// Letters X, Y, Z, I, e.g. "XZY".
  [[nodiscard]] std::string to_string() const;
  friend bool operator==(const PauliSetting&, const PauliSetting&) = default;
};

/// Per-qubit outcomes, each +1 or -1.
using Outcome = std::vector<int>;

struct OutcomeBatch {
  PauliSetting setting;
  std::vector<Outcome> outcomes;

  [[nodiscard]] Index repetitions() const { return static_cast<Index>(outcomes.size()); }
};

/// Outcome probabilities indexed by the 2^m outcome table: bit (m-1-l) of the
/// index is 1 when qubit l+1 reads -1, so index 0 is (+1,...,+1) and the
/// order is lexicographic with qubit 1 most significant.
struct OutcomeDistribution {
  PauliSetting setting;
  RVector probabilities;
};

CMatrix pauli_matrix(int index);

/// (I + o sigma^s) / 2.
CMatrix eigenprojector(int s, int o);

/// Tensor product of per-qubit eigenprojectors; identity qubits contribute I.
CMatrix setting_projector(const PauliSetting& setting, const Outcome& outcome);

/// s_1 (x) ... (x) s_m, identity at index-0 qubits.
CMatrix pauli_string(const PauliSetting& setting);

Outcome outcome_from_index(Index index, Index qubits);
Index outcome_index(const Outcome& outcome);

/// Throws std::invalid_argument with the trace, Hermitian defect and minimum
/// eigenvalue when theta is not a density matrix (tolerance 1e-8).
void require_density_matrix(const CMatrix& theta);

OutcomeDistribution outcome_distribution(const PauliSetting& setting, const CMatrix& theta);

/// Inverse-CDF sampling over the outcome table.
OutcomeBatch sample_outcomes(const PauliSetting& setting, const CMatrix& theta,
                             Index repetitions, std::uint64_t seed);

int parity(const Outcome& outcome);

struct MarginalizedMeasurement {
  PauliSetting setting;
  Outcome outcome;
};

/// Qubits whose bit is set in `subset_mask` (bit l <-> qubit l+1) become
/// identity with outcome +1; the others are unchanged.
MarginalizedMeasurement marginalize(const PauliSetting& setting, const Outcome& outcome,
                                    std::uint32_t subset_mask);

std::vector<PauliSetting> gen_random_settings(Index count, Index qubits, std::uint64_t seed);

/// G G^H / tr(G G^H) with G a d x k complex standard Gaussian.
CMatrix gen_density_matrix(Index d, Index k, std::uint64_t seed);

/// sqrt(d) * 3^{-|E|/2} * (3/4)^{m/2}.
double rescale_factor(Index qubits, Index subset_size);

/// Scale applied to both y and the design matrix of a dataset row:
/// rescale_factor * 2^{m/2} = 3^{(m-|E|)/2}. The extra 2^{m/2} turns the sum
/// over the 2^m subsets of a setting into the 1/n average over all rows, so
/// that (1/n) sum_i tr(X^i A)^2 estimates ||A||_F^2.
double dataset_row_scale(Index qubits, Index subset_size);

struct DatasetRowKey {
  Index setting_index = 0;
  std::uint32_t subset_mask = 0;
};

/// Rescaled trace-regression data: one row per (setting, subset E), rows
/// ordered by setting then by E as an m-bit counter, each scaled by
/// dataset_row_scale.
struct TomographyDataset {
  Index qubits = 0;
  Index dim = 0;
  DesignBatch design;
  Observations observations;
  std::vector<DatasetRowKey> keys;
  std::vector<PauliSetting> settings;
};

TomographyDataset build_rescaled_dataset(const std::vector<PauliSetting>& settings,
                                         const std::vector<OutcomeBatch>& batches);

/// Noiseless counterpart of build_rescaled_dataset: every averaged parity is
/// replaced by its expectation tr(P_{S~(E)} theta).
TomographyDataset build_expected_dataset(const std::vector<PauliSetting>& settings,
                                         const CMatrix& theta);

/// Sidecar manifest: setting_index,setting_string,subset_mask,y_value.
void write_dataset_manifest(std::ostream& out, const TomographyDataset& dataset);

}  // namespace traceiht

#endif  // TRACEIHT_QUANTUM_HPP
