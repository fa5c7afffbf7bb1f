#ifndef TRACEIHT_EXPERIMENTS_HPP
#define TRACEIHT_EXPERIMENTS_HPP

#include "traceiht/inference.hpp"
#include "traceiht/iht.hpp"
#include "traceiht/linalg.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace traceiht {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentMode { matrix_sim, quantum, sparse };

struct MatrixGrid {
  std::vector<Index> d{16};
  std::vector<Index> k{2};
  std::vector<Index> n{2000};
  /// "gaussian" or "orthonormal_basis" (the latter ignores n and uses d^2).
  std::string design = "gaussian";
  double noise_std = 1.0;
};

struct QuantumGrid {
  std::vector<Index> m{4};
  std::vector<Index> k{1};
  std::vector<Index> alpha{2, 3, 4, 5};
  /// Repetitions per setting as multiples of d.
  std::vector<Index> t_factor{1, 10};
};

struct SparseGrid {
  std::vector<Index> p{200};
  std::vector<Index> k{5};
  std::vector<Index> n{600};
  /// "gaussian" or "orthogonal".
  std::string design = "gaussian";
  double noise_std = 1.0;
};

struct SparseEstimatorConfig {
  /// "identity" or "row_program".
  std::string strategy = "identity";
  std::optional<double> mu;
  /// Defaults to 2k at each grid point.
  std::optional<Index> max_sparsity;
  double delta = 0.05;
  /// Defaults to 2 ||(1/n) V X^T Y||_inf.
  std::optional<double> start;
  std::optional<double> upsilon;
  double level = 0.95;
};

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::matrix_sim;
  MatrixGrid matrix;
  QuantumGrid quantum;
  SparseGrid sparse;
  Index replicates = 50;
  std::uint64_t seed = 1;
  IhtConfig iht;
  bool inference = true;
  CiOptions ci;
  SparseEstimatorConfig sparse_estimator;
  std::string output_dir;
  Index workers = 1;
  /// Also write per-replicate traces, interval tables and dataset manifests.
  bool export_details = false;

  void validate() const;
};

/// Parses the JSON config; keys mirror the field names above in snake_case.
/// Throws ConfigError on malformed input.
ExperimentConfig parse_config(const std::string& json_text, ExperimentMode mode);
ExperimentConfig load_config(const std::string& path, ExperimentMode mode);

struct MatrixMetrics {
  double frobenius_sq = 0.0;
  double operator_norm = 0.0;
  double entrywise_inf = 0.0;
  double schatten1 = 0.0;
};

/// Error norms of estimate - truth.
MatrixMetrics compute_metrics(const CMatrix& estimate, const CMatrix& truth);

using NamedValues = std::vector<std::pair<std::string, double>>;

struct MetricRow {
  Index cell = 0;
  Index replicate = 0;
  NamedValues params;
  NamedValues metrics;
  double runtime_ms = 0.0;
};

struct AggregateRow {
  Index cell = 0;
  NamedValues params;
  Index replicates = 0;
  /// name, mean, 2.5% and 97.5% empirical quantiles
  std::vector<std::tuple<std::string, double, double, double>> metrics;
};

struct ExperimentOutput {
  std::vector<MetricRow> rows;
  std::vector<AggregateRow> aggregates;
};

ExperimentOutput run_matrix_experiment(const ExperimentConfig& config);
ExperimentOutput run_quantum_experiment(const ExperimentConfig& config);
ExperimentOutput run_sparse_experiment(const ExperimentConfig& config);
ExperimentOutput run_experiment(const ExperimentConfig& config);

/// Linear-interpolation empirical quantile of unsorted values.
double empirical_quantile(std::vector<double> values, double q);

std::vector<AggregateRow> aggregate(const std::vector<MetricRow>& rows);

void write_replicates_csv(std::ostream& out, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_replicates_csv(std::istream& in);
void write_aggregates_csv(std::ostream& out, const std::vector<AggregateRow>& rows);

/// Re-aggregates <dir>/replicates.csv into <dir>/aggregates.csv.
std::vector<AggregateRow> report(const std::string& dir);

std::string mode_name(ExperimentMode mode);

}  // namespace traceiht

#endif  // TRACEIHT_EXPERIMENTS_HPP
