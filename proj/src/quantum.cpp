#include "traceiht/quantum.hpp"

#include "traceiht/random.hpp"

#include <Eigen/Eigenvalues>
#include <boost/random/uniform_int_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace traceiht {

namespace {

constexpr Complex kI(0.0, 1.0);

void check_pauli_index(int index) {
  if (index < 0 || index > 3) {
    throw std::invalid_argument("Pauli index " + std::to_string(index) + " outside 0..3");
  }
}

void check_setting(const PauliSetting& setting) {
  if (setting.qubits.empty()) throw std::invalid_argument("PauliSetting: needs at least one qubit");
  if (setting.qubits.size() > 16) throw std::invalid_argument("PauliSetting: more than 16 qubits");
  for (int q : setting.qubits) check_pauli_index(q);
}

void check_outcome(const Outcome& outcome) {
  for (int o : outcome) {
    if (o != 1 && o != -1) throw std::invalid_argument("outcome entries must be +1 or -1");
  }
}

// Columns are the +1 and -1 eigenvectors of sigma^s (the standard basis for s = 0).
CMatrix eigenbasis(int s) {
  const double h = 1.0 / std::sqrt(2.0);
  CMatrix u(2, 2);
  switch (s) {
    case 1: u << h, h, h, -h; break;
    case 2: u << h, h, h * kI, -h * kI; break;
    default: u = CMatrix::Identity(2, 2); break;
  }
  return u;
}

// Writes scale * pauli_string(setting) into row `row` of (re, im).
void write_design_row(RMatrix& re, RMatrix& im, Index row, const PauliSetting& setting,
                      double scale) {
  const CMatrix p = pauli_string(setting);
  const Index d = p.rows();
  for (Index c = 0; c < d; ++c) {
    for (Index r = 0; r < d; ++r) {
      re(row, r + c * d) = scale * p(r, c).real();
      im(row, r + c * d) = scale * p(r, c).imag();
    }
  }
}

PauliSetting marginal_setting(const PauliSetting& setting, std::uint32_t mask) {
  PauliSetting out = setting;
  for (std::size_t l = 0; l < out.qubits.size(); ++l) {
    if (mask & (1u << l)) out.qubits[l] = 0;
  }
  return out;
}

Index popcount(std::uint32_t mask) { return static_cast<Index>(__builtin_popcount(mask)); }

TomographyDataset assemble(const std::vector<PauliSetting>& settings, Index qubits,
                           const std::function<double(Index, std::uint32_t)>& mean_parity) {
  const Index d = Index{1} << qubits;
  const Index subsets = Index{1} << qubits;
  const Index rows = static_cast<Index>(settings.size()) * subsets;
  RMatrix re(rows, d * d);
  RMatrix im(rows, d * d);
  RVector y(rows);
  std::vector<DatasetRowKey> keys;
  keys.reserve(static_cast<std::size_t>(rows));
  Index row = 0;
  for (Index i = 0; i < static_cast<Index>(settings.size()); ++i) {
    for (std::uint32_t mask = 0; mask < static_cast<std::uint32_t>(subsets); ++mask) {
      const double scale = dataset_row_scale(qubits, popcount(mask));
      write_design_row(re, im, row, marginal_setting(settings[static_cast<std::size_t>(i)], mask), scale);
      y(row) = scale * mean_parity(i, mask);
      keys.push_back({i, mask});
      ++row;
    }
  }
  DesignBatch design(d, std::move(re), std::move(im));
  design.set_hermitian(true);
  TomographyDataset out{qubits, d, std::move(design), Observations{}, std::move(keys), settings};
  out.observations.values = std::move(y);
  return out;
}

}  // namespace

std::string PauliSetting::to_string() const {
  static constexpr char kLetters[] = {'I', 'X', 'Y', 'Z'};
  std::string out;
  for (int q : qubits) {
    check_pauli_index(q);
    out.push_back(kLetters[q]);
  }
  return out;
}

CMatrix pauli_matrix(int index) {
  check_pauli_index(index);
  CMatrix s(2, 2);
  switch (index) {
    case 0: s << 1, 0, 0, 1; break;
    case 1: s << 0, 1, 1, 0; break;
    case 2: s << 0, -kI, kI, 0; break;
    default: s << 1, 0, 0, -1; break;
  }
  return s;
}

CMatrix eigenprojector(int s, int o) {
  if (s < 1 || s > 3) throw std::invalid_argument("eigenprojector: setting must be 1, 2 or 3");
  if (o != 1 && o != -1) throw std::invalid_argument("eigenprojector: outcome must be +1 or -1");
  return 0.5 * (CMatrix::Identity(2, 2) + static_cast<double>(o) * pauli_matrix(s));
}

CMatrix setting_projector(const PauliSetting& setting, const Outcome& outcome) {
  check_setting(setting);
  if (outcome.size() != setting.qubits.size()) {
    throw std::invalid_argument("setting_projector: outcome length " +
                                std::to_string(outcome.size()) + " != qubit count " +
                                std::to_string(setting.qubits.size()));
  }
  check_outcome(outcome);
  CMatrix out = CMatrix::Identity(1, 1);
  for (std::size_t l = 0; l < outcome.size(); ++l) {
    const int s = setting.qubits[l];
    CMatrix factor = s == 0 ? CMatrix((outcome[l] == 1 ? 1.0 : 0.0) * CMatrix::Identity(2, 2))
                            : eigenprojector(s, outcome[l]);
    out = kron(out, factor);
  }
  return out;
}

CMatrix pauli_string(const PauliSetting& setting) {
  check_setting(setting);
  CMatrix out = CMatrix::Identity(1, 1);
  for (int s : setting.qubits) out = kron(out, pauli_matrix(s));
  return out;
}

Outcome outcome_from_index(Index index, Index qubits) {
  Outcome out(static_cast<std::size_t>(qubits));
  for (Index l = 0; l < qubits; ++l) {
    out[static_cast<std::size_t>(l)] = ((index >> (qubits - 1 - l)) & 1) ? -1 : 1;
  }
  return out;
}

Index outcome_index(const Outcome& outcome) {
  check_outcome(outcome);
  Index index = 0;
  for (int o : outcome) index = (index << 1) | (o == -1 ? 1 : 0);
  return index;
}

void require_density_matrix(const CMatrix& theta) {
  if (theta.rows() != theta.cols() || theta.rows() < 1) {
    throw std::invalid_argument("density matrix must be square");
  }
  require_finite(theta, "density matrix");
  const double hermitian_defect = (theta - theta.adjoint()).cwiseAbs().maxCoeff();
  const Complex trace = theta.trace();
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(0.5 * (theta + theta.adjoint()),
                                             Eigen::EigenvaluesOnly);
  const double min_eigenvalue = eig.eigenvalues().minCoeff();
  if (hermitian_defect > 1e-8 || std::abs(trace - 1.0) > 1e-8 || min_eigenvalue < -1e-8) {
    std::ostringstream msg;
    msg << "not a density matrix: trace " << trace << ", Hermitian defect " << hermitian_defect
        << ", min eigenvalue " << min_eigenvalue;
    throw std::invalid_argument(msg.str());
  }
}

OutcomeDistribution outcome_distribution(const PauliSetting& setting, const CMatrix& theta) {
  check_setting(setting);
  const Index m = setting.size();
  const Index d = Index{1} << m;
  if (theta.rows() != d) {
    throw std::invalid_argument("outcome_distribution: theta dimension does not match 2^m");
  }
  require_density_matrix(theta);

  CMatrix basis = CMatrix::Identity(1, 1);
  for (int s : setting.qubits) basis = kron(basis, eigenbasis(s));
  const RVector full = (basis.adjoint() * theta * basis).diagonal().real();

  // Identity qubits always read +1: fold the -1 half of their axis into +1.
  RVector probs = RVector::Zero(d);
  for (Index idx = 0; idx < d; ++idx) {
    Index target = idx;
    for (Index l = 0; l < m; ++l) {
      if (setting.qubits[static_cast<std::size_t>(l)] == 0) target &= ~(Index{1} << (m - 1 - l));
    }
    probs(target) += full(idx);
  }
  for (Index i = 0; i < d; ++i) {
    if (probs(i) < 0.0) {
      if (probs(i) < -1e-12) {
        throw NumericalError("outcome_distribution: probability " + std::to_string(probs(i)));
      }
      probs(i) = 0.0;
    }
  }
  probs /= probs.sum();
  return {setting, probs};
}

OutcomeBatch sample_outcomes(const PauliSetting& setting, const CMatrix& theta,
                             Index repetitions, std::uint64_t seed) {
  if (repetitions < 1) throw std::invalid_argument("sample_outcomes: repetitions must be >= 1");
  const OutcomeDistribution dist = outcome_distribution(setting, theta);
  const Index size = dist.probabilities.size();
  std::vector<double> cumulative(static_cast<std::size_t>(size));
  double running = 0.0;
  for (Index i = 0; i < size; ++i) {
    running += dist.probabilities(i);
    cumulative[static_cast<std::size_t>(i)] = running;
  }
  RandomStream rng(seed);
  OutcomeBatch batch{setting, {}};
  batch.outcomes.reserve(static_cast<std::size_t>(repetitions));
  for (Index t = 0; t < repetitions; ++t) {
    const double u = rng.uniform() * running;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const Index idx = std::min<Index>(static_cast<Index>(it - cumulative.begin()), size - 1);
    batch.outcomes.push_back(outcome_from_index(idx, setting.size()));
  }
  return batch;
}

int parity(const Outcome& outcome) {
  int p = 1;
  for (int o : outcome) p *= o;
  return p;
}

MarginalizedMeasurement marginalize(const PauliSetting& setting, const Outcome& outcome,
                                    std::uint32_t subset_mask) {
  if (outcome.size() != setting.qubits.size()) {
    throw std::invalid_argument("marginalize: outcome length mismatch");
  }
  MarginalizedMeasurement out{marginal_setting(setting, subset_mask), outcome};
  for (std::size_t l = 0; l < out.outcome.size(); ++l) {
    if (subset_mask & (1u << l)) out.outcome[l] = 1;
  }
  return out;
}

std::vector<PauliSetting> gen_random_settings(Index count, Index qubits, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("gen_random_settings: count must be >= 1");
  if (qubits < 1) throw std::invalid_argument("gen_random_settings: qubits must be >= 1");
  RandomStream rng(seed);
  boost::random::uniform_int_distribution<int> pick(1, 3);
  std::vector<PauliSetting> out(static_cast<std::size_t>(count));
  for (auto& setting : out) {
    setting.qubits.resize(static_cast<std::size_t>(qubits));
    for (int& q : setting.qubits) q = pick(rng);
  }
  return out;
}

CMatrix gen_density_matrix(Index d, Index k, std::uint64_t seed) {
  if (k < 1 || k > d) throw std::invalid_argument("gen_density_matrix: need 1 <= k <= d");
  RandomStream rng(seed);
  CMatrix g(d, k);
  for (Index c = 0; c < k; ++c) {
    for (Index r = 0; r < d; ++r) g(r, c) = Complex(rng.normal(), rng.normal());
  }
  CMatrix theta = g * g.adjoint();
  theta = 0.5 * (theta + theta.adjoint());
  theta /= theta.trace().real();
  return theta;
}

double rescale_factor(Index qubits, Index subset_size) {
  const double d = std::ldexp(1.0, static_cast<int>(qubits));
  return std::sqrt(d) * std::pow(3.0, -0.5 * static_cast<double>(subset_size)) *
         std::pow(0.75, 0.5 * static_cast<double>(qubits));
}

double dataset_row_scale(Index qubits, Index subset_size) {
  return rescale_factor(qubits, subset_size) * std::sqrt(std::ldexp(1.0, static_cast<int>(qubits)));
}

TomographyDataset build_rescaled_dataset(const std::vector<PauliSetting>& settings,
                                         const std::vector<OutcomeBatch>& batches) {
  if (settings.empty()) throw std::invalid_argument("build_rescaled_dataset: no settings");
  if (settings.size() != batches.size()) {
    throw std::invalid_argument("build_rescaled_dataset: " + std::to_string(batches.size()) +
                                " outcome batches for " + std::to_string(settings.size()) +
                                " settings");
  }
  const Index m = settings.front().size();
  for (std::size_t i = 0; i < settings.size(); ++i) {
    check_setting(settings[i]);
    if (settings[i].size() != m) throw std::invalid_argument("build_rescaled_dataset: mixed qubit counts");
    if (!(batches[i].setting == settings[i])) {
      throw std::invalid_argument("build_rescaled_dataset: batch " + std::to_string(i) +
                                  " was measured with a different setting");
    }
    if (batches[i].outcomes.empty()) {
      throw std::invalid_argument("build_rescaled_dataset: empty outcome batch " + std::to_string(i));
    }
  }

  // Parity of the marginalized outcome = product of the outcomes outside E.
  auto mean_parity = [&](Index i, std::uint32_t mask) {
    const auto& batch = batches[static_cast<std::size_t>(i)];
    double sum = 0.0;
    for (const auto& outcome : batch.outcomes) {
      int p = 1;
      for (std::size_t l = 0; l < outcome.size(); ++l) {
        if (!(mask & (1u << l))) p *= outcome[l];
      }
      sum += p;
    }
    return sum / static_cast<double>(batch.outcomes.size());
  };
  return assemble(settings, m, mean_parity);
}

TomographyDataset build_expected_dataset(const std::vector<PauliSetting>& settings,
                                         const CMatrix& theta) {
  if (settings.empty()) throw std::invalid_argument("build_expected_dataset: no settings");
  const Index m = settings.front().size();
  auto expected = [&](Index i, std::uint32_t mask) {
    const CMatrix p = pauli_string(marginal_setting(settings[static_cast<std::size_t>(i)], mask));
    return (p * theta).trace().real();
  };
  return assemble(settings, m, expected);
}

void write_dataset_manifest(std::ostream& out, const TomographyDataset& dataset) {
  out << "setting_index,setting_string,subset_mask,y_value\n";
  const auto precision = out.precision(17);
  for (std::size_t row = 0; row < dataset.keys.size(); ++row) {
    const auto& key = dataset.keys[row];
    out << key.setting_index << ','
        << dataset.settings[static_cast<std::size_t>(key.setting_index)].to_string() << ','
        << key.subset_mask << ',' << dataset.observations.values(static_cast<Index>(row)) << '\n';
  }
  out.precision(precision);
}

}  // namespace traceiht
