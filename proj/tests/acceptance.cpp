// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Every tolerance and time budget is pinned below.

#include "helpers.hpp"
#include "traceiht/experiments.hpp"
#include "traceiht/inference.hpp"
#include "traceiht/iht.hpp"
#include "traceiht/quantum.hpp"
#include "traceiht/random.hpp"
#include "traceiht/sparse_iht.hpp"
#include "traceiht/trace_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

using namespace traceiht;
using namespace testing_support;

namespace {

constexpr std::uint64_t kSeed = 20240917;

struct Outcome1 {
  bool pass = false;
  std::string detail;
};

char buffer[512];

template <typename... Args>
std::string fmt(const char* format, Args... args) {
  std::snprintf(buffer, sizeof(buffer), format, args...);
  return buffer;
}

double median(std::vector<double> v) { return empirical_quantile(std::move(v), 0.5); }

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<double> metric_column(const ExperimentOutput& out, Index cell, const std::string& name) {
  std::vector<double> values;
  for (const auto& row : out.rows) {
    if (row.cell != cell) continue;
    for (const auto& [key, value] : row.metrics) {
      if (key == name) values.push_back(value);
    }
  }
  return values;
}

double param(const NamedValues& params, const std::string& name) {
  for (const auto& [key, value] : params) {
    if (key == name) return value;
  }
  return std::nan("");
}

// ---------------------------------------------------------------------------

Outcome1 exact_recovery() {
  constexpr double kTol = 1e-8;
  const DesignBatch basis = orthonormal_basis_design(16);
  const CMatrix theta = gen_low_rank_theta(16, 2, derive_seed(kSeed, {1, 0, 0}));
  const Observations y = simulate_observations(basis, theta, 0.0, 1);
  IhtConfig config;
  config.upsilon = FixedUpsilon{1e-6};
  const IhtResult fit = run_iht(basis, y, config);
  const double rel = (fit.estimate - theta).norm() / theta.norm();
  const double r_hat = static_cast<double>(fit.iterations());
  Outcome1 o;
  o.pass = fit.converged && rel <= kTol && r_hat <= fit.iteration_bound;
  o.detail = fmt("rel_frobenius=%.3g (<= %.0e), r_hat=%g, bound=%.3f", rel, kTol, r_hat,
                 fit.iteration_bound);
  return o;
}

struct RateRun {
  double op_error = 0.0;
  Index rank = 0;
  double r_hat = 0.0;
  double bound = 0.0;
};

std::vector<std::vector<RateRun>> rate_runs;  // shared by criteria 2 and 3

Outcome1 estimation_rate() {
  const std::vector<Index> ns{2000, 4000, 8000};
  constexpr Index d = 32, k = 2, reps = 50;
  std::vector<double> medians;
  double low_rank_fraction = 1.0;
  for (std::size_t c = 0; c < ns.size(); ++c) {
    std::vector<RateRun> runs;
    std::vector<double> errors;
    Index low_rank = 0;
    for (Index rep = 0; rep < reps; ++rep) {
      const CMatrix theta = gen_low_rank_theta(d, k, derive_seed(kSeed, {2 + c, std::uint64_t(rep), 0}));
      const DesignBatch design =
          gen_gaussian_design(ns[c], d, derive_seed(kSeed, {2 + c, std::uint64_t(rep), 1}));
      const Observations y =
          simulate_observations(design, theta, 1.0, derive_seed(kSeed, {2 + c, std::uint64_t(rep), 2}));
      const IhtResult fit = run_iht(design, y, IhtConfig{});
      RateRun run;
      run.op_error = operator_norm(fit.estimate - theta);
      run.rank = svd(fit.estimate).count_at_least(1e-10);
      run.r_hat = static_cast<double>(fit.iterations());
      run.bound = fit.iteration_bound;
      if (run.rank <= k) ++low_rank;
      errors.push_back(run.op_error);
      runs.push_back(run);
    }
    medians.push_back(median(errors));
    low_rank_fraction = std::min(low_rank_fraction, double(low_rank) / double(reps));
    rate_runs.push_back(std::move(runs));
  }
  const double ratio = medians[2] / medians[0];
  Outcome1 o;
  o.pass = medians[0] > medians[1] && medians[1] > medians[2] && ratio >= 0.35 && ratio <= 0.75 &&
           low_rank_fraction >= 0.9;
  o.detail = fmt("median op error %.4g > %.4g > %.4g, ratio(8000/2000)=%.3f in [0.35,0.75], "
                 "min rank<=k fraction=%.2f (>= 0.90)",
                 medians[0], medians[1], medians[2], ratio, low_rank_fraction);
  return o;
}

Outcome1 stopping_bound() {
  Index total = 0, violations = 0;
  double worst_gap = -1e300;
  for (const auto& runs : rate_runs) {
    for (const auto& run : runs) {
      ++total;
      if (!(run.r_hat <= run.bound)) ++violations;
      worst_gap = std::max(worst_gap, run.r_hat - run.bound);
    }
  }
  Outcome1 o;
  o.pass = total == 150 && violations == 0;
  o.detail = fmt("%ld runs, %ld with r_hat > bound, max(r_hat - bound)=%.3f", long(total),
                 long(violations), worst_gap);
  return o;
}

Outcome1 debias_identity() {
  constexpr double kTol = 1e-10;
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const Index d = 4 + Index(t % 5), n = 150 + 25 * Index(t % 7), k = 1 + Index(t % 3);
    const DesignBatch design = gen_gaussian_design(n, d, derive_seed(kSeed, {4, t, 1}));
    const CMatrix theta = gen_low_rank_theta(d, k, derive_seed(kSeed, {4, t, 0}));
    const Observations y = simulate_observations(design, theta, 0.5, derive_seed(kSeed, {4, t, 2}));
    const IhtResult fit = run_iht(design, y, IhtConfig{});
    const DeltaZ dz = delta_z_decomposition(fit.estimate, theta, design, y);
    const CMatrix lhs = std::sqrt(double(n)) * (debias(fit.estimate, design, y) - theta);
    worst = std::max(worst, max_abs_diff(lhs, dz.delta + dz.z));
  }
  Outcome1 o;
  o.pass = worst <= kTol;
  o.detail = fmt("max entrywise |sqrt(n)(deb - theta) - (delta + z)|=%.3g over 100 instances (<= %.0e)",
                 worst, kTol);
  return o;
}

Outcome1 bias_decay() {
  const std::vector<Index> ns{1000, 2000, 4000};
  constexpr Index d = 16, k = 2, reps = 30;
  std::vector<double> medians;
  for (std::size_t c = 0; c < ns.size(); ++c) {
    std::vector<double> sup;
    for (Index rep = 0; rep < reps; ++rep) {
      const auto r = std::uint64_t(rep);
      const CMatrix theta = gen_low_rank_theta(d, k, derive_seed(kSeed, {5 + 10 * c, r, 0}));
      const DesignBatch design = gen_gaussian_design(ns[c], d, derive_seed(kSeed, {5 + 10 * c, r, 1}));
      const Observations y =
          simulate_observations(design, theta, 1.0, derive_seed(kSeed, {5 + 10 * c, r, 2}));
      const IhtResult fit = run_iht(design, y, IhtConfig{});
      const DeltaZ dz = delta_z_decomposition(fit.estimate, theta, design, y);
      sup.push_back(dz.delta.cwiseAbs().maxCoeff());
    }
    medians.push_back(median(sup));
  }
  Outcome1 o;
  o.pass = medians[0] > medians[1] && medians[1] > medians[2];
  o.detail = fmt("median ||delta||_inf %.4g > %.4g > %.4g", medians[0], medians[1], medians[2]);
  return o;
}

Outcome1 coverage() {
  constexpr double kMin = 0.85;
  ExperimentConfig config = parse_config(
      R"({"grid": {"d": [64], "k": [3], "n": [4000]}, "replicates": 50,
          "ci": {"level": 0.95, "convention": "paper_literal"}})",
      ExperimentMode::matrix_sim);
  config.seed = kSeed;
  const ExperimentOutput out = run_matrix_experiment(config);
  const double cov = mean(metric_column(out, 0, "coverage"));
  Outcome1 o;
  o.pass = cov >= kMin;
  o.detail = fmt("mean entrywise coverage=%.4f over 50 replicates (>= %.2f)", cov, kMin);
  return o;
}

// Oracle side of criterion 7: Pauli matrices and Kronecker products written out
// by hand, outcome probabilities as traces of explicit projectors.
CMatrix oracle_pauli(int s) {
  CMatrix p(2, 2);
  const Complex i(0.0, 1.0);
  if (s == 0) p << 1.0, 0.0, 0.0, 1.0;
  if (s == 1) p << 0.0, 1.0, 1.0, 0.0;
  if (s == 2) p << 0.0, -i, i, 0.0;
  if (s == 3) p << 1.0, 0.0, 0.0, -1.0;
  return p;
}

CMatrix oracle_kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  }
  return out;
}

Outcome1 quantum_enumeration() {
  constexpr double kTol = 1e-10;
  std::mt19937 gen(7);
  double sum_err = 0.0, parity_err = 0.0, marg_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const CMatrix theta = random_density(4, 1 + trial % 4, gen);
    for (int s1 = 1; s1 <= 3; ++s1) {
      for (int s2 = 1; s2 <= 3; ++s2) {
        const PauliSetting setting{{s1, s2}};
        const RVector p = outcome_distribution(setting, theta).probabilities;
        sum_err = std::max(sum_err, std::abs(p.sum() - 1.0));

        // Table index: bit 1 is qubit 1 (leftmost), set means outcome -1.
        auto outcome_of = [](Index idx, int qubit) { return (idx >> (1 - qubit)) & 1 ? -1 : 1; };
        double expected_parity = 0.0;
        for (Index idx = 0; idx < 4; ++idx) expected_parity += outcome_of(idx, 0) * outcome_of(idx, 1) * p(idx);
        const double pauli_mean = (oracle_kron(oracle_pauli(s1), oracle_pauli(s2)) * theta).trace().real();
        parity_err = std::max(parity_err, std::abs(expected_parity - pauli_mean));

        // Every subset E: the marginal law of the kept qubits equals tr of the
        // projector with identity on E, and the kept-qubit parity mean equals
        // the Pauli expectation with identity on E.
        for (std::uint32_t mask = 0; mask < 4; ++mask) {
          const int ss[2] = {(mask & 1u) ? 0 : s1, (mask & 2u) ? 0 : s2};
          double parity_mean = 0.0;
          for (Index idx = 0; idx < 4; ++idx) {
            int prod = 1;
            for (int q = 0; q < 2; ++q) {
              if (ss[q] != 0) prod *= outcome_of(idx, q);
            }
            parity_mean += prod * p(idx);
            const MarginalizedMeasurement mm = marginalize(setting, outcome_from_index(idx, 2), mask);
            const Outcome& kept = mm.outcome;
            CMatrix proj_factors[2];
            for (int q = 0; q < 2; ++q) {
              proj_factors[q] = ss[q] == 0 ? oracle_pauli(0)
                                           : CMatrix((oracle_pauli(0) + double(kept[q]) * oracle_pauli(ss[q])) / 2.0);
              if (mm.setting.qubits[q] != ss[q]) marg_err = std::max(marg_err, 1.0);
            }
            double marginal = 0.0;
            for (Index other = 0; other < 4; ++other) {
              bool agrees = true;
              for (int q = 0; q < 2; ++q) {
                if (ss[q] != 0 && outcome_of(other, q) != kept[q]) agrees = false;
              }
              if (agrees) marginal += p(other);
            }
            const double oracle = (oracle_kron(proj_factors[0], proj_factors[1]) * theta).trace().real();
            marg_err = std::max(marg_err, std::abs(marginal - oracle));
          }
          const double oracle_mean =
              (oracle_kron(oracle_pauli(ss[0]), oracle_pauli(ss[1])) * theta).trace().real();
          marg_err = std::max(marg_err, std::abs(parity_mean - oracle_mean));
        }
      }
    }
  }
  Outcome1 o;
  o.pass = sum_err <= kTol && parity_err <= kTol && marg_err <= kTol;
  o.detail = fmt("max |sum p - 1|=%.2g, max parity error=%.2g, max marginalization error=%.2g (<= %.0e)",
                 sum_err, parity_err, marg_err, kTol);
  return o;
}

Outcome1 quantum_alpha() {
  ExperimentConfig config = parse_config(
      R"({"grid": {"m": [4], "k": [1], "alpha": [2, 5], "t_factor": [10]}, "replicates": 20})",
      ExperimentMode::quantum);
  config.seed = kSeed;
  const ExperimentOutput out = run_quantum_experiment(config);
  double frob[2] = {0.0, 0.0};
  bool sane = true;
  for (const auto& agg : out.aggregates) {
    const int slot = param(agg.params, "alpha") == 2.0 ? 0 : 1;
    frob[slot] = mean(metric_column(out, agg.cell, "frobenius_sq"));
  }
  for (const auto& row : out.rows) {
    for (const auto& [name, value] : row.metrics) {
      if (name == "frobenius_sq" || name == "operator" || name == "entrywise_inf" || name == "schatten1") {
        if (!std::isfinite(value) || value < 0.0) sane = false;
      }
    }
  }
  Outcome1 o;
  o.pass = out.aggregates.size() == 2 && frob[1] < frob[0] && sane;
  o.detail = fmt("mean frobenius_sq alpha=5: %.4g < alpha=2: %.4g, four error metrics finite and >= 0: %s",
                 frob[1], frob[0], sane ? "yes" : "no");
  return o;
}

Outcome1 rip_scaling() {
  const std::vector<double> ns{1000, 4000, 16000};
  std::vector<double> devs;
  for (std::size_t c = 0; c < ns.size(); ++c) {
    const DesignBatch design = gen_gaussian_design(Index(ns[c]), 16, derive_seed(kSeed, {9, c, 1}));
    devs.push_back(estimate_rip_constant(design, 1, 200, derive_seed(kSeed, {9, c, 5})).max_deviation);
  }
  const double slope = loglog_slope(ns, devs);
  Outcome1 o;
  o.pass = slope >= -0.65 && slope <= -0.35;
  o.detail = fmt("max deviation %.4g, %.4g, %.4g; log-log slope=%.3f in [-0.65,-0.35]", devs[0], devs[1],
                 devs[2], slope);
  return o;
}

double brute_force_r_k(const RMatrix& m, Index k) {
  const Index p = m.cols();
  double best = 0.0;
  for (std::uint32_t support = 0; support < (1u << p); ++support) {
    if (__builtin_popcount(support) != k) continue;
    for (std::uint32_t signs = 0; signs < (1u << p); ++signs) {
      if (signs & ~support) continue;
      RVector u = RVector::Zero(p);
      for (Index j = 0; j < p; ++j) {
        if (support & (1u << j)) u(j) = (signs & (1u << j)) ? -1.0 : 1.0;
      }
      best = std::max(best, (m * u).cwiseAbs().maxCoeff());
    }
  }
  return best;
}

Outcome1 sparse_suite() {
  // (a) r_k against enumeration, relative tolerance for summation order only.
  constexpr double kRkTol = 1e-12;
  std::mt19937 gen(11);
  double rk_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const RMatrix x = random_real(12, 6, gen);
    const RMatrix gram = x.transpose() * x / 12.0;
    const RMatrix v = RMatrix::Identity(6, 6) + 0.3 * random_real(6, 6, gen);
    const RMatrix m = v * gram - RMatrix::Identity(6, 6);
    for (Index k = 1; k <= 3; ++k) {
      const double oracle = brute_force_r_k(m, k);
      rk_err = std::max(rk_err, std::abs(estimate_r_k(v, gram, k) - oracle) / oracle);
    }
  }

  // (b) noiseless orthogonal design, identity decorrelator.
  double exact_err = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    SparseInstance inst = gen_sparse_instance(100, 30, 5, 0.0, derive_seed(kSeed, {10, s, 0}));
    inst.x = orthogonal_design(100, 30, derive_seed(kSeed, {10, s, 1}));
    inst.y = inst.x * *inst.theta;
    const Decorrelator v = build_decorrelator(inst.x, IdentityStrategy{}, {10});
    SparseConfig config;
    config.max_sparsity = 10;
    config.upsilon = 0.0;
    config.start = 2.0 * inst.theta->cwiseAbs().maxCoeff();
    const SparseResult fit = sparse_iht_run(inst, v, config);
    exact_err = std::max(exact_err, (fit.theta_hat - *inst.theta).cwiseAbs().maxCoeff());
  }

  // (c) desparsification decomposition with a generic decorrelator.
  double id_err = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const SparseInstance inst = gen_sparse_instance(150, 30, 3, 0.8, derive_seed(kSeed, {10, s, 2}));
    const RVector pilot = *inst.theta + 0.1 * random_real(30, 1, gen);
    const RMatrix v = RMatrix::Identity(30, 30) + 0.01 * random_real(30, 30, gen);
    const SparseDeltaZ dz = sparse_delta_z(pilot, inst, v);
    const RVector lhs = std::sqrt(150.0) * (desparsify(pilot, inst, v) - *inst.theta);
    id_err = std::max(id_err, (lhs - dz.delta - dz.z).cwiseAbs().maxCoeff());
  }

  // (d) coverage of the coordinate intervals.
  ExperimentConfig config = parse_config(
      R"({"grid": {"p": [200], "k": [5], "n": [600]}, "replicates": 50,
          "sparse_estimator": {"strategy": "row_program", "mu": 0.01, "max_sparsity": 10}})",
      ExperimentMode::sparse);
  config.seed = kSeed;
  const ExperimentOutput out = run_sparse_experiment(config);
  const double cov = mean(metric_column(out, 0, "coverage"));
  const double included = mean(metric_column(out, 0, "support_included"));

  Outcome1 o;
  o.pass = rk_err <= kRkTol && exact_err <= 1e-12 && id_err <= 1e-10 && cov >= 0.85;
  o.detail = fmt("r_k rel err=%.2g (<= 1e-12), exact recovery err=%.2g (<= 1e-12), identity err=%.2g "
                 "(<= 1e-10), coverage=%.4f (>= 0.85), support inclusion=%.2f",
                 rk_err, exact_err, id_err, cov, included);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome1()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "noiseless exact-isometry recovery", 5, exact_recovery},
      {2, "operator-norm error rate", 600, estimation_rate},
      {3, "stopping iteration bound", 1, stopping_bound},
      {4, "debiasing decomposition identity", 30, debias_identity},
      {5, "bias term decay", 300, bias_decay},
      {6, "entrywise interval coverage", 900, coverage},
      {7, "two-qubit outcome enumeration", 10, quantum_enumeration},
      {8, "tomography error across alpha", 600, quantum_alpha},
      {9, "isometry deviation scaling", 300, rip_scaling},
      {10, "sparse regression suite", 300, sparse_suite},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome1 o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = o.pass && secs <= c.budget_s;
    if (!pass) ++failures;
    std::printf("%s [%d] %s: %s; %.2f s (budget %.0f s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs, c.budget_s);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
