#include "traceiht/sparse_iht.hpp"

#include "traceiht/random.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace traceiht {

namespace {

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

enum class RowStatus { converged, diverged, exhausted };

struct RowSolution {
  RVector v;
  RowStatus status;
};

// Cyclic coordinate descent on 1/2 v^T S v - v_j + mu ||v||_1. Converged when
// v satisfies ||S v - e_j||_inf <= mu + tol and the gap
// v^T S v - v_j + mu ||v||_1 between this objective and the dual value
// -1/2 v^T S v is below tol (relative to max(1, |v_j|)).
RowSolution solve_row(const RMatrix& gram, Index j, double mu, double tol, Index max_sweeps) {
  const Index p = gram.rows();
  RVector v = RVector::Zero(p);
  RVector sv = RVector::Zero(p);  // S v
  if (gram(j, j) > 0.0) {
    v(j) = soft_threshold(1.0, mu) / gram(j, j);
    sv = gram.col(j) * v(j);
  }
  for (Index sweep = 0; sweep < max_sweeps; ++sweep) {
    for (Index i = 0; i < p; ++i) {
      const double sii = gram(i, i);
      if (sii <= 0.0) continue;
      const double target = (i == j ? 1.0 : 0.0) - sv(i) + sii * v(i);
      const double updated = soft_threshold(target, mu) / sii;
      const double change = updated - v(i);
      if (change != 0.0) {
        v(i) = updated;
        sv.noalias() += gram.col(i) * change;
      }
    }
    if (!v.allFinite() || v.cwiseAbs().maxCoeff() > 1e10) return {v, RowStatus::diverged};

    RVector violation = sv;
    violation(j) -= 1.0;
    const double infeasibility = violation.cwiseAbs().maxCoeff() - mu;
    const double gap = v.dot(sv) - v(j) + mu * v.lpNorm<1>();
    if (infeasibility <= tol && std::abs(gap) <= tol * std::max(1.0, std::abs(v(j)))) {
      return {v, RowStatus::converged};
    }
  }
  return {v, RowStatus::exhausted};
}

double smallest_feasible_mu(const RMatrix& gram, Index j, double infeasible_mu, double tol,
                            Index max_sweeps) {
  // mu = 1 is always feasible (v = 0 gives ||S v - e_j||_inf = 1).
  double lo = infeasible_mu;
  double hi = 1.0;
  for (int step = 0; step < 30 && hi - lo > 1e-4 * hi; ++step) {
    const double mid = 0.5 * (lo + hi);
    if (solve_row(gram, j, mid, tol, max_sweeps).status == RowStatus::converged) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace

RMatrix SparseInstance::gram() const {
  return x.transpose() * x / static_cast<double>(x.rows());
}

void SparseInstance::validate() const {
  if (x.rows() < 1 || x.cols() < 1) throw std::invalid_argument("SparseInstance: empty design");
  if (y.size() != x.rows()) throw std::invalid_argument("SparseInstance: response length mismatch");
  if (theta && theta->size() != x.cols()) throw std::invalid_argument("SparseInstance: theta length mismatch");
  if (noise && noise->size() != x.rows()) throw std::invalid_argument("SparseInstance: noise length mismatch");
  require_finite(x, "SparseInstance design");
  require_finite(y, "SparseInstance response");
}

SparseInstance gen_sparse_instance(Index n, Index p, Index k, double noise_std,
                                   std::uint64_t seed) {
  if (n < 1 || p < 1 || k < 0 || k > p) {
    throw std::invalid_argument("gen_sparse_instance: need n, p >= 1 and 0 <= k <= p");
  }
  RandomStream root(seed);
  RandomStream design_rng = root.split(0);
  RandomStream support_rng = root.split(1);
  RandomStream noise_rng = root.split(2);

  SparseInstance out;
  out.x.resize(n, p);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) out.x(i, j) = design_rng.normal();
  }
  // Partial Fisher-Yates for the support.
  std::vector<Index> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), Index{0});
  RVector theta = RVector::Zero(p);
  for (Index s = 0; s < k; ++s) {
    const auto span = static_cast<std::uint64_t>(p - s);
    const Index pick = s + static_cast<Index>(support_rng() % span);
    std::swap(order[static_cast<std::size_t>(s)], order[static_cast<std::size_t>(pick)]);
    const double sign = support_rng.uniform() < 0.5 ? -1.0 : 1.0;
    theta(order[static_cast<std::size_t>(s)]) = sign * (1.0 + support_rng.uniform());
  }
  RVector noise(n);
  for (Index i = 0; i < n; ++i) noise(i) = noise_std * noise_rng.normal();
  out.y = out.x * theta + noise;
  out.theta = std::move(theta);
  out.noise = std::move(noise);
  return out;
}

RMatrix orthogonal_design(Index n, Index p, std::uint64_t seed) {
  if (n < p) throw std::invalid_argument("orthogonal_design: need n >= p");
  RandomStream rng(seed);
  RMatrix g(n, p);
  for (Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  Eigen::HouseholderQR<RMatrix> qr(g);
  const RMatrix q = qr.householderQ() * RMatrix::Identity(n, p);
  return q * std::sqrt(static_cast<double>(n));
}

InfeasibleProgram::InfeasibleProgram(Index row_, double mu_, double smallest)
    : std::runtime_error([&] {
        std::ostringstream msg;
        msg << "row program infeasible for row " << row_ << " at mu=" << mu_
            << "; smallest feasible mu found: " << smallest;
        return msg.str();
      }()),
      row(row_),
      mu(mu_),
      smallest_feasible_mu(smallest) {}

double Decorrelator::r(Index k) const {
  const auto it = certified_r.find(k);
  if (it == certified_r.end()) {
    throw std::out_of_range("Decorrelator: r_k not certified for k=" + std::to_string(k));
  }
  return it->second;
}

double estimate_r_k(const RMatrix& v, const RMatrix& gram, Index k) {
  if (k < 1 || k > gram.cols()) throw std::invalid_argument("estimate_r_k: need 1 <= k <= p");
  const RMatrix m = v * gram - RMatrix::Identity(v.rows(), gram.cols());
  double best = 0.0;
  std::vector<double> row(static_cast<std::size_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = std::abs(m(i, j));
    std::partial_sort(row.begin(), row.begin() + k, row.end(), std::greater<>());
    best = std::max(best, std::accumulate(row.begin(), row.begin() + k, 0.0));
  }
  return best;
}

Decorrelator build_decorrelator(const RMatrix& x, const DecorrelatorStrategy& strategy,
                                const std::vector<Index>& ks) {
  const Index n = x.rows();
  const Index p = x.cols();
  if (n < 2 || p < 1) throw std::invalid_argument("build_decorrelator: need n >= 2, p >= 1");
  const RMatrix gram = x.transpose() * x / static_cast<double>(n);

  Decorrelator out;
  if (std::holds_alternative<IdentityStrategy>(strategy)) {
    out.v = RMatrix::Identity(p, p);
    out.construction = "identity";
  } else {
    const auto& program = std::get<RowProgramStrategy>(strategy);
    const double mu = program.mu.value_or(std::sqrt(std::log(static_cast<double>(p)) /
                                                    static_cast<double>(n)));
    if (!(mu > 0.0)) throw std::invalid_argument("build_decorrelator: mu must be positive");
    const Index max_sweeps = 10 * p * p;
    out.v.resize(p, p);
    for (Index j = 0; j < p; ++j) {
      RowSolution sol = solve_row(gram, j, mu, program.tolerance, max_sweeps);
      if (sol.status != RowStatus::converged) {
        throw InfeasibleProgram(j, mu,
                                smallest_feasible_mu(gram, j, mu, program.tolerance,
                                                     std::min<Index>(max_sweeps, 2000)));
      }
      out.v.row(j) = sol.v.transpose();
    }
    out.mu = mu;
    std::ostringstream name;
    name << "row_program(mu=" << mu << ")";
    out.construction = name.str();
  }
  for (Index k : ks) out.certified_r[k] = estimate_r_k(out.v, gram, k);
  return out;
}

SparseResult sparse_iht_run(const SparseInstance& instance, const Decorrelator& decorrelator,
                            const SparseConfig& config) {
  instance.validate();
  const Index n = instance.samples();
  const Index p = instance.features();
  if (decorrelator.v.rows() != p || decorrelator.v.cols() != p) {
    throw std::invalid_argument("sparse_iht_run: decorrelator shape mismatch");
  }
  if (config.max_sparsity < 1 || config.max_sparsity > p) {
    throw std::invalid_argument("sparse_iht_run: need 1 <= K <= p");
  }
  if (!(config.start >= 0.0)) throw std::invalid_argument("sparse_iht_run: B must be >= 0");
  if (!(config.delta > 0.0 && config.delta < 1.0)) {
    throw std::invalid_argument("sparse_iht_run: delta must lie in (0,1)");
  }

  const RMatrix gram = instance.gram();
  const RMatrix& v = decorrelator.v;
  SparseResult result;
  const auto cert = decorrelator.certified_r.find(config.max_sparsity);
  result.r_k = cert != decorrelator.certified_r.end()
                   ? cert->second
                   : estimate_r_k(v, gram, config.max_sparsity);
  const double contraction = 2.0 * result.r_k;
  if (contraction >= 1.0) {
    std::ostringstream msg;
    msg << "sparse_iht_run: 2 r_K = " << contraction << " >= 1 at K=" << config.max_sparsity
        << " with V=" << decorrelator.construction;
    throw AssumptionViolation(msg.str());
  }

  result.max_variance = (v * gram * v.transpose()).diagonal().maxCoeff();
  result.upsilon = config.upsilon.value_or(
      2.0 * std::sqrt(result.max_variance *
                      std::log(static_cast<double>(p) / config.delta) / static_cast<double>(n)));
  result.iterations =
      contraction == 0.0
          ? 1
          : std::max<Index>(1, static_cast<Index>(std::ceil(std::log(static_cast<double>(n)) /
                                                            std::log(1.0 / contraction))));

  const RMatrix vxt = v * instance.x.transpose() / static_cast<double>(n);
  RVector theta = RVector::Zero(p);
  double threshold = config.start;
  for (Index r = 1; r <= result.iterations; ++r) {
    threshold = contraction * threshold + result.upsilon;
    const RVector step = vxt * (instance.y - instance.x * theta);
    theta += hard_threshold_entries(step, threshold);
    SparseIterationRecord rec{r, threshold, (theta.array() != 0.0).count(), -1.0};
    if (instance.theta) rec.error_inf = (*instance.theta - theta).cwiseAbs().maxCoeff();
    result.trace.push_back(rec);
  }
  result.theta_hat = std::move(theta);
  return result;
}

RVector desparsify(const RVector& theta_r, const SparseInstance& instance, const RMatrix& v) {
  instance.validate();
  if (theta_r.size() != instance.features() || v.rows() != instance.features() ||
      v.cols() != instance.features()) {
    throw std::invalid_argument("desparsify: shape mismatch");
  }
  const double n = static_cast<double>(instance.samples());
  return theta_r + v * (instance.x.transpose() * (instance.y - instance.x * theta_r)) / n;
}

SparseDeltaZ sparse_delta_z(const RVector& theta_r, const SparseInstance& instance,
                            const RMatrix& v) {
  if (!instance.theta || !instance.noise) {
    throw UnsupportedInstance("sparse_delta_z: instance carries no truth or realized noise");
  }
  const double n = static_cast<double>(instance.samples());
  const Index p = instance.features();
  const RMatrix defect = RMatrix::Identity(p, p) - v * instance.gram();
  return {std::sqrt(n) * (defect * (theta_r - *instance.theta)),
          v * (instance.x.transpose() * *instance.noise) / std::sqrt(n)};
}

SparseIntervals sparse_confidence_intervals(const RVector& theta_hat,
                                            const SparseInstance& instance, const RMatrix& v,
                                            double sigma_hat, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("sparse_confidence_intervals: level must lie in (0,1)");
  }
  if (!(sigma_hat >= 0.0)) throw std::invalid_argument("sparse_confidence_intervals: sigma_hat < 0");
  if (theta_hat.size() != instance.features()) {
    throw std::invalid_argument("sparse_confidence_intervals: shape mismatch");
  }
  const double z = boost::math::quantile(boost::math::normal_distribution<double>(),
                                         0.5 * (1.0 + level));
  const double n = static_cast<double>(instance.samples());
  const RVector variances = (v * instance.gram() * v.transpose()).diagonal();
  SparseIntervals out;
  out.estimate = theta_hat;
  out.half_widths = sigma_hat * z * (variances.array() / n).sqrt().matrix();
  out.lower = theta_hat - out.half_widths;
  out.upper = theta_hat + out.half_widths;
  return out;
}

double sparse_sigma(const SparseInstance& instance, const RVector& theta) {
  return (instance.y - instance.x * theta).norm() / std::sqrt(static_cast<double>(instance.samples()));
}

void write_coordinate_csv(std::ostream& out, const SparseIntervals& intervals,
                          const RVector& theta_r) {
  out << "j,theta_hat,ci_lower,ci_upper,in_support\n";
  const auto precision = out.precision(17);
  for (Index j = 0; j < intervals.estimate.size(); ++j) {
    out << j << ',' << intervals.estimate(j) << ',' << intervals.lower(j) << ','
        << intervals.upper(j) << ',' << (theta_r(j) != 0.0 ? 1 : 0) << '\n';
  }
  out.precision(precision);
}

}  // namespace traceiht
