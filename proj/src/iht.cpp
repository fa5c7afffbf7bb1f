#include "traceiht/iht.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace traceiht {

namespace {

double standard_normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double current_upsilon(const IhtConfig& config, double sigma, Index d, Index n) {
  if (const auto* fixed = std::get_if<FixedUpsilon>(&config.upsilon)) return fixed->value;
  return upsilon_r(sigma, d, n, std::get<DataDrivenUpsilon>(config.upsilon).quantile);
}

void check_shapes(const DesignBatch& design, const Observations& y, const char* op) {
  if (y.values.size() != design.size()) {
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(y.values.size()) +
                                " observations for " + std::to_string(design.size()) +
                                " design matrices");
  }
}

}  // namespace

void IhtConfig::validate() const {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("IhtConfig: rho must lie in (0,1)");
  if (!(e >= 0.0)) throw std::invalid_argument("IhtConfig: e must be >= 0");
  if (max_iters && *max_iters < 1) throw std::invalid_argument("IhtConfig: max_iters must be >= 1");
  if (const auto* fixed = std::get_if<FixedUpsilon>(&upsilon)) {
    if (!(fixed->value >= 0.0) || !std::isfinite(fixed->value)) {
      throw std::invalid_argument("IhtConfig: upsilon must be finite and >= 0");
    }
  } else {
    const double q = std::get<DataDrivenUpsilon>(upsilon).quantile;
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("IhtConfig: quantile must lie in (0,1)");
  }
  if (const auto* fixed = std::get_if<FixedStart>(&start)) {
    if (!(fixed->value >= 0.0) || !std::isfinite(fixed->value)) {
      throw std::invalid_argument("IhtConfig: start threshold must be finite and >= 0");
    }
  }
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("IhtConfig: delta must lie in (0,1)");
}

Index IhtConfig::iteration_cap(Index n) const {
  if (max_iters) return *max_iters;
  return std::max<Index>(1, static_cast<Index>(std::ceil(10.0 * std::log(static_cast<double>(n)))));
}

double empirical_sigma(const DesignBatch& design, const Observations& y, const CMatrix& estimate) {
  check_shapes(design, y, "empirical_sigma");
  const RVector residual = y.values - apply_design(design, estimate);
  return residual.norm() / std::sqrt(static_cast<double>(design.size()));
}

double upsilon_r(double sigma, Index d, Index n, double quantile) {
  if (!(quantile > 0.0 && quantile < 1.0)) {
    throw std::invalid_argument("upsilon_r: quantile must lie in (0,1)");
  }
  if (!(sigma >= 0.0)) throw std::invalid_argument("upsilon_r: sigma must be >= 0");
  return sigma * std::sqrt(static_cast<double>(d) / static_cast<double>(n)) *
         standard_normal_quantile(quantile);
}

double threshold_step(double previous, double rho, double upsilon) {
  return rho * previous + upsilon;
}

double threshold_closed_form(double start, double rho, double upsilon, Index r) {
  return (std::pow(rho, static_cast<double>(r)) * ((1.0 - rho) * start - upsilon) + upsilon) /
         (1.0 - rho);
}

double initial_threshold(const DesignBatch& design, const Observations& y, const IhtConfig& config) {
  check_shapes(design, y, "initial_threshold");
  if (const auto* fixed = std::get_if<FixedStart>(&config.start)) return fixed->value;
  const double sigma = y.values.norm() / std::sqrt(static_cast<double>(design.size()));
  return sigma + current_upsilon(config, sigma, design.dim(), design.size());
}

IhtState initial_state(const DesignBatch& design, const Observations& y, const IhtConfig& config) {
  config.validate();
  IhtState state;
  state.estimate = CMatrix::Zero(design.dim(), design.dim());
  state.start_threshold = initial_threshold(design, y, config);
  state.threshold = state.start_threshold;
  state.residual = y.values;
  return state;
}

IhtState iht_step(const IhtState& state, const DesignBatch& design, const Observations& y,
                  const IhtConfig& config) {
  check_shapes(design, y, "iht_step");
  if (state.residual.size() != design.size()) {
    throw std::invalid_argument("iht_step: state residual does not match the design");
  }
  const Index n = design.size();
  IhtState next;
  next.start_threshold = state.start_threshold;
  next.iter = state.iter + 1;
  next.trace = state.trace;

  const double sigma = state.residual.norm() / std::sqrt(static_cast<double>(n));
  const double upsilon = current_upsilon(config, sigma, design.dim(), n);
  if (std::holds_alternative<FixedUpsilon>(config.upsilon)) {
    next.threshold = threshold_step(state.threshold, config.rho, upsilon);
  } else {
    next.threshold = std::min(
        state.threshold,
        threshold_closed_form(state.start_threshold, config.rho, upsilon, next.iter));
  }

  const CMatrix backprojected = state.estimate + adjoint_apply(design, state.residual);
  const SvdFactors factors = svd(backprojected);
  next.estimate = hard_threshold_singular(factors, next.threshold);
  next.residual = y.values - apply_design(design, next.estimate);

  next.trace.push_back(IterationRecord{next.iter, next.threshold, upsilon, sigma,
                                       factors.count_at_least(next.threshold),
                                       next.residual.norm()});
  return next;
}

bool stopping_check(double threshold, double upsilon, double rho, double e) {
  return threshold <= (1.0 + e) * upsilon / (1.0 - rho);
}

double stopping_iteration_bound(double rho, double start, double upsilon) {
  if (upsilon <= 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 + std::log(10.0 * (1.0 - rho) * start / upsilon) / std::log(1.0 / rho);
}

IhtResult run_iht(const DesignBatch& design, const Observations& y, const IhtConfig& config) {
  IhtState state = initial_state(design, y, config);
  const Index cap = config.iteration_cap(design.size());
  const bool fixed_upsilon = std::holds_alternative<FixedUpsilon>(config.upsilon);

  IhtResult result;
  result.bound_applicable = true;
  while (state.iter < cap) {
    state = iht_step(state, design, y, config);
    const IterationRecord& last = state.trace.back();
    if (!fixed_upsilon && state.trace.size() > 1 &&
        last.upsilon > state.trace[state.trace.size() - 2].upsilon) {
      result.bound_applicable = false;
    }
    if (stopping_check(last.threshold, last.upsilon, config.rho, config.e)) {
      result.converged = true;
      break;
    }
  }
  const double final_upsilon = state.trace.empty() ? 0.0 : state.trace.back().upsilon;
  result.iteration_bound = stopping_iteration_bound(config.rho, state.start_threshold, final_upsilon);
  result.estimate = state.estimate;
  result.state = std::move(state);
  return result;
}

void write_trace_csv(std::ostream& out, const IhtState& state) {
  out << "iter,T_r,sigma_r,rank,residual_l2\n";
  const auto precision = out.precision(17);
  for (const auto& rec : state.trace) {
    out << rec.iter << ',' << rec.threshold << ',' << rec.sigma << ',' << rec.rank << ','
        << rec.residual_l2 << '\n';
  }
  out.precision(precision);
}

ValidityDiagnostic validity_diagnostic(const IhtConfig& config, const RipEstimate& rip_at_2k,
                                       Index max_rank) {
  ValidityDiagnostic out;
  out.required_rho = 4.0 * std::sqrt(static_cast<double>(max_rank)) * rip_at_2k.max_deviation;
  out.satisfied = config.rho >= out.required_rho;
  return out;
}

}  // namespace traceiht
