#include "traceiht/inference.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace traceiht {

namespace {

void check_index(const DesignBatch& design, Index m, Index m_prime, const char* op) {
  if (m < 0 || m >= design.dim() || m_prime < 0 || m_prime >= design.dim()) {
    throw std::invalid_argument(std::string(op) + ": index (" + std::to_string(m) + "," +
                                std::to_string(m_prime) + ") out of range");
  }
}

void check_square(const DesignBatch& design, const CMatrix& a, const char* op) {
  if (a.rows() != design.dim() || a.cols() != design.dim()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

bool inside(double value, double center, double half_width) {
  return value >= center - half_width && value <= center + half_width;
}

}  // namespace

CMatrix debias(const CMatrix& estimate, const DesignBatch& design, const Observations& y) {
  check_square(design, estimate, "debias");
  if (y.values.size() != design.size()) throw std::invalid_argument("debias: observation count mismatch");
  return estimate + adjoint_apply(design, y.values - apply_design(design, estimate));
}

DeltaZ delta_z_decomposition(const CMatrix& estimate, const CMatrix& theta,
                             const DesignBatch& design, const RVector& noise) {
  check_square(design, estimate, "delta_z_decomposition");
  check_square(design, theta, "delta_z_decomposition");
  if (noise.size() != design.size()) {
    throw std::invalid_argument("delta_z_decomposition: noise length mismatch");
  }
  const double n = static_cast<double>(design.size());
  const double root_n = std::sqrt(n);
  const CMatrix error = estimate - theta;
  // adjoint_apply carries 1/n, so (1/sqrt n) sum X^i w_i = sqrt(n) * adjoint_apply(w).
  DeltaZ out;
  out.delta = root_n * error - root_n * adjoint_apply(design, apply_design(design, error));
  out.z = root_n * adjoint_apply(design, noise);
  return out;
}

DeltaZ delta_z_decomposition(const CMatrix& estimate, const CMatrix& theta,
                             const DesignBatch& design, const Observations& y) {
  if (!y.noise) {
    throw UnsupportedInstance("delta_z_decomposition: observations carry no realized noise");
  }
  return delta_z_decomposition(estimate, theta, design, *y.noise);
}

double entry_scale(const DesignBatch& design, Index m, Index m_prime) {
  check_index(design, m, m_prime, "entry_scale");
  const Index k = m + m_prime * design.dim();
  double second_moment = design.real_part().col(k).squaredNorm();
  if (!design.is_real()) second_moment += design.imag_part().col(k).squaredNorm();
  return std::sqrt(second_moment / static_cast<double>(design.size()));
}

RMatrix entry_scales(const DesignBatch& design) {
  const Index d = design.dim();
  RMatrix out(d, d);
  for (Index c = 0; c < d; ++c) {
    for (Index r = 0; r < d; ++r) out(r, c) = entry_scale(design, r, c);
  }
  return out;
}

double z_covariance_entry(const DesignBatch& design, Index j, Index j_prime, Index l,
                          Index l_prime) {
  check_index(design, j, j_prime, "z_covariance_entry");
  check_index(design, l, l_prime, "z_covariance_entry");
  const Index a = j + j_prime * design.dim();
  const Index b = l + l_prime * design.dim();
  double sum = design.real_part().col(a).dot(design.real_part().col(b));
  if (!design.is_real()) sum += design.imag_part().col(a).dot(design.imag_part().col(b));
  return sum / static_cast<double>(design.size());
}

double ci_quantile(const CiOptions& options) {
  if (!(options.level > 0.0 && options.level < 1.0)) {
    throw std::invalid_argument("confidence level must lie in (0,1)");
  }
  const double p = options.convention == QuantileConvention::paper_literal
                       ? options.level
                       : 0.5 * (1.0 + options.level);
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

InferenceReport confidence_intervals(const CMatrix& debiased, const DesignBatch& design,
                                     double sigma_hat, const CiOptions& options) {
  check_square(design, debiased, "confidence_intervals");
  if (!(sigma_hat >= 0.0)) throw std::invalid_argument("confidence_intervals: sigma_hat must be >= 0");
  InferenceReport report;
  report.quantile = ci_quantile(options);
  report.debiased = debiased;
  report.sigma_hat = sigma_hat;
  report.entry_scales = entry_scales(design);
  report.half_widths = report.entry_scales *
                       (sigma_hat * report.quantile / std::sqrt(static_cast<double>(design.size())));
  report.ci_lower = debiased.real() - report.half_widths;
  report.ci_upper = debiased.real() + report.half_widths;
  report.mean_ci_length = 2.0 * report.half_widths.mean();
  return report;
}

double coverage_report(const CMatrix& theta, const InferenceReport& report) {
  if (theta.rows() != report.debiased.rows() || theta.cols() != report.debiased.cols()) {
    throw std::invalid_argument("coverage_report: shape mismatch");
  }
  const bool complex_case = (report.debiased.imag().array() != 0.0).any() ||
                            (theta.imag().array() != 0.0).any();
  Index covered = 0;
  for (Index c = 0; c < theta.cols(); ++c) {
    for (Index r = 0; r < theta.rows(); ++r) {
      const double hw = report.half_widths(r, c);
      bool ok = theta(r, c).real() >= report.ci_lower(r, c) &&
                theta(r, c).real() <= report.ci_upper(r, c);
      if (complex_case) ok = ok && inside(theta(r, c).imag(), report.debiased(r, c).imag(), hw);
      covered += ok ? 1 : 0;
    }
  }
  return static_cast<double>(covered) / static_cast<double>(theta.size());
}

void write_inference_csv(std::ostream& out, const InferenceReport& report, const CMatrix* theta) {
  out << "m,m_prime,estimate_re,estimate_im,ci_lower,ci_upper";
  if (theta) out << ",covered";
  out << '\n';
  const auto precision = out.precision(17);
  for (Index r = 0; r < report.debiased.rows(); ++r) {
    for (Index c = 0; c < report.debiased.cols(); ++c) {
      out << r << ',' << c << ',' << report.debiased(r, c).real() << ','
          << report.debiased(r, c).imag() << ',' << report.ci_lower(r, c) << ','
          << report.ci_upper(r, c);
      if (theta) {
        const double v = (*theta)(r, c).real();
        out << ',' << (v >= report.ci_lower(r, c) && v <= report.ci_upper(r, c) ? 1 : 0);
      }
      out << '\n';
    }
  }
  out.precision(precision);
}

}  // namespace traceiht
