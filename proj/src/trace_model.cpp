#include "traceiht/trace_model.hpp"

#include "traceiht/random.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace traceiht {

static_assert(std::endian::native == std::endian::little,
              "binary container assumes a little-endian host");

namespace {

RVector vec_real(const CMatrix& a) {
  RMatrix re = a.real();
  return Eigen::Map<const RVector>(re.data(), re.size());
}

RVector vec_imag(const CMatrix& a) {
  RMatrix im = a.imag();
  return Eigen::Map<const RVector>(im.data(), im.size());
}

void check_operand(const DesignBatch& design, const CMatrix& a, const char* op) {
  if (a.rows() != design.dim() || a.cols() != design.dim()) {
    throw std::invalid_argument(std::string(op) + ": matrix is " +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                ", design dimension is " + std::to_string(design.dim()));
  }
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("read_container: truncated input");
  return value;
}

}  // namespace

DesignBatch::DesignBatch(Index dim, RMatrix real_part, RMatrix imag_part)
    : dim_(dim), real_(std::move(real_part)), imag_(std::move(imag_part)) {
  if (dim_ < 1) throw std::invalid_argument("DesignBatch: dimension must be >= 1");
  if (real_.rows() < 1) throw std::invalid_argument("DesignBatch: need at least one matrix");
  if (real_.cols() != dim_ * dim_) {
    throw std::invalid_argument("DesignBatch: rows must hold d*d entries");
  }
  if (imag_.size() != 0 && (imag_.rows() != real_.rows() || imag_.cols() != real_.cols())) {
    throw std::invalid_argument("DesignBatch: real/imaginary shape mismatch");
  }
  require_finite(real_, "DesignBatch real part");
  require_finite(imag_, "DesignBatch imaginary part");
}

DesignBatch DesignBatch::from_matrices(const std::vector<CMatrix>& matrices) {
  if (matrices.empty()) throw std::invalid_argument("DesignBatch: need at least one matrix");
  const Index d = matrices.front().rows();
  const Index n = static_cast<Index>(matrices.size());
  RMatrix re(n, d * d);
  RMatrix im(n, d * d);
  bool any_imag = false;
  for (Index i = 0; i < n; ++i) {
    const CMatrix& x = matrices[static_cast<std::size_t>(i)];
    if (x.rows() != d || x.cols() != d) {
      throw std::invalid_argument("DesignBatch: all matrices must be d x d");
    }
    re.row(i) = vec_real(x).transpose();
    im.row(i) = vec_imag(x).transpose();
    any_imag = any_imag || (im.row(i).array() != 0.0).any();
  }
  return any_imag ? DesignBatch(d, std::move(re), std::move(im)) : DesignBatch(d, std::move(re));
}

CMatrix DesignBatch::matrix(Index i) const {
  CMatrix x(dim_, dim_);
  for (Index c = 0; c < dim_; ++c) {
    for (Index r = 0; r < dim_; ++r) x(r, c) = entry(i, r, c);
  }
  return x;
}

Complex DesignBatch::entry(Index i, Index row, Index col) const {
  const Index k = row + col * dim_;
  return {real_(i, k), is_real() ? 0.0 : imag_(i, k)};
}

RVector apply_design(const DesignBatch& design, const CMatrix& a) {
  check_operand(design, a, "apply_design");
  RVector out = design.real_part() * vec_real(a);
  if (!design.is_real()) out.noalias() += design.imag_part() * vec_imag(a);
  if (design.hermitian() && a.isApprox(a.adjoint(), 1e-12)) {
    const double residue = imaginary_residue(design, a);
    if (residue > 1e-9) {
      std::clog << "warning: apply_design: imaginary trace residue " << residue
                << " on a Hermitian design\n";
    }
  }
  return out;
}

double imaginary_residue(const DesignBatch& design, const CMatrix& a) {
  check_operand(design, a, "imaginary_residue");
  // Im(conj(x) a) = x_re a_im - x_im a_re
  RVector im = design.real_part() * vec_imag(a);
  if (!design.is_real()) im.noalias() -= design.imag_part() * vec_real(a);
  return im.size() == 0 ? 0.0 : im.cwiseAbs().maxCoeff();
}

CMatrix adjoint_apply(const DesignBatch& design, const RVector& v) {
  if (v.size() != design.size()) {
    throw std::invalid_argument("adjoint_apply: weight vector length " +
                                std::to_string(v.size()) + " != sample count " +
                                std::to_string(design.size()));
  }
  const double scale = 1.0 / static_cast<double>(design.size());
  const Index d = design.dim();
  const RVector re = scale * (design.real_part().transpose() * v);
  CMatrix out(d, d);
  out.real() = Eigen::Map<const RMatrix>(re.data(), d, d);
  if (design.is_real()) {
    out.imag().setZero();
  } else {
    const RVector im = scale * (design.imag_part().transpose() * v);
    out.imag() = Eigen::Map<const RMatrix>(im.data(), d, d);
  }
  return out;
}

DesignBatch gen_gaussian_design(Index n, Index d, std::uint64_t seed) {
  if (n < 1 || d < 1) throw std::invalid_argument("gen_gaussian_design: n, d must be >= 1");
  RandomStream rng(seed);
  RMatrix re(n, d * d);
  for (Index i = 0; i < n; ++i) {
    for (Index r = 0; r < d; ++r) {
      for (Index c = 0; c < d; ++c) re(i, r + c * d) = rng.normal();
    }
  }
  return DesignBatch(d, std::move(re));
}

DesignBatch orthonormal_basis_design(Index d) {
  if (d < 1) throw std::invalid_argument("orthonormal_basis_design: d must be >= 1");
  RMatrix re = RMatrix::Zero(d * d, d * d);
  // Sample j*d + l selects entry (j, l), i.e. column-major index j + l*d.
  for (Index j = 0; j < d; ++j) {
    for (Index l = 0; l < d; ++l) re(j * d + l, j + l * d) = static_cast<double>(d);
  }
  return DesignBatch(d, std::move(re));
}

CMatrix gen_low_rank_theta(Index d, Index k, std::uint64_t seed) {
  if (k < 1 || k > d) throw std::invalid_argument("gen_low_rank_theta: need 1 <= k <= d");
  RandomStream rng(seed);
  RMatrix factors(d, k);
  for (Index l = 0; l < k; ++l) {
    for (Index r = 0; r < d; ++r) factors(r, l) = rng.normal();
  }
  const RMatrix theta = factors * factors.transpose();
  return theta.cast<Complex>();
}

Observations simulate_observations(const DesignBatch& design, const CMatrix& theta,
                                   double noise_std, std::uint64_t seed) {
  if (!(noise_std >= 0.0)) {
    throw std::invalid_argument("simulate_observations: noise_std must be >= 0");
  }
  require_finite(theta, "simulate_observations theta");
  RandomStream rng(seed);
  RVector noise(design.size());
  for (Index i = 0; i < noise.size(); ++i) noise(i) = noise_std * rng.normal();
  Observations obs;
  obs.values = apply_design(design, theta) + noise;
  obs.noise_std = noise_std;
  obs.noise = std::move(noise);
  return obs;
}

CMatrix random_rank_probe(Index d, Index k, std::uint64_t seed) {
  RandomStream rng(seed);
  RMatrix g(d, k);
  RMatrix h(d, k);
  for (Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  for (Index i = 0; i < h.size(); ++i) h.data()[i] = rng.normal();
  RMatrix a = g * h.transpose();
  a /= a.norm();
  return a.cast<Complex>();
}

CMatrix random_hermitian_probe(Index d, Index k, std::uint64_t seed) {
  RandomStream rng(seed);
  CMatrix u(d, k);
  for (Index i = 0; i < u.size(); ++i) u.data()[i] = Complex(rng.normal(), rng.normal());
  RVector signs(k);
  for (Index i = 0; i < k; ++i) signs(i) = rng.uniform() < 0.5 ? -1.0 : 1.0;
  CMatrix a = u * signs.cast<Complex>().asDiagonal() * u.adjoint();
  a = 0.5 * (a + a.adjoint());
  a /= a.norm();
  return a;
}

double isometry_deviation(const DesignBatch& design, const CMatrix& a) {
  const RVector y = apply_design(design, a);
  return std::abs(y.squaredNorm() / static_cast<double>(design.size()) - a.squaredNorm());
}

RipEstimate estimate_rip_constant(const DesignBatch& design, Index k, Index trials,
                                  std::uint64_t seed) {
  if (k < 1 || k > design.dim()) {
    throw std::invalid_argument("estimate_rip_constant: need 1 <= k <= d");
  }
  if (trials < 1) throw std::invalid_argument("estimate_rip_constant: trials must be >= 1");
  RandomStream root(seed);
  RipEstimate out;
  out.k = k;
  out.trials = trials;
  out.deviations.reserve(static_cast<std::size_t>(trials));
  for (Index t = 0; t < trials; ++t) {
    const std::uint64_t probe_seed = root.child_seed(static_cast<std::uint64_t>(t));
    const CMatrix probe = design.hermitian() ? random_hermitian_probe(design.dim(), k, probe_seed)
                                             : random_rank_probe(design.dim(), k, probe_seed);
    out.deviations.push_back(isometry_deviation(design, probe));
    out.max_deviation = std::max(out.max_deviation, out.deviations.back());
  }
  return out;
}

void write_container(std::ostream& out, const DesignBatch& design,
                     const Observations* observations) {
  out.write("TRCM", 4);
  write_pod<std::uint32_t>(out, kContainerVersion);
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(design.size()));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(design.dim()));
  const Index d = design.dim();
  for (Index i = 0; i < design.size(); ++i) {
    for (Index r = 0; r < d; ++r) {
      for (Index c = 0; c < d; ++c) {
        const Complex z = design.entry(i, r, c);
        write_pod<double>(out, z.real());
        write_pod<double>(out, z.imag());
      }
    }
  }
  const std::uint64_t count = observations ? static_cast<std::uint64_t>(design.size()) : 0;
  if (observations && observations->values.size() != design.size()) {
    throw std::invalid_argument("write_container: observation count mismatch");
  }
  write_pod<std::uint64_t>(out, count);
  for (std::uint64_t i = 0; i < count; ++i) {
    write_pod<double>(out, observations->values(static_cast<Index>(i)));
  }
  if (!out) throw std::runtime_error("write_container: write failed");
}

void write_container(const std::string& path, const DesignBatch& design,
                     const Observations* observations) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_container: cannot open " + path);
  write_container(out, design, observations);
}

TraceContainer read_container(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "TRCM", 4) != 0) {
    throw std::runtime_error("read_container: bad magic");
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kContainerVersion) {
    throw std::runtime_error("read_container: unsupported version " + std::to_string(version));
  }
  const auto n = static_cast<Index>(read_pod<std::uint64_t>(in));
  const auto d = static_cast<Index>(read_pod<std::uint64_t>(in));
  RMatrix re(n, d * d);
  RMatrix im(n, d * d);
  bool any_imag = false;
  for (Index i = 0; i < n; ++i) {
    for (Index r = 0; r < d; ++r) {
      for (Index c = 0; c < d; ++c) {
        re(i, r + c * d) = read_pod<double>(in);
        im(i, r + c * d) = read_pod<double>(in);
        any_imag = any_imag || im(i, r + c * d) != 0.0;
      }
    }
  }
  TraceContainer out{any_imag ? DesignBatch(d, std::move(re), std::move(im))
                              : DesignBatch(d, std::move(re)),
                     std::nullopt};
  const auto count = static_cast<Index>(read_pod<std::uint64_t>(in));
  if (count != 0) {
    if (count != n) throw std::runtime_error("read_container: observation count mismatch");
    Observations obs;
    obs.values.resize(n);
    for (Index i = 0; i < n; ++i) obs.values(i) = read_pod<double>(in);
    require_finite(obs.values, "read_container observations");
    out.observations = std::move(obs);
  }
  return out;
}

TraceContainer read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_container: cannot open " + path);
  return read_container(in);
}

void write_design_csv(std::ostream& out, const DesignBatch& design) {
  out << "sample,row,col,re,im\n";
  out.precision(17);
  for (Index i = 0; i < design.size(); ++i) {
    for (Index r = 0; r < design.dim(); ++r) {
      for (Index c = 0; c < design.dim(); ++c) {
        const Complex z = design.entry(i, r, c);
        out << i << ',' << r << ',' << c << ',' << z.real() << ',' << z.imag() << '\n';
      }
    }
  }
}

void write_observations_csv(std::ostream& out, const Observations& obs) {
  out << "sample,y\n";
  out.precision(17);
  for (Index i = 0; i < obs.values.size(); ++i) out << i << ',' << obs.values(i) << '\n';
}

}  // namespace traceiht
