#pragma once

#include "deeponet/util/fourier.hpp"
#include "deeponet/util/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace deeponet::sampling {

using Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Family { warped_se, spectral_burgers, kdv_trig };

inline std::string family_name(Family f) {
  switch (f) {
    case Family::warped_se: return "warped_se";
    case Family::spectral_burgers: return "spectral_burgers";
    case Family::kdv_trig: return "kdv_trig";
  }
  return "?";
}

inline Family family_from_name(const std::string& s) {
  if (s == "warped_se") return Family::warped_se;
  if (s == "spectral_burgers") return Family::spectral_burgers;
  if (s == "kdv_trig") return Family::kdv_trig;
  throw std::invalid_argument("unknown input family '" + s + "'");
}

/// Input-function family on the periodic domain (0, x_max), observed at m
/// uniform sensors x_i = x_max i / m.
struct GrfSpec {
  Family family = Family::warped_se;
  double length_scale = 0.5;
  // Spectral family: N(0, amplitude^2 (-Laplacian + shift I)^power).
  double amplitude = 25.0;
  double shift = 25.0;
  double power = -4.0;
  double x_max = 2.0 * std::numbers::pi;
  Index sensors = 128;

  static GrfSpec warped_se(double l, Index m, double x_max = 2.0 * std::numbers::pi) {
    GrfSpec s;
    s.family = Family::warped_se;
    s.length_scale = l;
    s.sensors = m;
    s.x_max = x_max;
    return s;
  }
  static GrfSpec spectral_burgers(Index m, double x_max = 1.0) {
    GrfSpec s;
    s.family = Family::spectral_burgers;
    s.sensors = m;
    s.x_max = x_max;
    return s;
  }
  static GrfSpec kdv_trig(Index m, double x_max = 2.0 * std::numbers::pi) {
    GrfSpec s;
    s.family = Family::kdv_trig;
    s.sensors = m;
    s.x_max = x_max;
    return s;
  }

  void validate() const {
    if (sensors < 1) throw std::invalid_argument("GrfSpec: sensor count must be >= 1");
    if (!(x_max > 0.0)) throw std::invalid_argument("GrfSpec: domain length must be positive");
    if (family == Family::warped_se && !(length_scale > 0.0)) {
      throw std::invalid_argument("GrfSpec: length scale must be positive");
    }
    if (family == Family::spectral_burgers && (!(amplitude > 0.0) || !(shift > 0.0) || !(power < 0.0))) {
      throw std::invalid_argument("GrfSpec: spectral family needs amplitude > 0, shift > 0, power < 0");
    }
  }

  Vector sensor_grid() const { return fourier::uniform_grid(sensors, x_max); }

  bool operator==(const GrfSpec&) const = default;
};

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- warped SE

inline double warp(double x, double x_max) {
  const double s = std::sin(std::numbers::pi * x / x_max);
  return s * s;
}

/// exp(-(z_i - z_j)^2 / (2 l^2)) with z = sin^2(pi x / x_max), which is
/// sin^2(x / 2) on (0, 2 pi).
inline double warped_se_kernel(double x1, double x2, double l, double x_max = 2.0 * std::numbers::pi) {
  const double d = warp(x1, x_max) - warp(x2, x_max);
  return std::exp(-d * d / (2.0 * l * l));
}

struct JitteredCholesky {
  Matrix lower;
  double jitter = 0.0;
};

/// Cholesky factor of K + jitter I, starting at 1e-12 and growing tenfold up to 1e-6.
inline JitteredCholesky cholesky_with_jitter(const Matrix& k) {
  const Index n = k.rows();
  for (double jitter = 1e-12; jitter <= 1e-6 * (1 + 1e-9); jitter *= 10.0) {
    Eigen::LLT<Matrix> llt(k + jitter * Matrix::Identity(n, n));
    if (llt.info() == Eigen::Success) return {llt.matrixL(), jitter};
  }
  throw SamplingError("covariance factorization failed even with diagonal jitter 1e-6");
}

namespace detail {

// Points sharing a warped coordinate share one Gaussian variable, so samples
// are exactly equal there (u(0) = u(L) in particular).
struct WarpedPoints {
  std::vector<double> z;          // distinct warped coordinates
  std::vector<std::size_t> which; // point -> index into z
};

inline WarpedPoints distinct_warps(const Vector& points, double x_max) {
  WarpedPoints w;
  for (Index i = 0; i < points.size(); ++i) {
    // Reflect into the first half period so mirror points hash identically.
    double x = std::fmod(points(i), x_max);
    if (x < 0) x += x_max;
    if (x > 0.5 * x_max) x = x_max - x;
    const double z = warp(x, x_max);
    std::size_t found = w.z.size();
    for (std::size_t j = 0; j < w.z.size(); ++j) {
      if (std::abs(w.z[j] - z) <= 1e-15) {
        found = j;
        break;
      }
    }
    if (found == w.z.size()) w.z.push_back(z);
    w.which.push_back(found);
  }
  return w;
}

}  // namespace detail

/// `count` independent warped-SE draws at arbitrary points (columns). Draw j
/// depends only on (seed, j) and the point set.
inline Matrix sample_warped_se(const GrfSpec& spec, std::uint64_t seed, Index count, const Vector& points) {
  spec.validate();
  const detail::WarpedPoints w = detail::distinct_warps(points, spec.x_max);
  const Index n = static_cast<Index>(w.z.size());
  Matrix k(n, n);
  const double l2 = 2.0 * spec.length_scale * spec.length_scale;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double d = w.z[static_cast<std::size_t>(i)] - w.z[static_cast<std::size_t>(j)];
      k(i, j) = std::exp(-d * d / l2);
    }
  }
  const Matrix lower = cholesky_with_jitter(k).lower;
  Matrix out(points.size(), count);
  Vector xi(n);
  for (Index c = 0; c < count; ++c) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    for (Index i = 0; i < n; ++i) xi(i) = rng.normal();
    const Vector f = lower * xi;
    for (Index p = 0; p < points.size(); ++p) out(p, c) = f(static_cast<Index>(w.which[static_cast<std::size_t>(p)]));
  }
  return out;
}

// ---------------------------------------------------------- spectral Burgers

/// Highest Fourier mode kept: the largest |k| with a conjugate partner on m sensors.
inline Index spectral_cutoff(Index m) { return (m - 1) / 2; }

/// Standard deviation of mode k: amplitude ((2 pi k / L)^2 + shift)^(power / 2).
inline double spectral_std(const GrfSpec& spec, Index k) {
  const double w = 2.0 * std::numbers::pi * static_cast<double>(k) / spec.x_max;
  return spec.amplitude * std::pow(w * w + spec.shift, 0.5 * spec.power);
}

/// Complex coefficients c_k, k = -K..K (index k + K), with c_{-k} = conj(c_k).
inline std::vector<std::complex<double>> spectral_burgers_modes(const GrfSpec& spec, std::uint64_t seed, Index function) {
  const Index kmax = spectral_cutoff(spec.sensors);
  std::vector<std::complex<double>> c(static_cast<std::size_t>(2 * kmax + 1));
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(function)));
  c[static_cast<std::size_t>(kmax)] = spectral_std(spec, 0) * rng.normal();
  const double half = std::sqrt(0.5);
  for (Index k = 1; k <= kmax; ++k) {
    const double re = half * rng.normal(), im = half * rng.normal();
    const std::complex<double> v = spectral_std(spec, k) * std::complex<double>(re, im);
    c[static_cast<std::size_t>(kmax + k)] = v;
    c[static_cast<std::size_t>(kmax - k)] = std::conj(v);
  }
  return c;
}

/// Full complex sum of the modes at the points; its imaginary part vanishes
/// up to rounding.
inline Eigen::VectorXcd evaluate_modes(const std::vector<std::complex<double>>& c, double x_max, const Vector& points) {
  const Index kmax = (static_cast<Index>(c.size()) - 1) / 2;
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(points.size());
  for (Index p = 0; p < points.size(); ++p) {
    for (Index k = -kmax; k <= kmax; ++k) {
      out(p) += c[static_cast<std::size_t>(k + kmax)] *
                std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(k) * points(p) / x_max);
    }
  }
  return out;
}

inline Matrix sample_spectral_burgers(const GrfSpec& spec, std::uint64_t seed, Index count, const Vector& points) {
  spec.validate();
  Matrix out(points.size(), count);
  for (Index c = 0; c < count; ++c) out.col(c) = evaluate_modes(spectral_burgers_modes(spec, seed, c), spec.x_max, points).real();
  return out;
}

// ------------------------------------------------------------------ KdV trig

struct TrigCoefficients {
  double a = 0.0, b = 0.0, c = 0.0;
};

/// a, b ~ U[0, 1), c ~ U[-1, 1), drawn in that order.
inline TrigCoefficients kdv_coefficients(std::uint64_t seed, Index function) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(function)));
  TrigCoefficients t;
  t.a = rng.uniform();
  t.b = rng.uniform();
  t.c = rng.uniform(-1.0, 1.0);
  return t;
}

/// c (-a sin(2 pi x / L) + b cos(2 pi x / L)), i.e. c (-a sin x + b cos x) on (0, 2 pi).
inline Vector kdv_trig(const TrigCoefficients& t, double x_max, const Vector& points) {
  const double w = 2.0 * std::numbers::pi / x_max;
  Vector u(points.size());
  for (Index i = 0; i < points.size(); ++i) u(i) = t.c * (-t.a * std::sin(w * points(i)) + t.b * std::cos(w * points(i)));
  return u;
}

inline Matrix sample_kdv(const GrfSpec& spec, std::uint64_t seed, Index count, const Vector& points) {
  spec.validate();
  Matrix out(points.size(), count);
  for (Index c = 0; c < count; ++c) out.col(c) = kdv_trig(kdv_coefficients(seed, c), spec.x_max, points);
  return out;
}

// ------------------------------------------------------------------ dispatch

/// `count` draws of the family at arbitrary points, one function per column.
inline Matrix sample_functions(const GrfSpec& spec, std::uint64_t seed, Index count, const Vector& points) {
  switch (spec.family) {
    case Family::warped_se: return sample_warped_se(spec, seed, count, points);
    case Family::spectral_burgers: return sample_spectral_burgers(spec, seed, count, points);
    case Family::kdv_trig: return sample_kdv(spec, seed, count, points);
  }
  throw std::logic_error("sample_functions: unknown family");
}

/// Draws at the sensor grid: an m x count matrix.
inline Matrix sample_sensors(const GrfSpec& spec, std::uint64_t seed, Index count) {
  return sample_functions(spec, seed, count, spec.sensor_grid());
}

/// Single draw at the sensors.
inline Vector sample_one(const GrfSpec& spec, std::uint64_t seed) { return sample_sensors(spec, seed, 1).col(0); }

/// Draws on a fine periodic grid of `fine` points with the sensors read off
/// it. The warped-SE family is sampled jointly on the fine grid when the
/// sensors are a subset of it, otherwise at the sensors and interpolated.
struct SampledInputs {
  Matrix sensors;  // m x count
  Matrix fine;     // fine x count
};

inline SampledInputs sample_inputs(const GrfSpec& spec, std::uint64_t seed, Index count, Index fine) {
  spec.validate();
  SampledInputs s;
  const Vector grid = fourier::uniform_grid(fine, spec.x_max);
  if (spec.family != Family::warped_se || fine % spec.sensors == 0) {
    s.fine = sample_functions(spec, seed, count, grid);
    if (fine % spec.sensors == 0) {
      const Index stride = fine / spec.sensors;
      s.sensors.resize(spec.sensors, count);
      for (Index i = 0; i < spec.sensors; ++i) s.sensors.row(i) = s.fine.row(i * stride);
    } else {
      s.sensors = sample_sensors(spec, seed, count);
    }
    return s;
  }
  s.sensors = sample_sensors(spec, seed, count);
  s.fine.resize(fine, count);
  for (Index c = 0; c < count; ++c) s.fine.col(c) = fourier::resample(s.sensors.col(c), fine);
  return s;
}

}  // namespace deeponet::sampling
