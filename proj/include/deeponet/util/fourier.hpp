#pragma once

// Periodic-grid Fourier helpers on (0, L) with nodes x_i = L i / M.

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace deeponet::fourier {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;

inline Eigen::VectorXd uniform_grid(Eigen::Index m, double length) {
  Eigen::VectorXd x(m);
  for (Eigen::Index i = 0; i < m; ++i) x(i) = length * static_cast<double>(i) / static_cast<double>(m);
  return x;
}

/// Signed integer mode of FFT slot j for an M-point transform.
inline Eigen::Index signed_mode(Eigen::Index j, Eigen::Index m) { return j <= (m - 1) / 2 ? j : j - m; }

/// Angular wavenumbers 2 pi k / L in FFT order; the unpaired Nyquist slot of an
/// even grid is zeroed so odd derivatives stay real.
inline Eigen::VectorXd wavenumbers(Eigen::Index m, double length) {
  Eigen::VectorXd k(m);
  for (Eigen::Index j = 0; j < m; ++j) k(j) = 2.0 * std::numbers::pi / length * static_cast<double>(signed_mode(j, m));
  if (m % 2 == 0) k(m / 2) = 0.0;
  return k;
}

class Transform {
 public:
  CVector forward(const Eigen::VectorXd& u) {
    std::vector<double> in(u.data(), u.data() + u.size());
    std::vector<Complex> out;
    fft_.fwd(out, in);
    return Eigen::Map<CVector>(out.data(), static_cast<Eigen::Index>(out.size()));
  }
  CVector forward(const CVector& u) {
    std::vector<Complex> in(u.data(), u.data() + u.size()), out;
    fft_.fwd(out, in);
    return Eigen::Map<CVector>(out.data(), static_cast<Eigen::Index>(out.size()));
  }
  /// Real part of the inverse transform.
  Eigen::VectorXd inverse_real(const CVector& uh) {
    std::vector<Complex> in(uh.data(), uh.data() + uh.size()), out;
    fft_.inv(out, in);
    Eigen::VectorXd r(uh.size());
    for (Eigen::Index i = 0; i < uh.size(); ++i) r(i) = out[static_cast<std::size_t>(i)].real();
    return r;
  }

 private:
  Eigen::FFT<double> fft_;
};

/// Trigonometric interpolant of equispaced samples, resampled on an M_out grid
/// over the same period. An even-length Nyquist coefficient is split evenly.
inline Eigen::VectorXd resample(const Eigen::VectorXd& u, Eigen::Index m_out) {
  const Eigen::Index m = u.size();
  if (m_out < 1) throw std::invalid_argument("resample: target size must be positive");
  Transform t;
  const CVector uh = t.forward(u);
  CVector vh = CVector::Zero(m_out);
  const double scale = static_cast<double>(m_out) / static_cast<double>(m);
  // Modes beyond the target Nyquist are dropped; +-m_out/2 share one slot.
  auto place = [&](Eigen::Index k, Complex c) {
    if (2 * std::abs(k) > m_out) return;
    vh((k % m_out + m_out) % m_out) += c;
  };
  for (Eigen::Index j = 0; j < m; ++j) {
    const Complex c = scale * uh(j);
    if (m % 2 == 0 && j == m / 2) {
      place(m / 2, 0.5 * c);
      place(-m / 2, 0.5 * c);
    } else {
      place(signed_mode(j, m), c);
    }
  }
  return t.inverse_real(vh);
}

/// Evaluates the trigonometric interpolant of equispaced samples (period L)
/// at arbitrary points.
inline Eigen::VectorXd evaluate(const Eigen::VectorXd& u, double length, const Eigen::VectorXd& points) {
  const Eigen::Index m = u.size();
  Transform t;
  const CVector uh = t.forward(u) / static_cast<double>(m);
  Eigen::VectorXd out(points.size());
  const double w = 2.0 * std::numbers::pi / length;
  for (Eigen::Index p = 0; p < points.size(); ++p) {
    double s = uh(0).real();
    for (Eigen::Index j = 1; j < m; ++j) {
      const Eigen::Index k = signed_mode(j, m);
      if (k < 0) continue;
      const Complex e = std::polar(1.0, w * static_cast<double>(k) * points(p));
      s += 2.0 * (uh(j) * e).real();
    }
    if (m % 2 == 0) s += (uh(m / 2) * std::cos(w * static_cast<double>(m / 2) * points(p))).real();
    out(p) = s;
  }
  return out;
}

}  // namespace deeponet::fourier
