#pragma once

#include "deeponet/util/fourier.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace deeponet::solvers {

using Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using fourier::Complex;
using fourier::CVector;

/// Space-time samples on a uniform periodic grid: values(n, i) = s(x_i, t_n).
struct SolutionField {
  Vector x;
  Vector t;
  Matrix values;
  double x_max = 2.0 * std::numbers::pi;

  Index space_points() const { return x.size(); }
  Index time_points() const { return t.size(); }

  /// Spectral interpolation in x of the row recorded at time index n.
  Vector row_at(Index n, const Vector& points) const {
    return fourier::evaluate(Vector(values.row(n).transpose()), x_max, points);
  }
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Time grid: Nt steps of T / Nt, recording every `stride` steps.
struct TimeGrid {
  double t_max = 1.0;
  int steps = 2000;
  int stride = 20;

  void validate() const {
    if (steps < 1 || stride < 1 || steps % stride != 0) {
      throw std::invalid_argument("TimeGrid: steps must be a positive multiple of the record stride");
    }
    if (!(t_max > 0.0)) throw std::invalid_argument("TimeGrid: T must be positive");
  }
  int records() const { return steps / stride + 1; }
  Vector times() const {
    Vector t(records());
    for (int n = 0; n < records(); ++n) t(n) = t_max * static_cast<double>(n * stride) / static_cast<double>(steps);
    return t;
  }
};

namespace detail {

inline SolutionField make_field(const Vector& u0, double x_max, const TimeGrid& grid) {
  SolutionField f;
  f.x = fourier::uniform_grid(u0.size(), x_max);
  f.t = grid.times();
  f.values.resize(grid.records(), u0.size());
  f.x_max = x_max;
  return f;
}

inline void check_grid(const Vector& u0) {
  if (u0.size() < 4) throw std::invalid_argument("solver: grid needs at least 4 points");
  if (!u0.allFinite()) throw std::invalid_argument("solver: initial condition is not finite");
}

}  // namespace detail

/// s_t + a s_x = nu s_xx, integrated exactly per Fourier mode.
inline SolutionField solve_advdiff(const Vector& u0, double advection, double viscosity, double x_max,
                                   const TimeGrid& grid) {
  detail::check_grid(u0);
  grid.validate();
  SolutionField f = detail::make_field(u0, x_max, grid);
  fourier::Transform tr;
  const CVector uh = tr.forward(u0);
  const Index m = u0.size();
  Vector k(m);
  for (Index j = 0; j < m; ++j) k(j) = 2.0 * std::numbers::pi / x_max * static_cast<double>(fourier::signed_mode(j, m));
  for (Index n = 0; n < f.t.size(); ++n) {
    CVector vh(m);
    for (Index j = 0; j < m; ++j) {
      // The unpaired Nyquist mode of an even grid is a real cos(K x) term; on
      // the nodes its translate is cos(K a t) times itself.
      if (m % 2 == 0 && j == m / 2) {
        vh(j) = uh(j).real() * std::exp(-viscosity * k(j) * k(j) * f.t(n)) * std::cos(advection * k(j) * f.t(n));
      } else {
        vh(j) = uh(j) * std::exp(Complex(-viscosity * k(j) * k(j), -advection * k(j)) * f.t(n));
      }
    }
    f.values.row(n) = tr.inverse_real(vh).transpose();
  }
  return f;
}

/// Integrating-factor RK4 for u_t + (u^2 / 2)_x = L u with L diagonal in
/// Fourier space. Quadratic products are dealiased with the 2/3 rule and the
/// state is kept inside the dealiased band.
class IfRk4 {
 public:
  IfRk4(Index m, double x_max, CVector linear, const char* name)
      : m_(m), k_(fourier::wavenumbers(m, x_max)), linear_(std::move(linear)), name_(name), mask_(m) {
    for (Index j = 0; j < m; ++j) mask_(j) = 3 * std::abs(fourier::signed_mode(j, m)) < m ? 1.0 : 0.0;
    if (m % 2 == 0) mask_(m / 2) = 0.0;
  }

  SolutionField solve(const Vector& u0, double x_max, const TimeGrid& grid) {
    detail::check_grid(u0);
    grid.validate();
    SolutionField f = detail::make_field(u0, x_max, grid);
    const double dt = grid.t_max / grid.steps;
    CVector e(m_), e2(m_);
    for (Index j = 0; j < m_; ++j) {
      e(j) = std::exp(linear_(j) * (dt / 2));
      e2(j) = e(j) * e(j);
    }
    CVector v = tr_.forward(u0).cwiseProduct(mask_.cast<Complex>());
    f.values.row(0) = tr_.inverse_real(v).transpose();
    int rec = 1;
    for (int step = 1; step <= grid.steps; ++step) {
      const CVector a = dt * nonlinear(v);
      const CVector b = dt * nonlinear(e.cwiseProduct(v + a / 2.0));
      const CVector c = dt * nonlinear(e.cwiseProduct(v) + b / 2.0);
      const CVector d = dt * nonlinear(e2.cwiseProduct(v) + e.cwiseProduct(c));
      v = e2.cwiseProduct(v) + (e2.cwiseProduct(a) + 2.0 * e.cwiseProduct(b + c) + d) / 6.0;
      if (step % grid.stride == 0) {
        const Vector u = tr_.inverse_real(v);
        if (!u.allFinite()) {
          std::ostringstream os;
          os << name_ << ": solution became non-finite at step " << step << " (t = " << step * dt << ")";
          throw SolverError(os.str());
        }
        f.values.row(rec++) = u.transpose();
      }
    }
    return f;
  }

 private:
  // Fourier coefficients of -(u^2 / 2)_x.
  CVector nonlinear(const CVector& v) {
    const Vector u = tr_.inverse_real(v);
    const CVector w = tr_.forward(Vector(u.array().square()));
    CVector out(m_);
    for (Index j = 0; j < m_; ++j) out(j) = Complex(0.0, -0.5 * k_(j)) * w(j) * mask_(j);
    return out;
  }

  Index m_;
  Vector k_;
  CVector linear_;
  const char* name_;
  Vector mask_;
  fourier::Transform tr_;
};

/// s_t + s s_x = nu s_xx.
inline SolutionField solve_burgers(const Vector& u0, double viscosity, double x_max, const TimeGrid& grid) {
  if (!(viscosity > 0.0)) throw std::invalid_argument("solve_burgers: viscosity must be positive");
  const Vector k = fourier::wavenumbers(u0.size(), x_max);
  CVector l(u0.size());
  for (Index j = 0; j < u0.size(); ++j) l(j) = -viscosity * k(j) * k(j);
  return IfRk4(u0.size(), x_max, l, "solve_burgers").solve(u0, x_max, grid);
}

/// s_t + s s_x + delta^2 s_xxx = 0; the dispersive term is integrated exactly.
inline SolutionField solve_kdv(const Vector& u0, double dispersion, double x_max, const TimeGrid& grid) {
  const Vector k = fourier::wavenumbers(u0.size(), x_max);
  CVector l(u0.size());
  const double d2 = dispersion * dispersion;
  for (Index j = 0; j < u0.size(); ++j) l(j) = Complex(0.0, d2 * k(j) * k(j) * k(j));
  return IfRk4(u0.size(), x_max, l, "solve_kdv").solve(u0, x_max, grid);
}

/// Periodic trapezoid rule: L / M times the node sum.
inline double periodic_integral(const Vector& u, double x_max) { return x_max * u.mean(); }

}  // namespace deeponet::solvers
