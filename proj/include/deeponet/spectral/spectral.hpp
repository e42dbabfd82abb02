#pragma once

#include "deeponet/basis/basis.hpp"
#include "deeponet/pde/pde.hpp"
#include "deeponet/solvers/solvers.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <string>

namespace deeponet::spectral {

using Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class SpectralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// strong: da/dt = -Phi^T W N[Phi a] on the whole span.
/// periodic: same projection, restricted to coefficients whose expansion is
/// periodic in value and in x-derivatives below the PDE order. Extracted trunk
/// functions are only nearly periodic and the strong form then has growing
/// modes; on the constrained subspace the periodic energy estimate holds.
/// Identical for an exactly periodic basis.
enum class Closure { strong, periodic };

inline std::string closure_name(Closure c) { return c == Closure::strong ? "strong" : "periodic"; }

inline Closure closure_from_name(const std::string& s) {
  if (s == "strong") return Closure::strong;
  if (s == "periodic") return Closure::periodic;
  throw std::invalid_argument("unknown closure '" + s + "' (expected strong or periodic)");
}

/// Node matrices of the retained phi~_k and the derivatives the PDE needs,
/// with the projection P = Z Z^T Phi^T W (Z = I for the strong closure).
struct GalerkinSystem {
  pde::PdeSpec spec;
  Closure closure = Closure::strong;
  Index constraints = 0;  // rank of the boundary constraint actually imposed
  Matrix phi;   // M x p'
  Matrix d1;    // first x-derivative at the nodes
  Matrix d2;    // second; empty unless needed
  Matrix d3;    // third; KdV only
  Matrix proj;  // p' x M

  Index size() const { return phi.cols(); }
};

/// Orthonormal basis of {a : sum_k a_k (phi~_k^(d)(hi) - phi~_k^(d)(lo)) = 0, d < order}.
/// Each constraint row is scaled by the size of the end values, and rows that
/// already vanish to `tol` impose nothing.
inline Matrix periodic_subspace(const basis::BasisSet& b, int order, Index* rank = nullptr, double tol = 1e-6) {
  const Index p = b.retained;
  Vector ends(2);
  ends << b.quad.lo, b.quad.hi;
  Matrix c(order, p);
  for (int d = 0; d < order; ++d) {
    const Matrix e = b.evaluate(ends, d);
    const double scale = std::max({e.row(0).norm(), e.row(1).norm(), 1e-300});
    c.row(d) = (e.row(1) - e.row(0)) / scale;
  }
  Eigen::JacobiSVD<Matrix> svd(c, Eigen::ComputeFullV);
  Index r = 0;
  for (Index i = 0; i < svd.singularValues().size(); ++i) r += svd.singularValues()(i) > tol ? 1 : 0;
  if (rank) *rank = r;
  return svd.matrixV().rightCols(p - r);
}

inline GalerkinSystem build_system(const basis::BasisSet& b, const pde::PdeSpec& spec, Closure closure = Closure::periodic) {
  spec.validate();
  if (!b.projected()) throw SpectralError("spectral: basis has no Legendre form; run legendre_project first");
  if (b.retained == 0) throw SpectralError("spectral: basis retains no functions");
  GalerkinSystem s;
  s.spec = spec;
  s.closure = closure;
  const auto& x = b.quad.nodes;
  const auto tab = basis::legendre_table(x, b.degree(), b.quad.lo, b.quad.hi, spec.spatial_order());
  const Matrix c = b.legendre.topRows(b.retained).transpose();
  s.phi = tab[0] * c;
  s.d1 = tab[1] * c;
  if (spec.spatial_order() >= 2) s.d2 = tab[2] * c;
  if (spec.spatial_order() >= 3) s.d3 = tab[3] * c;
  s.proj = s.phi.transpose() * b.quad.weights.asDiagonal();
  if (closure == Closure::periodic) {
    const Matrix z = periodic_subspace(b, spec.spatial_order(), &s.constraints);
    if (s.constraints > 0) s.proj = z * (z.transpose() * s.proj);
  }
  return s;
}

/// a_k(0) = sum_j phi~_k(x_j) u(x_j) w_j, then onto the constrained subspace.
inline Vector init_coeffs(const GalerkinSystem& s, const Vector& u_nodes) {
  if (u_nodes.size() != s.phi.rows()) throw std::invalid_argument("init_coeffs: expected values at the quadrature nodes");
  return s.proj * u_nodes;
}

/// da/dt = -P N[sum_i a_i phi~_i], with N evaluated pointwise at the nodes.
inline Vector galerkin_rhs(const GalerkinSystem& s, const Vector& a) {
  if (a.size() != s.size()) throw std::invalid_argument("galerkin_rhs: coefficient length mismatch");
  const Vector u = s.phi * a, ux = s.d1 * a;
  Vector n;
  switch (s.spec.kind) {
    case pde::Kind::advection_diffusion:
      n = s.spec.advection * ux - s.spec.viscosity * (s.d2 * a);
      break;
    case pde::Kind::burgers:
      n = u.cwiseProduct(ux) - s.spec.viscosity * (s.d2 * a);
      break;
    case pde::Kind::kdv:
      n = u.cwiseProduct(ux) + s.spec.dispersion * s.spec.dispersion * (s.d3 * a);
      break;
  }
  return -(s.proj * n);
}

/// Coefficients at the recorded times: coeffs(n, k) = a_k(t_n).
struct Trajectory {
  Vector t;
  Matrix coeffs;
};

/// Classical RK4 on the coefficient ODEs.
inline Trajectory evolve(const GalerkinSystem& s, const Vector& a0, const solvers::TimeGrid& grid) {
  grid.validate();
  if (a0.size() != s.size()) throw std::invalid_argument("evolve: coefficient length mismatch");
  Trajectory tr{grid.times(), Matrix(grid.records(), s.size())};
  const double dt = grid.t_max / grid.steps;
  Vector a = a0;
  tr.coeffs.row(0) = a.transpose();
  Index rec = 1;
  for (int step = 1; step <= grid.steps; ++step) {
    const Vector k1 = galerkin_rhs(s, a);
    const Vector k2 = galerkin_rhs(s, a + 0.5 * dt * k1);
    const Vector k3 = galerkin_rhs(s, a + 0.5 * dt * k2);
    const Vector k4 = galerkin_rhs(s, a + dt * k3);
    a += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!a.allFinite()) {
      std::ostringstream os;
      os << "evolve: coefficients became non-finite at step " << step << " (t = " << step * dt << ")";
      throw SpectralError(os.str());
    }
    if (step % grid.stride == 0) tr.coeffs.row(rec++) = a.transpose();
  }
  return tr;
}

/// s^(t_n, x) = sum_k a_k(t_n) phi~_k(x) at arbitrary points.
inline solvers::SolutionField reconstruct(const basis::BasisSet& b, const Trajectory& tr, const Vector& points) {
  solvers::SolutionField f;
  f.x = points;
  f.t = tr.t;
  f.x_max = b.quad.hi - b.quad.lo;
  f.values = tr.coeffs * b.evaluate(points).transpose();
  return f;
}

/// Values of a periodic grid field at the quadrature nodes, by trigonometric
/// interpolation.
inline Vector to_nodes(const Vector& grid_values, const basis::QuadratureRule& q) {
  return fourier::evaluate(grid_values, q.hi - q.lo, (q.nodes.array() - q.lo).matrix());
}

}  // namespace deeponet::spectral
