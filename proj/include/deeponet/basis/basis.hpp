#pragma once

#include "deeponet/networks/deeponet.hpp"
#include "deeponet/util/csv.hpp"
#include "deeponet/util/hash.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace deeponet::basis {

using Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class QuadratureKind { trapezoid, gauss_legendre };

inline std::string quadrature_name(QuadratureKind k) { return k == QuadratureKind::trapezoid ? "trapezoid" : "gauss_legendre"; }

inline QuadratureKind quadrature_from_name(const std::string& s) {
  if (s == "trapezoid") return QuadratureKind::trapezoid;
  if (s == "gauss_legendre") return QuadratureKind::gauss_legendre;
  throw std::invalid_argument("unknown quadrature rule '" + s + "'");
}

class BasisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QuadratureRule {
  QuadratureKind kind = QuadratureKind::gauss_legendre;
  Vector nodes;
  Vector weights;
  double lo = 0.0;
  double hi = 2.0 * std::numbers::pi;

  Index size() const { return nodes.size(); }

  /// Periodic composite trapezoid: nodes lo + i h, equal weights h.
  static QuadratureRule trapezoid(Index m, double lo = 0.0, double hi = 2.0 * std::numbers::pi) {
    if (m < 1 || !(hi > lo)) throw std::invalid_argument("trapezoid rule: need M >= 1 and a nonempty interval");
    QuadratureRule q{QuadratureKind::trapezoid, Vector(m), Vector::Constant(m, (hi - lo) / static_cast<double>(m)), lo, hi};
    for (Index i = 0; i < m; ++i) q.nodes(i) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(m);
    return q;
  }

  /// Gauss-Legendre nodes by Newton iteration on P_M, ascending.
  static QuadratureRule gauss_legendre(Index m, double lo = 0.0, double hi = 2.0 * std::numbers::pi) {
    if (m < 1 || !(hi > lo)) throw std::invalid_argument("Gauss-Legendre rule: need M >= 1 and a nonempty interval");
    QuadratureRule q{QuadratureKind::gauss_legendre, Vector(m), Vector(m), lo, hi};
    const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    for (Index i = 0; i < m; ++i) {
      double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(m) + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = z;
        for (Index n = 2; n <= m; ++n) {
          const double p2 = ((2.0 * n - 1.0) * z * p1 - (n - 1.0) * p0) / static_cast<double>(n);
          p0 = p1;
          p1 = p2;
        }
        if (m == 1) p0 = 1.0;
        dp = static_cast<double>(m) * (z * p1 - p0) / (z * z - 1.0);
        const double dz = p1 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-16) break;
      }
      // Recompute the derivative at the converged node.
      double p0 = 1.0, p1 = z;
      for (Index n = 2; n <= m; ++n) {
        const double p2 = ((2.0 * n - 1.0) * z * p1 - (n - 1.0) * p0) / static_cast<double>(n);
        p0 = p1;
        p1 = p2;
      }
      dp = m == 1 ? 1.0 : static_cast<double>(m) * (z * p1 - p0) / (z * z - 1.0);
      q.nodes(m - 1 - i) = mid + half * z;
      q.weights(m - 1 - i) = half * 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return q;
  }

  static QuadratureRule make(QuadratureKind kind, Index m, double lo = 0.0, double hi = 2.0 * std::numbers::pi) {
    return kind == QuadratureKind::trapezoid ? trapezoid(m, lo, hi) : gauss_legendre(m, lo, hi);
  }

  double integrate(const Vector& values) const { return weights.dot(values); }

  void validate() const {
    if (nodes.size() != weights.size() || nodes.size() < 1) throw std::invalid_argument("quadrature: node/weight mismatch");
    if ((weights.array() <= 0.0).any()) throw std::invalid_argument("quadrature: weights must be positive");
    if (std::abs(weights.sum() - (hi - lo)) > 1e-12 * (hi - lo)) throw std::invalid_argument("quadrature: weights do not sum to |domain|");
  }
};

// ------------------------------------------------------------- Legendre

/// Orthonormal Legendre polynomials on (lo, hi) and their x-derivatives:
/// result[d](i, j) = d^d/dx^d L_j at points(i), for d = 0..max_derivative.
inline std::vector<Matrix> legendre_table(const Vector& points, int degree, double lo, double hi, int max_derivative) {
  if (degree < 0 || max_derivative < 0 || max_derivative > 3) throw std::invalid_argument("legendre_table: bad degree or order");
  const Index n = points.size();
  const int nd = max_derivative + 1;
  // P[d](i, j): derivative d of the standard P_j in the reference variable.
  std::vector<Matrix> p(static_cast<std::size_t>(nd), Matrix::Zero(n, degree + 1));
  const double a = 2.0 / (hi - lo);
  for (Index i = 0; i < n; ++i) {
    const double z = a * (points(i) - lo) - 1.0;
    p[0](i, 0) = 1.0;
    if (degree >= 1) {
      p[0](i, 1) = z;
      if (nd > 1) p[1](i, 1) = 1.0;
    }
    for (int j = 1; j < degree; ++j) {
      for (int d = 0; d < nd; ++d) {
        const double lower = d > 0 ? p[static_cast<std::size_t>(d - 1)](i, j) : 0.0;
        p[static_cast<std::size_t>(d)](i, j + 1) =
            ((2.0 * j + 1.0) * (z * p[static_cast<std::size_t>(d)](i, j) + d * lower) - j * p[static_cast<std::size_t>(d)](i, j - 1)) /
            (j + 1.0);
      }
    }
  }
  for (int d = 0; d < nd; ++d) {
    const double chain = std::pow(a, d);
    for (int j = 0; j <= degree; ++j) p[static_cast<std::size_t>(d)].col(j) *= chain * std::sqrt((2.0 * j + 1.0) / (hi - lo));
  }
  return p;
}

// ------------------------------------------------------------- basis sets

/// Trunk outputs at a fixed time: tau(i, k) = tau_k(x_i, t*).
struct FrozenTrunk {
  Matrix tau;  // M x p
  double freeze_time = 0.0;
};

inline FrozenTrunk freeze_trunk(const nn::DeepOnetModel& model, double freeze_time, const QuadratureRule& quad) {
  if (!std::isfinite(freeze_time) || freeze_time < 0.0) throw std::invalid_argument("freeze_trunk: t* must be >= 0");
  Matrix coords(2, quad.size());
  coords.row(0) = quad.nodes.transpose();
  coords.row(1).setConstant(freeze_time);
  return {nn::trunk_forward(model, coords).transpose(), freeze_time};
}

struct BasisSet {
  QuadratureRule quad;
  Matrix phi;       // M x p node values, columns ordered by sigma
  Vector sigma;     // p, nonincreasing
  Matrix legendre;  // p x (M~ + 1); empty until projected
  Index retained = 0;
  double cutoff = 0.0;
  double freeze_time = 0.0;
  std::string source;  // checkpoint id or description

  Index size() const { return phi.cols(); }
  int degree() const { return static_cast<int>(legendre.cols()) - 1; }
  bool projected() const { return legendre.size() > 0; }

  /// Node values of the retained functions; the Legendre form when available.
  Matrix active_nodes() const {
    if (!projected()) return phi.leftCols(retained);
    return legendre_table(quad.nodes, degree(), quad.lo, quad.hi, 0)[0] * legendre.topRows(retained).transpose();
  }

  /// d-th x-derivative of each retained phi~_k at `points` (points x retained).
  Matrix evaluate(const Vector& points, int derivative = 0) const {
    if (!projected()) throw BasisError("basis: Legendre form not computed");
    if (derivative < 0 || derivative > 3) throw BasisError("basis: derivative order " + std::to_string(derivative) + " unavailable");
    return legendre_table(points, degree(), quad.lo, quad.hi, derivative)[static_cast<std::size_t>(derivative)] *
           legendre.topRows(retained).transpose();
  }
};

/// Orthonormal functions spanning the trunk columns from the SVD of
/// B = W^{1/2} tau. Each column is signed so its largest-magnitude node value
/// is positive.
inline BasisSet extract_basis(const FrozenTrunk& frozen, const QuadratureRule& quad) {
  quad.validate();
  if (frozen.tau.rows() != quad.size()) throw std::invalid_argument("extract_basis: trunk samples do not match quadrature");
  if (!frozen.tau.allFinite()) throw BasisError("extract_basis: trunk samples are not finite");
  const Vector sw = quad.weights.cwiseSqrt();
  const Matrix b = sw.asDiagonal() * frozen.tau;
  Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeThinU);
  if (svd.info() != Eigen::Success) throw BasisError("extract_basis: SVD failed");
  BasisSet out;
  out.quad = quad;
  out.sigma = svd.singularValues();
  out.phi = sw.cwiseInverse().asDiagonal() * svd.matrixU();
  for (Index k = 0; k < out.phi.cols(); ++k) {
    Index imax = 0;
    out.phi.col(k).cwiseAbs().maxCoeff(&imax);
    if (out.phi(imax, k) < 0.0) out.phi.col(k) *= -1.0;
  }
  out.retained = out.phi.cols();
  out.freeze_time = frozen.freeze_time;
  return out;
}

/// A basis from given node values, without recombination; sigma = 1.
inline BasisSet basis_from_nodes(const QuadratureRule& quad, const Matrix& phi) {
  if (phi.rows() != quad.size()) throw std::invalid_argument("basis_from_nodes: node count mismatch");
  BasisSet out;
  out.quad = quad;
  out.phi = phi;
  out.sigma = Vector::Ones(phi.cols());
  out.retained = phi.cols();
  return out;
}

/// c_kj = sum_i L_j(x_i) phi_k(x_i) w_i for j = 0..degree.
inline BasisSet legendre_project(BasisSet basis, int degree) {
  if (degree < 0 || degree >= basis.quad.size()) {
    throw std::invalid_argument("legendre_project: degree " + std::to_string(degree) + " must be below M = " +
                                std::to_string(basis.quad.size()));
  }
  const Matrix l = legendre_table(basis.quad.nodes, degree, basis.quad.lo, basis.quad.hi, 0)[0];
  basis.legendre = basis.phi.transpose() * basis.quad.weights.asDiagonal() * l;
  return basis;
}

/// Quadrature-norm gap between each phi_k and its Legendre form.
inline Vector projection_residuals(const BasisSet& basis) {
  if (!basis.projected()) throw BasisError("projection_residuals: Legendre form not computed");
  const Matrix l = legendre_table(basis.quad.nodes, basis.degree(), basis.quad.lo, basis.quad.hi, 0)[0];
  const Matrix diff = basis.phi - l * basis.legendre.transpose();
  return (basis.quad.weights.asDiagonal() * diff.cwiseAbs2()).colwise().sum().cwiseSqrt().transpose();
}

/// Keeps the leading functions with sigma > cutoff. An empty result is allowed
/// and reported through `retained == 0`.
inline BasisSet truncate_by_cutoff(BasisSet basis, double cutoff) {
  if (!(cutoff >= 0.0)) throw std::invalid_argument("truncate_by_cutoff: cutoff must be >= 0");
  Index keep = 0;
  while (keep < basis.sigma.size() && basis.sigma(keep) > cutoff) ++keep;
  basis.retained = keep;
  basis.cutoff = cutoff;
  return basis;
}

inline BasisSet truncate_to(BasisSet basis, Index count) {
  if (count < 0 || count > basis.size()) throw std::invalid_argument("truncate_to: count out of range");
  basis.retained = count;
  return basis;
}

/// a_k = sum_i phi~_k(x_i) f(x_i) w_i over the retained functions.
inline Vector expansion_coefficients(const BasisSet& basis, const Vector& f_nodes) {
  if (f_nodes.size() != basis.quad.size()) throw std::invalid_argument("expansion_coefficients: node count mismatch");
  return basis.active_nodes().transpose() * basis.quad.weights.asDiagonal() * f_nodes;
}

template <class F>
Vector expansion_coefficients(const BasisSet& basis, F f) {
  Vector v(basis.quad.size());
  for (Index i = 0; i < v.size(); ++i) v(i) = f(basis.quad.nodes(i));
  return expansion_coefficients(basis, v);
}

/// Quadrature-norm residual of each tau_k after projection onto the retained span.
inline Vector reconstruction_residuals(const BasisSet& basis, const Matrix& tau) {
  const Matrix phi = basis.phi.leftCols(basis.retained);
  const Matrix coef = phi.transpose() * basis.quad.weights.asDiagonal() * tau;
  const Matrix r = tau - phi * coef;
  return (basis.quad.weights.asDiagonal() * r.cwiseAbs2()).colwise().sum().cwiseSqrt().transpose();
}

inline Matrix gram(const BasisSet& basis) {
  const Matrix phi = basis.phi.leftCols(basis.retained);
  return phi.transpose() * basis.quad.weights.asDiagonal() * phi;
}

// ------------------------------------------------------------ persistence

inline void save_basis(const std::filesystem::path& dir, const BasisSet& b) {
  std::filesystem::create_directories(dir);
  Matrix q(b.quad.size(), 2);
  q.col(0) = b.quad.nodes;
  q.col(1) = b.quad.weights;
  write_csv(dir / "quadrature.csv", q, {"x", "w"});
  std::vector<std::string> names;
  for (Index k = 0; k < b.size(); ++k) names.push_back("phi" + std::to_string(k + 1));
  write_csv(dir / "nodes.csv", b.phi, names);
  write_csv(dir / "sigma.csv", b.sigma, {"sigma"});
  if (b.projected()) write_csv(dir / "legendre.csv", b.legendre);
  nlohmann::json j{{"quadrature", quadrature_name(b.quad.kind)},
                   {"M", b.quad.size()},
                   {"domain", {b.quad.lo, b.quad.hi}},
                   {"legendre_degree", b.projected() ? b.degree() : -1},
                   {"p", b.size()},
                   {"retained", b.retained},
                   {"cutoff", b.cutoff},
                   {"freeze_time", b.freeze_time},
                   {"source", b.source}};
  std::ofstream(dir / "basis.json") << j.dump(2) << '\n';
}

inline BasisSet load_basis(const std::filesystem::path& dir) {
  std::ifstream in(dir / "basis.json");
  if (!in) throw BasisError("load_basis: missing " + (dir / "basis.json").string());
  const nlohmann::json j = nlohmann::json::parse(in);
  BasisSet b;
  const Matrix q = read_csv_matrix(dir / "quadrature.csv", true);
  b.quad.kind = quadrature_from_name(j.at("quadrature").get<std::string>());
  b.quad.nodes = q.col(0);
  b.quad.weights = q.col(1);
  b.quad.lo = j.at("domain")[0].get<double>();
  b.quad.hi = j.at("domain")[1].get<double>();
  b.phi = read_csv_matrix(dir / "nodes.csv", true);
  b.sigma = read_csv_matrix(dir / "sigma.csv", true).col(0);
  if (j.at("legendre_degree").get<int>() >= 0) b.legendre = read_csv_matrix(dir / "legendre.csv", false);
  b.retained = j.at("retained").get<Index>();
  b.cutoff = j.at("cutoff").get<double>();
  b.freeze_time = j.at("freeze_time").get<double>();
  b.source = j.at("source").get<std::string>();
  if (b.phi.rows() != b.quad.size() || b.sigma.size() != b.phi.cols() || b.retained > b.size()) {
    throw BasisError("load_basis: inconsistent files in " + dir.string());
  }
  return b;
}

}  // namespace deeponet::basis
