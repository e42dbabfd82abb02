#pragma once

// Shared helpers for the unit suites: random networks and finite-difference
// oracles that never touch the tape.

#include "deeponet/diffkit.hpp"
#include "deeponet/networks/deeponet.hpp"
#include "deeponet/util/random.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace testing_support {

using deeponet::diff::Index;
using deeponet::diff::Matrix;
using deeponet::diff::Vector;

/// Central differences of a scalar function of one variable.
struct CentralDifferences {
  std::function<double(double)> f;
  double h;

  double d1(double x) const { return (f(x + h) - f(x - h)) / (2 * h); }
  double d2(double x) const { return (f(x + h) - 2 * f(x) + f(x - h)) / (h * h); }
  double d3(double x) const { return (f(x + 2 * h) - 2 * f(x + h) + 2 * f(x - h) - f(x - 2 * h)) / (2 * h * h * h); }
};

/// Plain double-precision tanh MLP forward, independent of the library's
/// forward code: layers[k] = (W, b), linear final layer.
inline Matrix reference_mlp(const std::vector<std::pair<Matrix, Vector>>& layers, const Matrix& x) {
  Matrix h = x;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    Matrix z = layers[k].first * h;
    for (Index c = 0; c < z.cols(); ++c) z.col(c) += layers[k].second;
    h = k + 1 < layers.size() ? Matrix(z.array().tanh()) : z;
  }
  return h;
}

/// Central-difference gradient of a scalar function of a flat vector.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& theta, double h) {
  Vector g(theta.size());
  Vector p = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    const double orig = p(i);
    p(i) = orig + h;
    const double fp = f(p);
    p(i) = orig - h;
    const double fm = f(p);
    p(i) = orig;
    g(i) = (fp - fm) / (2 * h);
  }
  return g;
}

inline Matrix random_matrix(deeponet::Rng& rng, Index rows, Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = scale * rng.uniform(-1.0, 1.0);
  return m;
}

inline double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace testing_support
