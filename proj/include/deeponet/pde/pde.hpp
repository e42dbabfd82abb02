#pragma once

#include "deeponet/diffkit.hpp"
#include "deeponet/networks/deeponet.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace deeponet::pde {

using diff::Matrix;
using diff::TaylorValue;
using diff::Var;

enum class Kind { advection_diffusion, burgers, kdv };

/// s_t + N[s] = 0 on (0, x_max) x (0, t_max] with periodic boundaries:
///   advection-diffusion  N[s] = a s_x - nu s_xx
///   viscous Burgers      N[s] = s s_x - nu s_xx
///   KdV                  N[s] = s s_x + delta^2 s_xxx
struct PdeSpec {
  Kind kind = Kind::advection_diffusion;
  double advection = 0.0;
  double viscosity = 0.0;
  double dispersion = 0.0;
  double x_max = 2.0 * std::numbers::pi;
  double t_max = 1.0;

  static PdeSpec advection_diffusion(double a, double nu, double x_max = 2.0 * std::numbers::pi) {
    PdeSpec s;
    s.kind = Kind::advection_diffusion;
    s.advection = a;
    s.viscosity = nu;
    s.x_max = x_max;
    return s;
  }
  static PdeSpec burgers(double nu, double x_max = 2.0 * std::numbers::pi) {
    PdeSpec s;
    s.kind = Kind::burgers;
    s.viscosity = nu;
    s.x_max = x_max;
    return s;
  }
  static PdeSpec kdv(double delta, double x_max = 2.0 * std::numbers::pi) {
    PdeSpec s;
    s.kind = Kind::kdv;
    s.dispersion = delta;
    s.x_max = x_max;
    return s;
  }

  int spatial_order() const { return kind == Kind::kdv ? 3 : 2; }

  void validate() const {
    if (!(viscosity >= 0.0)) throw std::invalid_argument("PdeSpec: viscosity must be >= 0");
    if (!(x_max > 0.0) || !(t_max > 0.0)) throw std::invalid_argument("PdeSpec: domain extents must be positive");
    if (!std::isfinite(advection) || !std::isfinite(dispersion)) throw std::invalid_argument("PdeSpec: non-finite coefficient");
  }

  std::string tag() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind) {
      case Kind::advection_diffusion: os << "advection_diffusion(a=" << advection << ",nu=" << viscosity; break;
      case Kind::burgers: os << "burgers(nu=" << viscosity; break;
      case Kind::kdv: os << "kdv(delta=" << dispersion; break;
    }
    os << ",L=" << x_max << ",T=" << t_max << ")";
    return os.str();
  }

  bool operator==(const PdeSpec&) const = default;
};

inline std::string kind_name(Kind k) {
  switch (k) {
    case Kind::advection_diffusion: return "advection_diffusion";
    case Kind::burgers: return "burgers";
    case Kind::kdv: return "kdv";
  }
  return "?";
}

inline Kind kind_from_name(const std::string& s) {
  if (s == "advection_diffusion") return Kind::advection_diffusion;
  if (s == "burgers") return Kind::burgers;
  if (s == "kdv") return Kind::kdv;
  throw std::invalid_argument("unknown PDE kind '" + s + "'");
}

/// A scalar space-time field written in registered primitives: maps a 2 x B
/// coordinate expansion (rows x, t) to a 1 x B expansion.
template <class F>
concept Field = diff::TaylorForward<F>;

/// DeepONet output for a batch whose column k uses branch column k.
struct DeepOnetField {
  Var branch;  // w x B
  const nn::MlpWeights<Var>* trunk = nullptr;

  TaylorValue operator()(const TaylorValue& coords) const { return diff::dot(branch, nn::mlp_forward(*trunk, coords)); }
};

namespace detail {

inline void check_points(const Matrix& points, const PdeSpec& spec) {
  if (points.rows() != 2) throw std::invalid_argument("residual: points must be 2 x B (x, t)");
  constexpr double slack = 1e-12;
  for (Eigen::Index k = 0; k < points.cols(); ++k) {
    const double x = points(0, k), t = points(1, k);
    if (!(x >= -slack && x <= spec.x_max + slack && t >= -slack && t <= spec.t_max + slack)) {
      throw std::domain_error("residual: point (" + std::to_string(x) + ", " + std::to_string(t) +
                              ") lies outside the space-time domain");
    }
  }
}

inline Matrix unit(int axis) {
  Matrix d = Matrix::Zero(2, 1);
  d(axis, 0) = 1.0;
  return d;
}

}  // namespace detail

/// Pointwise s_t + N[s] at the columns of `points`, as a 1 x B node that is
/// differentiable in whatever parameters the field depends on. x-derivatives
/// come from one Taylor pass of the PDE's spatial order, s_t from an order-1
/// pass in t.
template <Field F>
Var residual(diff::Tape& tape, const F& field, const Matrix& points, const PdeSpec& spec,
             int engine_max_order = diff::kMaxTaylorOrder) {
  spec.validate();
  if (spec.spatial_order() > engine_max_order) {
    throw std::invalid_argument("residual: PDE needs x-derivatives of order " + std::to_string(spec.spatial_order()) +
                                " but the engine is capped at " + std::to_string(engine_max_order));
  }
  detail::check_points(points, spec);
  const TaylorValue sx = diff::taylor_eval(tape, field, points, detail::unit(0), spec.spatial_order());
  const TaylorValue st = diff::taylor_eval(tape, field, points, detail::unit(1), 1);
  const Var& s = sx[0];
  const Var& s_t = st[1];
  const Var& s_x = sx[1];
  const Var s_xx = diff::scale(sx[2], 2.0);
  switch (spec.kind) {
    case Kind::advection_diffusion:
      return diff::add(s_t, diff::sub(diff::scale(s_x, spec.advection), diff::scale(s_xx, spec.viscosity)));
    case Kind::burgers:
      return diff::add(s_t, diff::sub(diff::mul(s, s_x), diff::scale(s_xx, spec.viscosity)));
    case Kind::kdv: {
      const Var s_xxx = diff::scale(sx[3], 6.0);
      return diff::add(s_t, diff::add(diff::mul(s, s_x), diff::scale(s_xxx, spec.dispersion * spec.dispersion)));
    }
  }
  throw std::logic_error("residual: unknown PDE kind");
}

/// Default number of derivative gaps matched at the periodic boundary:
/// value and derivatives up to spatial order - 1.
inline int default_boundary_orders(const PdeSpec& spec) { return spec.spatial_order() - 1; }

/// s^(j)(0,t) - s^(j)(L,t) for j = 0..max_order, each a 1 x B node.
template <Field F>
std::vector<Var> boundary_mismatch(diff::Tape& tape, const F& field, const Matrix& times, const PdeSpec& spec,
                                   int max_order) {
  if (times.rows() != 1) throw std::invalid_argument("boundary_mismatch: times must be 1 x B");
  if (max_order < 0 || max_order > diff::kMaxTaylorOrder) {
    throw std::invalid_argument("boundary_mismatch: unsupported derivative order");
  }
  for (Eigen::Index k = 0; k < times.cols(); ++k) {
    if (!(times(0, k) >= 0.0 && times(0, k) <= spec.t_max)) throw std::domain_error("boundary_mismatch: t outside [0, T]");
  }
  Matrix left(2, times.cols()), right(2, times.cols());
  left.row(0).setZero();
  right.row(0).setConstant(spec.x_max);
  left.row(1) = times;
  right.row(1) = times;
  const TaylorValue l = diff::taylor_eval(tape, field, left, detail::unit(0), max_order);
  const TaylorValue r = diff::taylor_eval(tape, field, right, detail::unit(0), max_order);
  std::vector<Var> gaps;
  double fact = 1.0;
  for (int j = 0; j <= max_order; ++j) {
    if (j > 1) fact *= j;
    Var g = diff::sub(l[j], r[j]);
    gaps.push_back(fact == 1.0 ? g : diff::scale(g, fact));
  }
  return gaps;
}

/// Scalar convenience: residual of a DeepONet for one input function at one point.
inline double residual(const nn::DeepOnetModel& model, std::span<const double> u_sensors, double x, double t,
                       const PdeSpec& spec) {
  if (static_cast<Eigen::Index>(u_sensors.size()) != model.sensors()) {
    throw std::invalid_argument("residual: sensor count does not match the model");
  }
  diff::Tape tape;
  const nn::ModelBinding w = nn::bind_model(tape, model);
  const Var u = tape.constant(Eigen::Map<const Matrix>(u_sensors.data(), model.sensors(), 1));
  const DeepOnetField field{nn::mlp_forward(w.branch, u), &w.trunk};
  Matrix p(2, 1);
  p << x, t;
  return residual(tape, field, p, spec).value()(0, 0);
}

/// Scalar convenience: boundary gaps of a DeepONet at time t.
inline std::vector<double> boundary_mismatch(const nn::DeepOnetModel& model, std::span<const double> u_sensors,
                                             double t, const PdeSpec& spec) {
  diff::Tape tape;
  const nn::ModelBinding w = nn::bind_model(tape, model);
  const Var u = tape.constant(Eigen::Map<const Matrix>(u_sensors.data(), model.sensors(), 1));
  const DeepOnetField field{nn::mlp_forward(w.branch, u), &w.trunk};
  std::vector<double> out;
  for (const Var& g : boundary_mismatch(tape, field, Matrix::Constant(1, 1, t), spec, default_boundary_orders(spec))) {
    out.push_back(g.value()(0, 0));
  }
  return out;
}

}  // namespace deeponet::pde
