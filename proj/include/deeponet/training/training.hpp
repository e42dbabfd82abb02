#pragma once

#include "deeponet/diffkit.hpp"
#include "deeponet/networks/deeponet.hpp"
#include "deeponet/pde/pde.hpp"
#include "deeponet/util/csv.hpp"
#include "deeponet/util/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace deeponet::training {

using diff::Index;
using diff::Matrix;
using diff::ParamVector;
using diff::Tape;
using diff::Var;
using diff::Vector;
using pde::PdeSpec;

enum class Scheme { fixed, ntk, ck };
/// How the kernel's infinity norm is read: the largest diagonal entry, or the
/// largest absolute row sum of the explicit kernel (small models only).
enum class KernelNorm { max_diagonal, row_sum };

inline std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::fixed: return "fixed";
    case Scheme::ntk: return "ntk";
    case Scheme::ck: return "ck";
  }
  return "?";
}

inline Scheme scheme_from_name(const std::string& s) {
  if (s == "fixed") return Scheme::fixed;
  if (s == "ntk") return Scheme::ntk;
  if (s == "ck") return Scheme::ck;
  throw std::invalid_argument("unknown weighting scheme '" + s + "'");
}

inline std::string norm_name(KernelNorm n) { return n == KernelNorm::max_diagonal ? "max_diagonal" : "row_sum"; }

inline KernelNorm norm_from_name(const std::string& s) {
  if (s == "max_diagonal") return KernelNorm::max_diagonal;
  if (s == "row_sum") return KernelNorm::row_sum;
  throw std::invalid_argument("unknown kernel norm '" + s + "'");
}

// ------------------------------------------------------------ training sets

/// Collocation pools for physics-informed training. Pool entry q = j * P + i
/// belongs to function j. Every BC entry yields one constraint per matched
/// derivative order.
struct PhysicsSet {
  Matrix u;              // m x N sensor values
  Vector sensor_x;       // m
  Index points = 0;      // P
  int bc_orders = 1;     // gaps of orders 0..bc_orders
  std::vector<Index> ic_sensor;  // N P sensor index of each IC point
  Vector bc_t;           // N P
  Matrix interior;       // 2 x N P, strictly inside the domain

  Index functions() const { return u.cols(); }
  Index pool_size() const { return functions() * points; }
  Index function_of(Index q) const { return q / points; }
  /// N* for the whole pool: IC + every BC gap + interior.
  Index constraints() const { return pool_size() * (2 + bc_orders + 1); }
};

inline PhysicsSet make_physics_set(const Matrix& u, const Vector& sensor_x, const PdeSpec& spec, Index points,
                                   int bc_orders, std::uint64_t seed) {
  spec.validate();
  if (u.rows() != sensor_x.size()) throw std::invalid_argument("make_physics_set: sensor grid does not match inputs");
  if (u.cols() < 1 || points < 1) throw std::invalid_argument("make_physics_set: need N >= 1 and P >= 1");
  if (bc_orders < 0 || bc_orders > diff::kMaxTaylorOrder) throw std::invalid_argument("make_physics_set: bad BC order");
  PhysicsSet s;
  s.u = u;
  s.sensor_x = sensor_x;
  s.points = points;
  s.bc_orders = bc_orders;
  const Index n = s.pool_size(), m = u.rows();
  s.ic_sensor.resize(static_cast<std::size_t>(n));
  s.bc_t.resize(n);
  s.interior.resize(2, n);
  Rng rng(derive_seed(seed, 0x706f6f6c));
  auto open_unit = [&] {
    double r;
    do r = rng.uniform();
    while (r == 0.0);
    return r;
  };
  for (Index j = 0; j < u.cols(); ++j) {
    // IC points: distinct sensors while P <= m, otherwise with repeats.
    std::vector<Index> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index i = m - 1; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[rng.index(static_cast<std::size_t>(i + 1))]);
    for (Index i = 0; i < points; ++i) {
      const Index q = j * points + i;
      s.ic_sensor[static_cast<std::size_t>(q)] =
          i < m ? perm[static_cast<std::size_t>(i)] : static_cast<Index>(rng.index(static_cast<std::size_t>(m)));
      s.bc_t(q) = spec.t_max * rng.uniform();
      s.interior(0, q) = spec.x_max * open_unit();
      s.interior(1, q) = spec.t_max * open_unit();
    }
  }
  return s;
}

/// Supervised pairs for data-driven training: point k belongs to function fn[k].
struct DataSet {
  Matrix u;            // m x N
  Matrix points;       // 2 x Q
  Vector targets;      // Q
  std::vector<Index> fn;

  Index size() const { return points.cols(); }
};

// ----------------------------------------------------------- loss weights

/// One lambda per constraint, grouped by role. bc[j] holds the order-j gaps.
struct RoleVectors {
  Vector ic;
  std::vector<Vector> bc;
  Vector res;

  Index size() const {
    Index n = ic.size() + res.size();
    for (const auto& b : bc) n += b.size();
    return n;
  }
  Vector flat() const {
    Vector v(size());
    Index o = 0;
    auto put = [&](const Vector& x) {
      v.segment(o, x.size()) = x;
      o += x.size();
    };
    put(ic);
    for (const auto& b : bc) put(b);
    put(res);
    return v;
  }
  void assign(const Vector& v) {
    if (v.size() != size()) throw std::invalid_argument("RoleVectors: size mismatch");
    Index o = 0;
    auto take = [&](Vector& x) {
      x = v.segment(o, x.size());
      o += x.size();
    };
    take(ic);
    for (auto& b : bc) take(b);
    take(res);
  }
  static RoleVectors constant(Index pool, int bc_orders, double value) {
    RoleVectors r;
    r.ic = Vector::Constant(pool, value);
    r.bc.assign(static_cast<std::size_t>(bc_orders + 1), Vector::Constant(pool, value));
    r.res = Vector::Constant(pool, value);
    return r;
  }
};

struct WeightState {
  Scheme scheme = Scheme::fixed;
  double alpha = 0.5;
  int refresh_period = 1000;
  KernelNorm norm = KernelNorm::max_diagonal;
  RoleVectors lambda;

  static WeightState ones(const PhysicsSet& set, Scheme scheme, double alpha, int refresh, KernelNorm norm) {
    return {scheme, alpha, refresh, norm, RoleVectors::constant(set.pool_size(), set.bc_orders, 1.0)};
  }
};

inline constexpr double kDiagonalFloor = 1e-12;

struct WeightUpdate {
  Vector lambda;
  bool changed = true;
  std::string warning;
};

/// lambda_k = (norm / max(H_kk, floor))^alpha, with norm = max_j H_jj unless a
/// row-sum norm is supplied.
inline WeightUpdate update_weights(const Vector& lambda, const Vector& diag, double alpha,
                                   std::optional<double> kernel_norm = std::nullopt) {
  if (diag.size() != lambda.size()) throw std::invalid_argument("update_weights: diagonal length mismatch");
  if (!diag.allFinite()) return {lambda, false, "kernel diagonal is not finite; weights left unchanged"};
  if (diag.size() == 0 || diag.cwiseAbs().maxCoeff() == 0.0) {
    return {lambda, false, "kernel diagonal is identically zero; weights left unchanged"};
  }
  const double norm = kernel_norm.value_or(diag.maxCoeff());
  Vector out(diag.size());
  for (Index k = 0; k < diag.size(); ++k) out(k) = std::pow(norm / std::max(diag(k), kDiagonalFloor), alpha);
  return {out, true, {}};
}

// ----------------------------------------------------------- loss assembly

/// Selected pool entries for one role.
struct Batch {
  std::vector<Index> ic, bc, res;
};

inline Batch full_batch(const PhysicsSet& s) {
  Batch b;
  b.ic.resize(static_cast<std::size_t>(s.pool_size()));
  std::iota(b.ic.begin(), b.ic.end(), Index{0});
  b.bc = b.res = b.ic;
  return b;
}

/// `total` points per step split evenly across IC, BC and interior roles,
/// each drawn with replacement from the pool.
inline Batch sample_batch(const PhysicsSet& s, Index total, Rng& rng) {
  if (total < 3) throw std::invalid_argument("sample_batch: need at least one point per role");
  Batch b;
  const auto n = static_cast<std::size_t>(s.pool_size());
  b.ic.resize(static_cast<std::size_t>((total + 2) / 3));
  b.bc.resize(static_cast<std::size_t>((total + 1) / 3));
  b.res.resize(static_cast<std::size_t>(total / 3));
  for (auto* v : {&b.ic, &b.bc, &b.res}) {
    for (auto& q : *v) q = static_cast<Index>(rng.index(n));
  }
  return b;
}

/// Raw constraint values T^(k) for a batch, each 1 x B.
struct PhysicsTerms {
  Var ic;
  std::vector<Var> bc;
  Var res;
};

namespace detail {

// Branch outputs, one column per batch entry. In per-column mode the branch is
// re-run on duplicated inputs, since gathering would mix columns.
inline Var branch_columns(Tape& tape, const nn::ModelBinding& w, const Matrix& u, const std::vector<Index>& fn,
                          std::optional<Var> all_functions) {
  if (all_functions) return diff::gather_cols(*all_functions, fn);
  Matrix cols(u.rows(), static_cast<Index>(fn.size()));
  for (std::size_t k = 0; k < fn.size(); ++k) cols.col(static_cast<Index>(k)) = u.col(fn[k]);
  return nn::mlp_forward(w.branch, tape.constant(std::move(cols)));
}

inline std::vector<Index> functions_of(const PhysicsSet& s, const std::vector<Index>& pool) {
  std::vector<Index> fn(pool.size());
  for (std::size_t k = 0; k < pool.size(); ++k) fn[k] = s.function_of(pool[k]);
  return fn;
}

}  // namespace detail

/// Builds IC, BC and residual terms on `tape`. Set `per_column` when the
/// graph will be swept per column (kernel diagonals).
inline PhysicsTerms physics_terms(Tape& tape, const nn::ModelBinding& w, const PhysicsSet& s, const Batch& b,
                                  const PdeSpec& spec, bool per_column = false) {
  std::optional<Var> all;
  if (!per_column) all = nn::mlp_forward(w.branch, tape.constant(s.u));
  PhysicsTerms t;
  if (!b.ic.empty()) {
    Matrix pts(2, static_cast<Index>(b.ic.size()));
    Matrix target(1, pts.cols());
    for (std::size_t k = 0; k < b.ic.size(); ++k) {
      const Index q = b.ic[k], sensor = s.ic_sensor[static_cast<std::size_t>(q)];
      pts(0, static_cast<Index>(k)) = s.sensor_x(sensor);
      pts(1, static_cast<Index>(k)) = 0.0;
      target(0, static_cast<Index>(k)) = s.u(sensor, s.function_of(q));
    }
    const Var br = detail::branch_columns(tape, w, s.u, detail::functions_of(s, b.ic), all);
    const Var pred = diff::dot(br, nn::mlp_forward(w.trunk, tape.constant(std::move(pts))));
    t.ic = diff::sub(pred, tape.constant(std::move(target)));
  }
  if (!b.bc.empty()) {
    Matrix times(1, static_cast<Index>(b.bc.size()));
    for (std::size_t k = 0; k < b.bc.size(); ++k) times(0, static_cast<Index>(k)) = s.bc_t(b.bc[k]);
    const pde::DeepOnetField field{detail::branch_columns(tape, w, s.u, detail::functions_of(s, b.bc), all), &w.trunk};
    t.bc = pde::boundary_mismatch(tape, field, times, spec, s.bc_orders);
  }
  if (!b.res.empty()) {
    Matrix pts(2, static_cast<Index>(b.res.size()));
    for (std::size_t k = 0; k < b.res.size(); ++k) pts.col(static_cast<Index>(k)) = s.interior.col(b.res[k]);
    const pde::DeepOnetField field{detail::branch_columns(tape, w, s.u, detail::functions_of(s, b.res), all), &w.trunk};
    t.res = pde::residual(tape, field, pts, spec);
  }
  return t;
}

inline Vector gather(const Vector& v, const std::vector<Index>& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Index>(k)) = v(idx[k]);
  return out;
}

struct PhysicsLoss {
  Var total;
  double ic = 0.0, bc = 0.0, res = 0.0;  // unweighted mean squares per role
};

/// (2 / N*_batch) sum_k lambda_k T_k^2 over every constraint in the batch.
inline PhysicsLoss physics_loss(Tape& tape, const nn::ModelBinding& w, const PhysicsSet& s, const Batch& b,
                                const PdeSpec& spec, const RoleVectors& lambda) {
  const PhysicsTerms t = physics_terms(tape, w, s, b, spec);
  std::vector<Var> parts;
  Index count = 0;
  PhysicsLoss out;
  auto add = [&](const Var& term, const Vector& lam, const std::vector<Index>& idx, double& mean_sq) {
    const Matrix l = gather(lam, idx).transpose();
    parts.push_back(diff::sum(diff::mul(diff::mul(term, term), tape.constant(l))));
    count += term.cols();
    mean_sq += term.value().squaredNorm() / static_cast<double>(term.cols());
  };
  if (!b.ic.empty()) add(t.ic, lambda.ic, b.ic, out.ic);
  for (std::size_t j = 0; j < t.bc.size(); ++j) add(t.bc[j], lambda.bc[j], b.bc, out.bc);
  if (!b.res.empty()) add(t.res, lambda.res, b.res, out.res);
  if (parts.empty()) throw std::invalid_argument("physics_loss: batch has no constraint points");
  Var acc = parts.front();
  for (std::size_t k = 1; k < parts.size(); ++k) acc = diff::add(acc, parts[k]);
  out.total = diff::scale(acc, 2.0 / static_cast<double>(count));
  return out;
}

/// Mean squared error over the selected data points.
inline Var data_loss(Tape& tape, const nn::ModelBinding& w, const DataSet& d, const std::vector<Index>& idx) {
  if (idx.empty()) throw std::invalid_argument("data_loss: empty batch");
  Matrix pts(2, static_cast<Index>(idx.size()));
  Matrix target(1, pts.cols());
  std::vector<Index> fn(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    pts.col(static_cast<Index>(k)) = d.points.col(idx[k]);
    target(0, static_cast<Index>(k)) = d.targets(idx[k]);
    fn[k] = d.fn[static_cast<std::size_t>(idx[k])];
  }
  const Var br = diff::gather_cols(nn::mlp_forward(w.branch, tape.constant(d.u)), fn);
  const Var err = diff::sub(diff::dot(br, nn::mlp_forward(w.trunk, tape.constant(std::move(pts)))), tape.constant(target));
  return diff::mean(diff::mul(err, err));
}

// ----------------------------------------------------------- kernel diagonal

/// Slots whose gradients enter the kernel: everything for NTK, the last layer
/// of both networks for CK.
inline nn::SlotFilter kernel_slots(const nn::DeepOnetModel& model, Scheme scheme) {
  if (scheme == Scheme::ck) return [&model](std::size_t s) { return nn::is_final_layer_slot(model, s); };
  return [](std::size_t) { return true; };
}

/// H_kk = |dT_k / dtheta|^2 for every constraint in the batch, grouped like
/// the weights. Slots outside the kernel are bound as constants, so CK only
/// differentiates the final layers.
inline RoleVectors kernel_diag(const nn::DeepOnetModel& model, const PhysicsSet& s, const Batch& b, const PdeSpec& spec,
                               Scheme scheme, Index chunk = 256) {
  if (scheme == Scheme::fixed) throw std::invalid_argument("kernel_diag: fixed weighting has no kernel");
  const nn::SlotFilter slots = kernel_slots(model, scheme);
  RoleVectors out;
  out.ic.resize(static_cast<Index>(b.ic.size()));
  out.bc.assign(static_cast<std::size_t>(s.bc_orders + 1), Vector(static_cast<Index>(b.bc.size())));
  out.res.resize(static_cast<Index>(b.res.size()));
  auto run = [&](const std::vector<Index>& pool, auto select, auto store) {
    for (std::size_t lo = 0; lo < pool.size(); lo += static_cast<std::size_t>(chunk)) {
      const std::size_t hi = std::min(pool.size(), lo + static_cast<std::size_t>(chunk));
      const std::vector<Index> part(pool.begin() + static_cast<std::ptrdiff_t>(lo), pool.begin() + static_cast<std::ptrdiff_t>(hi));
      Tape tape;
      const nn::ModelBinding w = nn::bind_model(tape, model, slots);
      const PhysicsTerms t = physics_terms(tape, w, s, select(part), spec, true);
      store(tape, t, static_cast<Index>(lo), static_cast<Index>(hi - lo));
    }
  };
  auto sq = [&](Tape& tape, const Var& row, Index n) {
    tape.backward(row, diff::GradMode::per_column);
    return tape.column_gradient_sq_norms(model.params, n, slots);
  };
  run(b.ic, [](const std::vector<Index>& p) { return Batch{p, {}, {}}; },
      [&](Tape& tape, const PhysicsTerms& t, Index lo, Index n) { out.ic.segment(lo, n) = sq(tape, t.ic, n); });
  run(b.bc, [](const std::vector<Index>& p) { return Batch{{}, p, {}}; },
      [&](Tape& tape, const PhysicsTerms& t, Index lo, Index n) {
        for (std::size_t j = 0; j < t.bc.size(); ++j) out.bc[j].segment(lo, n) = sq(tape, t.bc[j], n);
      });
  run(b.res, [](const std::vector<Index>& p) { return Batch{{}, {}, p}; },
      [&](Tape& tape, const PhysicsTerms& t, Index lo, Index n) { out.res.segment(lo, n) = sq(tape, t.res, n); });
  return out;
}

/// Largest absolute row sum of the explicit kernel J J^T over the batch,
/// refused when the Jacobian would exceed `max_entries` doubles.
inline double kernel_row_sum_norm(const nn::DeepOnetModel& model, const PhysicsSet& s, const Batch& b,
                                  const PdeSpec& spec, Scheme scheme, Index max_entries = 20'000'000) {
  const Index constraints = static_cast<Index>(b.ic.size() + b.res.size() + b.bc.size() * (s.bc_orders + 1));
  if (constraints * model.params.size() > max_entries) {
    throw std::invalid_argument("kernel_row_sum_norm: explicit kernel too large (" + std::to_string(constraints) +
                                " constraints x " + std::to_string(model.params.size()) +
                                " parameters); use the max-diagonal norm");
  }
  const nn::SlotFilter slots = kernel_slots(model, scheme);
  Tape tape;
  const nn::ModelBinding w = nn::bind_model(tape, model, slots);
  const PhysicsTerms t = physics_terms(tape, w, s, b, spec, true);
  std::vector<Var> rows;
  if (!b.ic.empty()) rows.push_back(t.ic);
  for (const auto& g : t.bc) rows.push_back(g);
  if (!b.res.empty()) rows.push_back(t.res);
  Matrix jac(model.params.size(), constraints);
  Index col = 0;
  for (const Var& r : rows) {
    tape.backward(r, diff::GradMode::per_column);
    jac.middleCols(col, r.cols()) = tape.column_gradients(model.params, r.cols());
    col += r.cols();
  }
  if (scheme == Scheme::ck) {
    for (std::size_t i = 0; i < model.params.layout().num_slots(); ++i) {
      if (!slots(i)) jac.middleRows(model.params.layout().slot(i).offset, model.params.layout().slot(i).size()).setZero();
    }
  }
  const Matrix h = jac.transpose() * jac;
  return h.cwiseAbs().rowwise().sum().maxCoeff();
}

// ------------------------------------------------------------------- Adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay_rate = 0.9;  // lr multiplier per decay_steps
  int decay_steps = 2000;

  double rate(std::int64_t step) const {
    return lr * std::pow(decay_rate, static_cast<double>(step) / static_cast<double>(decay_steps));
  }
};

struct AdamState {
  Vector m, v;
  std::int64_t step = 0;
  std::int64_t skipped = 0;

  explicit AdamState(Index n = 0) : m(Vector::Zero(n)), v(Vector::Zero(n)) {}
};

/// One bias-corrected Adam step at the scheduled rate. Returns false (and
/// leaves everything untouched) when the gradient is not finite.
inline bool adam_step(ParamVector& params, const Vector& grad, AdamState& st, const AdamConfig& cfg) {
  if (grad.size() != params.size() || st.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: gradient or state layout does not match parameters");
  }
  if (!grad.allFinite()) {
    ++st.skipped;
    return false;
  }
  const double lr = cfg.rate(st.step);
  ++st.step;
  st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * grad;
  st.v = cfg.beta2 * st.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  params.values().array() -= lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + cfg.eps);
  return true;
}

// ------------------------------------------------------------ training loop

struct TrainOptions {
  int steps = 20000;
  Index batch = 768;  // points per step; physics batches split evenly by role
  AdamConfig adam;
  Scheme scheme = Scheme::ntk;
  double alpha = 0.5;
  int refresh_period = 1000;
  KernelNorm norm = KernelNorm::max_diagonal;
  std::uint64_t seed = 0;
  int log_every = 100;
  bool verbose = false;
};

struct LogRow {
  std::int64_t step = 0;
  double loss = 0.0;
  double loss_ic = 0.0, loss_bc = 0.0, loss_res = 0.0, loss_data = 0.0;
  double lambda_min = 1.0, lambda_median = 1.0, lambda_max = 1.0;
  double lr = 0.0;
  double elapsed = 0.0;
};

struct TrainingLog {
  std::vector<LogRow> rows;
  double seconds_total = 0.0;
  double seconds_kernel = 0.0;  // spent refreshing loss weights
  std::int64_t skipped_steps = 0;
  std::vector<std::string> warnings;

  static std::vector<std::string> header() {
    return {"step", "loss", "loss_ic", "loss_bc", "loss_res", "loss_data", "lambda_min", "lambda_median", "lambda_max",
            "lr", "elapsed_s"};
  }

  /// CSV body; `with_timing = false` blanks the wall-clock column so logs of
  /// identical runs compare byte for byte.
  std::string to_csv(bool with_timing = true) const {
    std::string out = csv_row(header()) + '\n';
    for (const LogRow& r : rows) {
      std::vector<std::string> f{std::to_string(r.step), format_double(r.loss), format_double(r.loss_ic),
                                 format_double(r.loss_bc), format_double(r.loss_res), format_double(r.loss_data),
                                 format_double(r.lambda_min), format_double(r.lambda_median), format_double(r.lambda_max),
                                 format_double(r.lr), with_timing ? format_double(r.elapsed) : std::string("")};
      out += csv_row(f) + '\n';
    }
    return out;
  }
};

namespace detail {

inline void lambda_stats(const Vector& lam, LogRow& r) {
  std::vector<double> v(lam.data(), lam.data() + lam.size());
  std::sort(v.begin(), v.end());
  r.lambda_min = v.front();
  r.lambda_max = v.back();
  r.lambda_median = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void check_inputs(const nn::DeepOnetModel& model, Index sensors) {
  if (model.sensors() != sensors) {
    throw std::invalid_argument("train: model expects " + std::to_string(model.sensors()) + " sensors, data has " +
                                std::to_string(sensors));
  }
}

}  // namespace detail

struct PhysicsResult {
  nn::DeepOnetModel model;
  TrainingLog log;
  WeightState weights;
};

/// Physics-informed training from `init` (random or transferred). The
/// model's step counter keeps counting across transfers.
inline PhysicsResult train_physics(nn::DeepOnetModel init, const PhysicsSet& set, const PdeSpec& spec,
                                   const TrainOptions& opt) {
  detail::check_inputs(init, set.u.rows());
  if (opt.steps < 0 || opt.batch < 1) throw std::invalid_argument("train: steps >= 0 and batch >= 1 required");
  if (opt.scheme != Scheme::fixed && opt.refresh_period < 1) throw std::invalid_argument("train: refresh period must be >= 1");
  PhysicsResult r{std::move(init), {}, WeightState::ones(set, opt.scheme, opt.alpha, opt.refresh_period, opt.norm)};
  nn::DeepOnetModel& model = r.model;
  model.pde_tag = spec.tag();
  AdamState adam(model.params.size());
  Rng rng(derive_seed(opt.seed, 0x747261696e));
  const auto t0 = std::chrono::steady_clock::now();
  const Batch everything = full_batch(set);
  for (int step = 0; step <= opt.steps; ++step) {
    if (opt.scheme != Scheme::fixed && step < opt.steps && step % opt.refresh_period == 0) {
      const auto tk = std::chrono::steady_clock::now();
      const RoleVectors diag = kernel_diag(model, set, everything, spec, opt.scheme);
      std::optional<double> norm;
      if (opt.norm == KernelNorm::row_sum) norm = kernel_row_sum_norm(model, set, everything, spec, opt.scheme);
      const WeightUpdate u = update_weights(r.weights.lambda.flat(), diag.flat(), opt.alpha, norm);
      if (!u.warning.empty()) {
        r.log.warnings.push_back("step " + std::to_string(step) + ": " + u.warning);
        if (opt.verbose) std::cerr << "warning: " << r.log.warnings.back() << '\n';
      }
      r.weights.lambda.assign(u.lambda);
      r.log.seconds_kernel += detail::seconds_since(tk);
    }
    const Batch batch = sample_batch(set, opt.batch, rng);
    Tape tape;
    const nn::ModelBinding w = nn::bind_model(tape, model);
    const PhysicsLoss loss = physics_loss(tape, w, set, batch, spec, r.weights.lambda);
    const bool log_now = step % opt.log_every == 0 || step == opt.steps;
    if (log_now) {
      LogRow row;
      row.step = model.step;
      row.loss = loss.total.value()(0, 0);
      row.loss_ic = loss.ic;
      row.loss_bc = loss.bc;
      row.loss_res = loss.res;
      detail::lambda_stats(r.weights.lambda.flat(), row);
      row.lr = opt.adam.rate(adam.step);
      row.elapsed = detail::seconds_since(t0);
      r.log.rows.push_back(row);
      if (opt.verbose) {
        std::cerr << "step " << row.step << " loss " << row.loss << " (ic " << row.loss_ic << ", bc " << row.loss_bc
                  << ", res " << row.loss_res << ") lambda max " << row.lambda_max << '\n';
      }
    }
    if (step == opt.steps) break;
    const ParamVector g = diff::param_gradient(loss.total, model.params);
    adam_step(model.params, g.values(), adam, opt.adam);
    ++model.step;
  }
  r.log.skipped_steps = adam.skipped;
  r.log.seconds_total = detail::seconds_since(t0);
  return r;
}

struct DataResult {
  nn::DeepOnetModel model;
  TrainingLog log;
};

inline DataResult train_data(nn::DeepOnetModel init, const DataSet& data, const TrainOptions& opt,
                             const std::string& pde_tag = {}) {
  detail::check_inputs(init, data.u.rows());
  if (data.size() < 1) throw std::invalid_argument("train: empty data set");
  DataResult r{std::move(init), {}};
  nn::DeepOnetModel& model = r.model;
  if (!pde_tag.empty()) model.pde_tag = pde_tag;
  AdamState adam(model.params.size());
  Rng rng(derive_seed(opt.seed, 0x64617461));
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Index> idx(static_cast<std::size_t>(opt.batch));
  for (int step = 0; step <= opt.steps; ++step) {
    for (auto& i : idx) i = static_cast<Index>(rng.index(static_cast<std::size_t>(data.size())));
    Tape tape;
    const nn::ModelBinding w = nn::bind_model(tape, model);
    const Var loss = data_loss(tape, w, data, idx);
    if (step % opt.log_every == 0 || step == opt.steps) {
      LogRow row;
      row.step = model.step;
      row.loss = row.loss_data = loss.value()(0, 0);
      row.lr = opt.adam.rate(adam.step);
      row.elapsed = detail::seconds_since(t0);
      r.log.rows.push_back(row);
      if (opt.verbose) std::cerr << "step " << row.step << " data loss " << row.loss << '\n';
    }
    if (step == opt.steps) break;
    adam_step(model.params, diff::param_gradient(loss, model.params).values(), adam, opt.adam);
    ++model.step;
  }
  r.log.skipped_steps = adam.skipped;
  r.log.seconds_total = detail::seconds_since(t0);
  return r;
}

}  // namespace deeponet::training
