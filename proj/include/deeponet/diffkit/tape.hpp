#pragma once

#include "deeponet/diffkit/params.hpp"

#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

namespace deeponet::diff {

class Tape;

/// Handle to a block of scalar nodes recorded on a Tape.
///
/// A Var is a rows x cols matrix of reals that were produced together by one
/// primitive. Columns conventionally index independent evaluation points, so a
/// single Var carries a whole batch through the network.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const {
    if (tape_ == nullptr) throw std::logic_error("Var: use of an unbound variable");
    return *tape_;
  }
  std::size_t id() const { return id_; }
  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// How adjoints of parameter leaves are collected during a backward sweep.
///
/// `accumulate` sums contributions into one gradient per parameter.
/// `per_column` keeps one gradient per output column, which is what the
/// per-constraint kernel diagonals need. It requires every recorded operation to
/// be column-separable and parameters to enter only through affine/matmul.
enum class GradMode { accumulate, per_column };

/// Records primitive operations and replays them backwards.
///
/// Nodes are appended in evaluation order; since inputs always precede outputs,
/// the reverse creation order is a fixed reverse topological order and the
/// accumulation sequence is identical on every run.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  Var constant_scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

  /// Leaf holding a copy of parameter slot `slot`. Frozen leaves behave as
  /// constants: no adjoint is propagated into them.
  Var parameter(const ParamVector& params, std::size_t slot, bool trainable = true) {
    bind_layout(params.layout());
    Node n;
    n.value = params.slot(slot);
    n.param_slot = slot;
    n.requires_grad = trainable;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  /// Appends the result of a primitive. The node needs a gradient iff any
  /// input does; otherwise the backward rule is dropped.
  Var push(Matrix value, std::initializer_list<std::size_t> inputs, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    for (std::size_t in : inputs) {
      if (in >= nodes_.size()) throw std::logic_error("Tape: input recorded after its consumer");
      n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  std::size_t size() const { return nodes_.size(); }
  const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool is_parameter(std::size_t id) const { return nodes_.at(id).param_slot != npos; }
  GradMode mode() const { return mode_; }

  template <class Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& contribution) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (mode_ == GradMode::per_column && n.param_slot != npos) {
      throw std::logic_error(
          "Tape: per-column gradients require parameters to enter through affine or matmul");
    }
    if (n.adjoint.size() == 0) {
      n.adjoint = contribution;
    } else {
      n.adjoint += contribution;
    }
  }

  /// Adjoint of W in Y = W X, either summed or split per column.
  void accumulate_weight(std::size_t w_id, const Matrix& out_adjoint, const Matrix& input) {
    Node& n = nodes_[w_id];
    if (!n.requires_grad) return;
    if (mode_ == GradMode::accumulate || n.param_slot == npos) {
      accumulate(w_id, out_adjoint * input.transpose());
      return;
    }
    const Index rows = n.value.rows();
    const Index cols = n.value.cols();
    const Index batch = out_adjoint.cols();
    if (n.column_grads.size() == 0) n.column_grads = Matrix::Zero(rows * cols, batch);
    for (Index k = 0; k < batch; ++k) {
      Eigen::Map<Matrix> g(n.column_grads.col(k).data(), rows, cols);
      g.noalias() += out_adjoint.col(k) * input.col(k).transpose();
    }
  }

  /// Adjoint of b in Y = W X + b 1^T.
  void accumulate_bias(std::size_t b_id, const Matrix& out_adjoint) {
    Node& n = nodes_[b_id];
    if (!n.requires_grad) return;
    if (mode_ == GradMode::accumulate || n.param_slot == npos) {
      accumulate(b_id, out_adjoint.rowwise().sum());
      return;
    }
    if (n.column_grads.size() == 0) n.column_grads = Matrix::Zero(n.value.rows(), out_adjoint.cols());
    n.column_grads += out_adjoint;
  }

  const Matrix& adjoint(std::size_t id) const { return nodes_.at(id).adjoint; }

  /// Reverse sweep from `root`. In accumulate mode the root must be 1x1; in
  /// per-column mode it must be a single row whose columns are independent.
  void backward(const Var& root, GradMode mode = GradMode::accumulate) {
    if (&root.tape() != this) throw std::logic_error("Tape::backward: root belongs to another tape");
    const Matrix& rv = value(root.id());
    if (mode == GradMode::accumulate && (rv.rows() != 1 || rv.cols() != 1)) {
      throw std::invalid_argument("Tape::backward: loss must be a scalar");
    }
    if (mode == GradMode::per_column && rv.rows() != 1) {
      throw std::invalid_argument("Tape::backward: per-column root must be a single row");
    }
    mode_ = mode;
    for (Node& n : nodes_) {
      n.adjoint.resize(0, 0);
      n.column_grads.resize(0, 0);
    }
    swept_ = true;
    Node& r = nodes_[root.id()];
    if (!r.requires_grad) return;
    r.adjoint = Matrix::Ones(rv.rows(), rv.cols());
    for (std::size_t id = root.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.backward || n.adjoint.size() == 0) continue;
      n.backward(*this, id);
    }
  }

  /// Summed parameter gradient after an accumulate-mode sweep, in the layout of
  /// the bound parameter vector. Unreached parameters are exactly zero.
  ParamVector parameter_gradient(const ParamVector& params) const {
    require_swept(GradMode::accumulate);
    check_layout(params.layout());
    ParamVector grad = params.zeros_like();
    for (const Node& n : nodes_) {
      if (n.param_slot == npos || n.adjoint.size() == 0) continue;
      grad.slot(n.param_slot) += n.adjoint;
    }
    return grad;
  }

  /// Per-column parameter gradients after a per-column sweep: a matrix with one
  /// column per root column and one row per parameter, in layout order.
  Matrix column_gradients(const ParamVector& params, Index columns) const {
    require_swept(GradMode::per_column);
    check_layout(params.layout());
    Matrix out = Matrix::Zero(params.size(), columns);
    for (const Node& n : nodes_) {
      if (n.param_slot == npos || n.column_grads.size() == 0) continue;
      const Slot& s = params.layout().slot(n.param_slot);
      out.middleRows(s.offset, s.size()) += n.column_grads;
    }
    return out;
  }

  /// Squared per-column gradient norms, restricted to the slots for which
  /// `include(slot)` is true. Avoids materialising the full Jacobian.
  template <class SlotFilter>
  Vector column_gradient_sq_norms(const ParamVector& params, Index columns, SlotFilter include) const {
    require_swept(GradMode::per_column);
    check_layout(params.layout());
    // Several leaves may alias one slot, so sum per slot before squaring.
    std::vector<Matrix> per_slot(params.layout().num_slots());
    for (const Node& n : nodes_) {
      if (n.param_slot == npos || n.column_grads.size() == 0) continue;
      if (!include(n.param_slot)) continue;
      Matrix& acc = per_slot[n.param_slot];
      if (acc.size() == 0) {
        acc = n.column_grads;
      } else {
        acc += n.column_grads;
      }
    }
    Vector out = Vector::Zero(columns);
    for (const Matrix& m : per_slot) {
      if (m.size() == 0) continue;
      out += m.colwise().squaredNorm().transpose();
    }
    return out;
  }

 private:
  struct Node {
    Matrix value;
    Matrix adjoint;
    Matrix column_grads;
    BackwardFn backward;
    std::size_t param_slot = npos;
    bool requires_grad = false;
  };

  void bind_layout(const ParamLayout& layout) {
    if (!has_layout_) {
      layout_ = layout;
      has_layout_ = true;
      return;
    }
    check_layout(layout);
  }

  void check_layout(const ParamLayout& layout) const {
    if (!has_layout_) return;
    if (layout.total() != layout_.total() || layout.num_slots() != layout_.num_slots()) {
      throw std::invalid_argument("Tape: parameter layout differs from the one bound to this tape");
    }
  }

  void require_swept(GradMode mode) const {
    if (!swept_ || mode_ != mode) throw std::logic_error("Tape: no backward sweep in the requested mode");
  }

  // deque keeps references to node values stable while the tape grows.
  std::deque<Node> nodes_;
  ParamLayout layout_;
  bool has_layout_ = false;
  bool swept_ = false;
  GradMode mode_ = GradMode::accumulate;
};

inline const Matrix& Var::value() const { return tape().value(id_); }

/// Gradient of a scalar loss with respect to every parameter in `params`.
inline ParamVector param_gradient(const Var& loss, const ParamVector& params) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("param_gradient: loss must be a scalar node");
  }
  loss.tape().backward(loss, GradMode::accumulate);
  return loss.tape().parameter_gradient(params);
}

}  // namespace deeponet::diff
