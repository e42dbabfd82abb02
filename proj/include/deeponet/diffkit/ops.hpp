#pragma once

#include "deeponet/diffkit/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

// Registered primitives. Every differentiable quantity in the library is built
// from these; each one records its value and a local backward rule.

namespace deeponet::diff {

namespace detail {

inline void require_same_tape(const Var& a, const Var& b, const char* op) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  require_same_tape(a, b, op);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

inline void reject_in_per_column(const Tape& t, const char* op) {
  if (t.mode() == GradMode::per_column) {
    throw std::logic_error(std::string(op) + ": mixes columns, not allowed in a per-column sweep");
  }
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  Tape& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.adjoint(self));
    t.accumulate(ib, t.adjoint(self));
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "sub");
  Tape& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.adjoint(self));
    t.accumulate(ib, -t.adjoint(self));
  });
}

/// Elementwise (Hadamard) product.
inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "mul");
  Tape& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value().cwiseProduct(b.value()), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

inline Var scale(const Var& a, double c) {
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  return t.push(a.value() * c, {ia}, [ia, c](Tape& t, std::size_t self) { t.accumulate(ia, t.adjoint(self) * c); });
}

/// a + c elementwise.
inline Var shift(const Var& a, double c) {
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  return t.push((a.value().array() + c).matrix(), {ia},
                [ia](Tape& t, std::size_t self) { t.accumulate(ia, t.adjoint(self)); });
}

inline Var tanh(const Var& a) {
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  return t.push(a.value().array().tanh().matrix(), {ia}, [ia](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    t.accumulate(ia, (t.adjoint(self).array() * (1.0 - y.array().square())).matrix());
  });
}

inline Var sin(const Var& a) {
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  return t.push(a.value().array().sin().matrix(), {ia}, [ia](Tape& t, std::size_t self) {
    t.accumulate(ia, (t.adjoint(self).array() * t.value(ia).array().cos()).matrix());
  });
}

inline Var cos(const Var& a) {
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  return t.push(a.value().array().cos().matrix(), {ia}, [ia](Tape& t, std::size_t self) {
    t.accumulate(ia, (-t.adjoint(self).array() * t.value(ia).array().sin()).matrix());
  });
}

inline Var exp(const Var& a) {
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  return t.push(a.value().array().exp().matrix(), {ia}, [ia](Tape& t, std::size_t self) {
    t.accumulate(ia, t.adjoint(self).cwiseProduct(t.value(self)));
  });
}

/// W x (matrix product, batch along columns of x).
inline Var matmul(const Var& w, const Var& x) {
  detail::require_same_tape(w, x, "matmul");
  if (w.cols() != x.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  Tape& t = w.tape();
  const std::size_t iw = w.id(), ix = x.id();
  Matrix y = w.value() * x.value();
  return t.push(std::move(y), {iw, ix}, [iw, ix](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    if (t.requires_grad(ix)) t.accumulate(ix, t.value(iw).transpose() * g);
    t.accumulate_weight(iw, g, t.value(ix));
  });
}

/// W x + b, with the column vector b broadcast over the batch.
inline Var affine(const Var& w, const Var& x, const Var& b) {
  detail::require_same_tape(w, x, "affine");
  detail::require_same_tape(w, b, "affine");
  if (w.cols() != x.rows()) throw std::invalid_argument("affine: input width does not match weight columns");
  if (b.cols() != 1 || b.rows() != w.rows()) throw std::invalid_argument("affine: bias must be a column of output width");
  Tape& t = w.tape();
  const std::size_t iw = w.id(), ix = x.id(), ib = b.id();
  Matrix y = w.value() * x.value();
  y.colwise() += b.value().col(0);
  return t.push(std::move(y), {iw, ix, ib}, [iw, ix, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    if (t.requires_grad(ix)) t.accumulate(ix, t.value(iw).transpose() * g);
    t.accumulate_weight(iw, g, t.value(ix));
    t.accumulate_bias(ib, g);
  });
}

/// Column-wise inner product: out(0,k) = sum_r a(r,k) b(r,k).
inline Var dot(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "dot");
  Tape& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  Matrix y = a.value().cwiseProduct(b.value()).colwise().sum();
  return t.push(std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self).row(0).array();
    if (t.requires_grad(ia)) t.accumulate(ia, (t.value(ib).array().rowwise() * g).matrix());
    if (t.requires_grad(ib)) t.accumulate(ib, (t.value(ia).array().rowwise() * g).matrix());
  });
}

/// Sum of every entry, giving a 1x1 node.
inline Var sum(const Var& a) {
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  return t.push(Matrix::Constant(1, 1, a.value().sum()), {ia}, [ia](Tape& t, std::size_t self) {
    detail::reject_in_per_column(t, "sum");
    const Matrix& v = t.value(ia);
    t.accumulate(ia, Matrix::Constant(v.rows(), v.cols(), t.adjoint(self)(0, 0)));
  });
}

inline Var mean(const Var& a) {
  if (a.value().size() == 0) throw std::invalid_argument("mean: empty operand");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

/// out(:,k) = a(:, index[k]).
inline Var gather_cols(const Var& a, std::vector<Index> index) {
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  const Matrix& v = a.value();
  Matrix y(v.rows(), static_cast<Index>(index.size()));
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= v.cols()) throw std::out_of_range("gather_cols: column index out of range");
    y.col(static_cast<Index>(k)) = v.col(index[k]);
  }
  return t.push(std::move(y), {ia}, [ia, index = std::move(index)](Tape& t, std::size_t self) {
    detail::reject_in_per_column(t, "gather_cols");
    const Matrix& g = t.adjoint(self);
    Matrix acc = Matrix::Zero(t.value(ia).rows(), t.value(ia).cols());
    for (std::size_t k = 0; k < index.size(); ++k) acc.col(index[k]) += g.col(static_cast<Index>(k));
    t.accumulate(ia, acc);
  });
}

/// Row r of a, as a 1 x cols node.
inline Var select_row(const Var& a, Index r) {
  if (r < 0 || r >= a.rows()) throw std::out_of_range("select_row: row out of range");
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  return t.push(a.value().row(r), {ia}, [ia, r](Tape& t, std::size_t self) {
    Matrix acc = Matrix::Zero(t.value(ia).rows(), t.value(ia).cols());
    acc.row(r) = t.adjoint(self);
    t.accumulate(ia, acc);
  });
}

}  // namespace deeponet::diff
