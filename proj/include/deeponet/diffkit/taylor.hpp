#pragma once

#include "deeponet/diffkit/ops.hpp"

#include <algorithm>
#include <concepts>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace deeponet::diff {

inline constexpr int kMaxTaylorOrder = 3;

/// Truncated univariate Taylor expansion along one coordinate direction.
///
/// Coefficient j holds f^(j)/j! for a whole batch (same shape for every j).
/// Coefficients are tape nodes, so each one stays differentiable with respect
/// to the parameters that produced it.
class TaylorValue {
 public:
  TaylorValue() = default;
  explicit TaylorValue(std::vector<Var> coeffs) : c_(std::move(coeffs)) {
    if (c_.empty()) throw std::invalid_argument("TaylorValue: needs at least the value coefficient");
    if (order() > kMaxTaylorOrder) {
      throw std::invalid_argument("TaylorValue: order " + std::to_string(order()) + " exceeds the supported maximum of " +
                                  std::to_string(kMaxTaylorOrder));
    }
    for (const Var& v : c_) {
      if (&v.tape() != &c_.front().tape() || v.rows() != c_.front().rows() || v.cols() != c_.front().cols()) {
        throw std::invalid_argument("TaylorValue: coefficients must share tape and shape");
      }
    }
  }

  int order() const { return static_cast<int>(c_.size()) - 1; }
  const Var& operator[](int j) const { return c_.at(static_cast<std::size_t>(j)); }
  const Var& value() const { return c_.front(); }
  const std::vector<Var>& coeffs() const { return c_; }
  Tape& tape() const { return c_.front().tape(); }
  Index rows() const { return c_.front().rows(); }
  Index cols() const { return c_.front().cols(); }

  /// j-th directional derivative values, j! * c_j.
  Matrix derivative(int j) const {
    double fact = 1.0;
    for (int i = 2; i <= j; ++i) fact *= i;
    return (*this)[j].value() * fact;
  }

 private:
  std::vector<Var> c_;
};

namespace detail {

inline int common_order(const TaylorValue& a, const TaylorValue& b) { return std::min(a.order(), b.order()); }

struct Term {
  double coef;
  Var lhs;
  Var rhs;
};

/// sum_i coef_i * lhs_i .* rhs_i, built from registered primitives.
inline Var weighted_products(std::initializer_list<Term> terms) {
  Var acc;
  for (const Term& term : terms) {
    Var p = mul(term.lhs, term.rhs);
    if (term.coef != 1.0) p = scale(p, term.coef);
    acc = acc.valid() ? add(acc, p) : p;
  }
  return acc;
}

inline Var weighted_products(const std::vector<Term>& terms) {
  Var acc;
  for (const Term& term : terms) {
    Var p = mul(term.lhs, term.rhs);
    if (term.coef != 1.0) p = scale(p, term.coef);
    acc = acc.valid() ? add(acc, p) : p;
  }
  return acc;
}

}  // namespace detail

inline TaylorValue add(const TaylorValue& a, const TaylorValue& b) {
  std::vector<Var> c;
  for (int j = 0; j <= detail::common_order(a, b); ++j) c.push_back(add(a[j], b[j]));
  return TaylorValue(std::move(c));
}

inline TaylorValue sub(const TaylorValue& a, const TaylorValue& b) {
  std::vector<Var> c;
  for (int j = 0; j <= detail::common_order(a, b); ++j) c.push_back(sub(a[j], b[j]));
  return TaylorValue(std::move(c));
}

/// Adds a quantity that is constant along the expansion direction.
inline TaylorValue add(const TaylorValue& a, const Var& b) {
  std::vector<Var> c = a.coeffs();
  c[0] = add(c[0], b);
  return TaylorValue(std::move(c));
}

inline TaylorValue scale(const TaylorValue& a, double s) {
  std::vector<Var> c;
  for (const Var& v : a.coeffs()) c.push_back(scale(v, s));
  return TaylorValue(std::move(c));
}

inline TaylorValue shift(const TaylorValue& a, double s) {
  std::vector<Var> c = a.coeffs();
  c[0] = shift(c[0], s);
  return TaylorValue(std::move(c));
}

/// Cauchy product truncated at the common order.
inline TaylorValue mul(const TaylorValue& a, const TaylorValue& b) {
  std::vector<Var> c;
  for (int j = 0; j <= detail::common_order(a, b); ++j) {
    std::vector<detail::Term> terms;
    for (int i = 0; i <= j; ++i) terms.push_back({1.0, a[i], b[j - i]});
    c.push_back(detail::weighted_products(terms));
  }
  return TaylorValue(std::move(c));
}

/// W x + b: the bias only shifts the value coefficient.
inline TaylorValue affine(const Var& w, const TaylorValue& x, const Var& b) {
  std::vector<Var> c;
  c.push_back(affine(w, x[0], b));
  for (int j = 1; j <= x.order(); ++j) c.push_back(matmul(w, x[j]));
  return TaylorValue(std::move(c));
}

/// tanh through the ODE y' = (1 - y^2) x', with z = 1 - y^2 expanded alongside:
///   j y_j = sum_{i=1..j} i x_i z_{j-i},   z_j = -sum_{i=0..j} y_i y_{j-i}.
inline TaylorValue tanh(const TaylorValue& x) {
  const int order = x.order();
  std::vector<Var> y{tanh(x[0])};
  std::vector<Var> z{shift(scale(mul(y[0], y[0]), -1.0), 1.0)};
  for (int j = 1; j <= order; ++j) {
    std::vector<detail::Term> terms;
    for (int i = 1; i <= j; ++i) terms.push_back({static_cast<double>(i) / j, x[i], z[j - i]});
    y.push_back(detail::weighted_products(terms));
    if (j == order) break;
    std::vector<detail::Term> zt;
    for (int i = 0; i <= j; ++i) zt.push_back({-1.0, y[i], y[j - i]});
    z.push_back(detail::weighted_products(zt));
  }
  return TaylorValue(std::move(y));
}

/// exp through y' = y x':  j y_j = sum_{i=1..j} i x_i y_{j-i}.
inline TaylorValue exp(const TaylorValue& x) {
  std::vector<Var> y{exp(x[0])};
  for (int j = 1; j <= x.order(); ++j) {
    std::vector<detail::Term> terms;
    for (int i = 1; i <= j; ++i) terms.push_back({static_cast<double>(i) / j, x[i], y[j - i]});
    y.push_back(detail::weighted_products(terms));
  }
  return TaylorValue(std::move(y));
}

namespace detail {

inline std::pair<std::vector<Var>, std::vector<Var>> sin_cos_series(const TaylorValue& x) {
  std::vector<Var> s{sin(x[0])};
  std::vector<Var> c{cos(x[0])};
  for (int j = 1; j <= x.order(); ++j) {
    std::vector<Term> st, ct;
    for (int i = 1; i <= j; ++i) {
      st.push_back({static_cast<double>(i) / j, x[i], c[j - i]});
      ct.push_back({-static_cast<double>(i) / j, x[i], s[j - i]});
    }
    s.push_back(weighted_products(st));
    c.push_back(weighted_products(ct));
  }
  return {std::move(s), std::move(c)};
}

}  // namespace detail

inline TaylorValue sin(const TaylorValue& x) { return TaylorValue(detail::sin_cos_series(x).first); }
inline TaylorValue cos(const TaylorValue& x) { return TaylorValue(detail::sin_cos_series(x).second); }

/// Column-wise inner product with a factor that does not vary along the direction.
inline TaylorValue dot(const Var& fixed, const TaylorValue& x) {
  std::vector<Var> c;
  for (const Var& v : x.coeffs()) c.push_back(dot(fixed, v));
  return TaylorValue(std::move(c));
}

inline TaylorValue select_row(const TaylorValue& x, Index r) {
  std::vector<Var> c;
  for (const Var& v : x.coeffs()) c.push_back(select_row(v, r));
  return TaylorValue(std::move(c));
}

/// Quantity that does not depend on the expansion variable.
inline TaylorValue taylor_constant(const Var& v, int order) {
  std::vector<Var> c{v};
  for (int j = 1; j <= order; ++j) c.push_back(v.tape().constant(Matrix::Zero(v.rows(), v.cols())));
  return TaylorValue(std::move(c));
}

/// Seeds the line base + eps * direction as a TaylorValue of the given order.
/// `base` is d x B; `direction` is d x 1 (shared) or d x B.
inline TaylorValue taylor_seed(Tape& tape, const Matrix& base, const Matrix& direction, int order) {
  if (order < 0 || order > kMaxTaylorOrder) {
    throw std::invalid_argument("taylor_eval: unsupported order " + std::to_string(order) + " (max " +
                                std::to_string(kMaxTaylorOrder) + ")");
  }
  if (direction.rows() != base.rows() || (direction.cols() != 1 && direction.cols() != base.cols())) {
    throw std::invalid_argument("taylor_eval: direction shape does not match base point");
  }
  std::vector<Var> c{tape.constant(base)};
  if (order >= 1) {
    Matrix d = direction.cols() == 1 ? Matrix(direction.col(0).replicate(1, base.cols())) : direction;
    c.push_back(tape.constant(std::move(d)));
  }
  for (int j = 2; j <= order; ++j) c.push_back(tape.constant(Matrix::Zero(base.rows(), base.cols())));
  return TaylorValue(std::move(c));
}

/// Forward network callable accepted by taylor_eval. Only functions written in
/// terms of the registered TaylorValue primitives can satisfy it.
template <class F>
concept TaylorForward = std::invocable<F, const TaylorValue&> &&
                        std::same_as<std::invoke_result_t<F, const TaylorValue&>, TaylorValue>;

/// c_j = (1/j!) d^j/de^j f(base + e * direction) at e = 0, for j = 0..order.
template <TaylorForward F>
TaylorValue taylor_eval(Tape& tape, F&& f, const Matrix& base, const Matrix& direction, int order) {
  TaylorValue out = std::forward<F>(f)(taylor_seed(tape, base, direction, order));
  if (out.order() < order) throw std::logic_error("taylor_eval: forward lowered the expansion order");
  return out;
}

}  // namespace deeponet::diff
