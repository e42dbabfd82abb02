#pragma once

#include "deeponet/diffkit.hpp"

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace deeponet::nn {

using diff::Index;
using diff::Matrix;
using diff::ParamLayout;
using diff::ParamVector;
using diff::TaylorValue;
using diff::Var;

enum class Variant { plain, modified };

inline std::string to_string(Variant v) { return v == Variant::plain ? "plain" : "modified"; }

inline Variant variant_from_string(const std::string& s) {
  if (s == "plain") return Variant::plain;
  if (s == "modified") return Variant::modified;
  throw std::invalid_argument("unknown MLP variant '" + s + "'");
}

/// Layer widths (input, hidden..., output) of a tanh MLP with a linear last layer.
///
/// The modified variant adds two encoders U, V of hidden width fed by the input
/// and mixes them in every hidden layer: H <- (1 - Z) * U + Z * V with
/// Z = tanh(W H + b). All its hidden widths must therefore agree.
struct MlpSpec {
  std::vector<Index> widths;
  Variant variant = Variant::plain;

  /// `depth` counts weight layers: widths = {in, width x depth}.
  static MlpSpec uniform(Index in, Index width, int depth, Variant variant = Variant::plain) {
    MlpSpec s;
    s.widths.push_back(in);
    for (int i = 0; i < depth; ++i) s.widths.push_back(width);
    s.variant = variant;
    return s;
  }

  Index input_width() const { return widths.front(); }
  Index output_width() const { return widths.back(); }
  int num_layers() const { return static_cast<int>(widths.size()) - 1; }

  void validate() const {
    if (widths.size() < 3) throw std::invalid_argument("MlpSpec: at least one hidden layer is required");
    for (Index w : widths) {
      if (w < 1) throw std::invalid_argument("MlpSpec: all widths must be >= 1");
    }
    if (variant == Variant::modified) {
      for (std::size_t k = 1; k + 1 < widths.size(); ++k) {
        if (widths[k] != widths[1]) throw std::invalid_argument("MlpSpec: modified variant needs equal hidden widths");
      }
    }
  }

  Index parameter_count() const {
    Index n = 0;
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) n += widths[k] * widths[k + 1] + widths[k + 1];
    if (variant == Variant::modified) n += 2 * (widths[0] * widths[1] + widths[1]);
    return n;
  }

  bool operator==(const MlpSpec&) const = default;
};

/// Slot indices of one MLP inside a model layout.
struct MlpSlots {
  std::vector<std::size_t> weight, bias;
  std::size_t enc_u_w = ParamLayout::npos, enc_u_b = ParamLayout::npos;
  std::size_t enc_v_w = ParamLayout::npos, enc_v_b = ParamLayout::npos;
};

inline MlpSlots append_layout(ParamLayout& layout, const MlpSpec& spec, const std::string& prefix) {
  spec.validate();
  MlpSlots s;
  if (spec.variant == Variant::modified) {
    s.enc_u_w = layout.add(prefix + ".enc_u.W", spec.widths[1], spec.widths[0]);
    s.enc_u_b = layout.add(prefix + ".enc_u.b", spec.widths[1], 1);
    s.enc_v_w = layout.add(prefix + ".enc_v.W", spec.widths[1], spec.widths[0]);
    s.enc_v_b = layout.add(prefix + ".enc_v.b", spec.widths[1], 1);
  }
  for (int k = 0; k < spec.num_layers(); ++k) {
    const std::string l = prefix + ".L" + std::to_string(k);
    s.weight.push_back(layout.add(l + ".W", spec.widths[k + 1], spec.widths[k]));
    s.bias.push_back(layout.add(l + ".b", spec.widths[k + 1], 1));
  }
  return s;
}

inline MlpSlots find_slots(const ParamLayout& layout, const MlpSpec& spec, const std::string& prefix) {
  MlpSlots s;
  if (spec.variant == Variant::modified) {
    s.enc_u_w = layout.at(prefix + ".enc_u.W");
    s.enc_u_b = layout.at(prefix + ".enc_u.b");
    s.enc_v_w = layout.at(prefix + ".enc_v.W");
    s.enc_v_b = layout.at(prefix + ".enc_v.b");
  }
  for (int k = 0; k < spec.num_layers(); ++k) {
    const std::string l = prefix + ".L" + std::to_string(k);
    s.weight.push_back(layout.at(l + ".W"));
    s.bias.push_back(layout.at(l + ".b"));
  }
  return s;
}

/// Weights of one MLP in whatever carrier the forward pass runs on: tape
/// leaves (Var) for differentiable passes, plain matrices for fast evaluation.
template <class W>
struct MlpWeights {
  Variant variant = Variant::plain;
  std::vector<W> weight, bias;
  W enc_u_w{}, enc_u_b{}, enc_v_w{}, enc_v_b{};
};

using SlotFilter = std::function<bool(std::size_t)>;

inline MlpWeights<Var> bind_weights(diff::Tape& tape, const ParamVector& params, const MlpSpec& spec,
                                    const MlpSlots& slots, const SlotFilter& trainable = {}) {
  auto leaf = [&](std::size_t slot) { return tape.parameter(params, slot, !trainable || trainable(slot)); };
  MlpWeights<Var> w;
  w.variant = spec.variant;
  if (spec.variant == Variant::modified) {
    w.enc_u_w = leaf(slots.enc_u_w);
    w.enc_u_b = leaf(slots.enc_u_b);
    w.enc_v_w = leaf(slots.enc_v_w);
    w.enc_v_b = leaf(slots.enc_v_b);
  }
  for (std::size_t k = 0; k < slots.weight.size(); ++k) {
    w.weight.push_back(leaf(slots.weight[k]));
    w.bias.push_back(leaf(slots.bias[k]));
  }
  return w;
}

inline MlpWeights<Matrix> dense_weights(const ParamVector& params, const MlpSpec& spec, const MlpSlots& slots) {
  MlpWeights<Matrix> w;
  w.variant = spec.variant;
  if (spec.variant == Variant::modified) {
    w.enc_u_w = params.slot(slots.enc_u_w);
    w.enc_u_b = params.slot(slots.enc_u_b);
    w.enc_v_w = params.slot(slots.enc_v_w);
    w.enc_v_b = params.slot(slots.enc_v_b);
  }
  for (std::size_t k = 0; k < slots.weight.size(); ++k) {
    w.weight.emplace_back(params.slot(slots.weight[k]));
    w.bias.emplace_back(params.slot(slots.bias[k]));
  }
  return w;
}

// Dense overloads so the same forward template runs on plain matrices.
inline Matrix affine(const Matrix& w, const Matrix& x, const Matrix& b) {
  Matrix y = w * x;
  y.colwise() += b.col(0);
  return y;
}
inline Matrix tanh(const Matrix& x) { return x.array().tanh().matrix(); }
inline Matrix add(const Matrix& a, const Matrix& b) { return a + b; }
inline Matrix sub(const Matrix& a, const Matrix& b) { return a - b; }
inline Matrix mul(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b); }

using diff::add;
using diff::affine;
using diff::mul;
using diff::sub;
using diff::tanh;

/// Forward pass. T is Var, TaylorValue or Matrix; rows are features and
/// columns are batch entries.
template <class W, class T>
T mlp_forward(const MlpWeights<W>& w, const T& input) {
  const std::size_t last = w.weight.size() - 1;
  if (w.variant == Variant::plain) {
    T h = input;
    for (std::size_t k = 0; k < last; ++k) h = tanh(affine(w.weight[k], h, w.bias[k]));
    return affine(w.weight[last], h, w.bias[last]);
  }
  const T u = tanh(affine(w.enc_u_w, input, w.enc_u_b));
  const T v = tanh(affine(w.enc_v_w, input, w.enc_v_b));
  const T v_minus_u = sub(v, u);
  T h = input;
  for (std::size_t k = 0; k < last; ++k) {
    const T z = tanh(affine(w.weight[k], h, w.bias[k]));
    h = add(u, mul(z, v_minus_u));
  }
  return affine(w.weight[last], h, w.bias[last]);
}

/// Checks the input width before running the forward pass.
template <class W, class T>
T mlp_forward(const MlpSpec& spec, const MlpWeights<W>& w, const T& input) {
  const Index rows = input.rows();
  if (rows != spec.input_width()) {
    throw std::invalid_argument("mlp_forward: input width " + std::to_string(rows) + " does not match spec width " +
                                std::to_string(spec.input_width()));
  }
  return mlp_forward(w, input);
}

}  // namespace deeponet::nn
