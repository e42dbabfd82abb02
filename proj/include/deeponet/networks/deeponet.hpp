#pragma once

#include "deeponet/networks/mlp.hpp"
#include "deeponet/util/random.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace deeponet::nn {

/// Branch net over sensor values, trunk net over (x, t), merged by a dot
/// product over their shared output width.
struct DeepOnetModel {
  MlpSpec branch;
  MlpSpec trunk;
  ParamVector params;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::string pde_tag;

  Index sensors() const { return branch.input_width(); }
  Index width() const { return trunk.output_width(); }
  MlpSlots branch_slots() const { return find_slots(params.layout(), branch, "branch"); }
  MlpSlots trunk_slots() const { return find_slots(params.layout(), trunk, "trunk"); }
};

inline void validate_architecture(const MlpSpec& branch, const MlpSpec& trunk) {
  branch.validate();
  trunk.validate();
  if (branch.output_width() != trunk.output_width()) {
    throw std::invalid_argument("DeepONet: branch output width " + std::to_string(branch.output_width()) +
                                " differs from trunk output width " + std::to_string(trunk.output_width()));
  }
  if (trunk.input_width() != 2) throw std::invalid_argument("DeepONet: trunk input must be (x, t)");
}

inline ParamLayout make_layout(const MlpSpec& branch, const MlpSpec& trunk) {
  ParamLayout layout;
  append_layout(layout, branch, "branch");
  append_layout(layout, trunk, "trunk");
  return layout;
}

inline Index parameter_count(const MlpSpec& branch, const MlpSpec& trunk) {
  return branch.parameter_count() + trunk.parameter_count();
}

/// Glorot-uniform weights, zero biases, deterministic in `seed`.
inline DeepOnetModel init_model(const MlpSpec& branch, const MlpSpec& trunk, std::uint64_t seed) {
  validate_architecture(branch, trunk);
  DeepOnetModel m{branch, trunk, ParamVector(make_layout(branch, trunk)), seed, 0, {}};
  Rng rng(seed);
  for (std::size_t i = 0; i < m.params.layout().num_slots(); ++i) {
    const diff::Slot& s = m.params.layout().slot(i);
    if (s.cols == 1 && s.name.ends_with(".b")) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
    auto w = m.params.slot(i);
    for (Index c = 0; c < s.cols; ++c) {
      for (Index r = 0; r < s.rows; ++r) w(r, c) = rng.uniform(-limit, limit);
    }
  }
  return m;
}

/// True for the weight and bias of the last layer of either network.
inline bool is_final_layer_slot(const DeepOnetModel& model, std::size_t slot) {
  const std::string& name = model.params.layout().slot(slot).name;
  const std::string b = "branch.L" + std::to_string(model.branch.num_layers() - 1) + ".";
  const std::string t = "trunk.L" + std::to_string(model.trunk.num_layers() - 1) + ".";
  return name.starts_with(b) || name.starts_with(t);
}

/// Branch outputs for a set of input functions (m x F sensors -> w x F).
inline Matrix branch_forward(const DeepOnetModel& model, const Matrix& sensors) {
  return mlp_forward(model.branch, dense_weights(model.params, model.branch, model.branch_slots()), sensors);
}

/// Trunk outputs at coordinates (2 x Q rows x, t -> w x Q).
inline Matrix trunk_forward(const DeepOnetModel& model, const Matrix& coords) {
  return mlp_forward(model.trunk, dense_weights(model.params, model.trunk, model.trunk_slots()), coords);
}

/// G(u)(y) for every input function (columns of `sensors`) and every
/// coordinate (columns of `coords`): an F x Q matrix.
inline Matrix predict(const DeepOnetModel& model, const Matrix& sensors, const Matrix& coords) {
  return branch_forward(model, sensors).transpose() * trunk_forward(model, coords);
}

inline double deeponet_eval(const DeepOnetModel& model, std::span<const double> u_sensors, double x, double t) {
  if (static_cast<Index>(u_sensors.size()) != model.sensors()) {
    throw std::invalid_argument("deeponet_eval: expected " + std::to_string(model.sensors()) + " sensor values, got " +
                                std::to_string(u_sensors.size()));
  }
  const Matrix u = Eigen::Map<const Matrix>(u_sensors.data(), model.sensors(), 1);
  Matrix y(2, 1);
  y << x, t;
  return predict(model, u, y)(0, 0);
}

/// Tape leaves for both networks. `trainable` selects which slots carry
/// gradients; the rest are recorded as constants.
struct ModelBinding {
  MlpWeights<Var> branch;
  MlpWeights<Var> trunk;
};

inline ModelBinding bind_model(diff::Tape& tape, const DeepOnetModel& model, const SlotFilter& trainable = {}) {
  return {bind_weights(tape, model.params, model.branch, model.branch_slots(), trainable),
          bind_weights(tape, model.params, model.trunk, model.trunk_slots(), trainable)};
}

}  // namespace deeponet::nn
