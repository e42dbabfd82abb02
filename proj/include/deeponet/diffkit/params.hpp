#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace deeponet::diff {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// One named block of a flat parameter vector, stored column-major.
struct Slot {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  Index offset = 0;

  Index size() const { return rows * cols; }
  bool operator==(const Slot&) const = default;
};

/// Ordered description of how a model's parameters are packed into one vector.
/// Slots are appended in construction order, so the layout is a pure function
/// of the architecture.
class ParamLayout {
 public:
  std::size_t add(std::string name, Index rows, Index cols) {
    if (rows < 1 || cols < 1) {
      throw std::invalid_argument("ParamLayout: slot '" + name + "' must have positive shape");
    }
    if (find(name) != npos) {
      throw std::invalid_argument("ParamLayout: duplicate slot '" + name + "'");
    }
    slots_.push_back(Slot{std::move(name), rows, cols, total_});
    total_ += rows * cols;
    return slots_.size() - 1;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t find(std::string_view name) const {
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      if (slots_[i].name == name) return i;
    }
    return npos;
  }

  std::size_t at(std::string_view name) const {
    const auto i = find(name);
    if (i == npos) throw std::out_of_range("ParamLayout: no slot named '" + std::string(name) + "'");
    return i;
  }

  const Slot& slot(std::size_t i) const { return slots_.at(i); }
  const std::vector<Slot>& slots() const { return slots_; }
  std::size_t num_slots() const { return slots_.size(); }
  Index total() const { return total_; }

  bool operator==(const ParamLayout&) const = default;

 private:
  std::vector<Slot> slots_;
  Index total_ = 0;
};

/// Flat vector of trainable reals together with its layout.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(ParamLayout layout)
      : layout_(std::move(layout)), values_(Vector::Zero(layout_.total())) {}
  ParamVector(ParamLayout layout, Vector values) : layout_(std::move(layout)), values_(std::move(values)) {
    if (values_.size() != layout_.total()) {
      throw std::invalid_argument("ParamVector: value count does not match layout");
    }
  }

  const ParamLayout& layout() const { return layout_; }
  const Vector& values() const { return values_; }
  Vector& values() { return values_; }
  Index size() const { return values_.size(); }

  Eigen::Map<Matrix> slot(std::size_t i) {
    const Slot& s = layout_.slot(i);
    return {values_.data() + s.offset, s.rows, s.cols};
  }
  Eigen::Map<const Matrix> slot(std::size_t i) const {
    const Slot& s = layout_.slot(i);
    return {values_.data() + s.offset, s.rows, s.cols};
  }
  Eigen::Map<Matrix> slot(std::string_view name) { return slot(layout_.at(name)); }
  Eigen::Map<const Matrix> slot(std::string_view name) const { return slot(layout_.at(name)); }

  /// Copies each slot out as its own matrix, in layout order.
  std::vector<Matrix> unflatten() const {
    std::vector<Matrix> out;
    out.reserve(layout_.num_slots());
    for (std::size_t i = 0; i < layout_.num_slots(); ++i) out.emplace_back(slot(i));
    return out;
  }

  /// Inverse of unflatten().
  static ParamVector flatten(const ParamLayout& layout, const std::vector<Matrix>& blocks) {
    if (blocks.size() != layout.num_slots()) {
      throw std::invalid_argument("ParamVector::flatten: block count does not match layout");
    }
    ParamVector out(layout);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const Slot& s = layout.slot(i);
      if (blocks[i].rows() != s.rows || blocks[i].cols() != s.cols) {
        throw std::invalid_argument("ParamVector::flatten: shape mismatch in slot '" + s.name + "'");
      }
      out.slot(i) = blocks[i];
    }
    return out;
  }

  ParamVector zeros_like() const { return ParamVector(layout_); }

 private:
  ParamLayout layout_;
  Vector values_;
};

}  // namespace deeponet::diff
