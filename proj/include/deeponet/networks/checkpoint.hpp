#pragma once

#include "deeponet/networks/deeponet.hpp"
#include "deeponet/util/hash.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

namespace deeponet::nn {

inline constexpr int kCheckpointVersion = 1;

enum class CheckpointErrorKind { io, version_mismatch, corrupted, spec_mismatch };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

inline nlohmann::json spec_to_json(const MlpSpec& s) {
  return {{"widths", s.widths}, {"variant", to_string(s.variant)}};
}

inline MlpSpec spec_from_json(const nlohmann::json& j) {
  MlpSpec s;
  s.widths = j.at("widths").get<std::vector<Index>>();
  s.variant = variant_from_string(j.at("variant").get<std::string>());
  return s;
}

inline std::string describe(const MlpSpec& s) {
  std::string out = to_string(s.variant) + "[";
  for (std::size_t i = 0; i < s.widths.size(); ++i) out += (i ? "," : "") + std::to_string(s.widths[i]);
  return out + "]";
}

/// JSON envelope; parameters are a numeric array in layout order, written
/// with shortest round-trip formatting so reloading is bit-exact.
inline nlohmann::json checkpoint_to_json(const DeepOnetModel& m) {
  const auto& v = m.params.values();
  nlohmann::json j;
  j["format"] = "deeponet-checkpoint";
  j["format_version"] = kCheckpointVersion;
  j["branch"] = spec_to_json(m.branch);
  j["trunk"] = spec_to_json(m.trunk);
  j["pde"] = m.pde_tag;
  j["step"] = m.step;
  j["seed"] = m.seed;
  j["param_count"] = v.size();
  j["checksum"] = hex64(fnv1a64(std::span<const double>(v.data(), static_cast<std::size_t>(v.size()))));
  j["params"] = std::vector<double>(v.data(), v.data() + v.size());
  return j;
}

inline void save_checkpoint(const DeepOnetModel& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(CheckpointErrorKind::io, "cannot write checkpoint '" + path.string() + "'");
  out << checkpoint_to_json(m).dump() << '\n';
  if (!out) throw CheckpointError(CheckpointErrorKind::io, "write failed for '" + path.string() + "'");
}

inline DeepOnetModel checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string{}) != "deeponet-checkpoint") {
      throw CheckpointError(CheckpointErrorKind::corrupted, "checkpoint: missing format marker");
    }
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError(CheckpointErrorKind::version_mismatch,
                            "checkpoint: format version " + std::to_string(version) + ", expected " +
                                std::to_string(kCheckpointVersion));
    }
    DeepOnetModel m;
    m.branch = spec_from_json(j.at("branch"));
    m.trunk = spec_from_json(j.at("trunk"));
    validate_architecture(m.branch, m.trunk);
    m.pde_tag = j.at("pde").get<std::string>();
    m.step = j.at("step").get<std::int64_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto values = j.at("params").get<std::vector<double>>();
    const ParamLayout layout = make_layout(m.branch, m.trunk);
    if (static_cast<Index>(values.size()) != layout.total() || j.at("param_count").get<Index>() != layout.total()) {
      throw CheckpointError(CheckpointErrorKind::corrupted, "checkpoint: parameter count does not match architecture");
    }
    if (j.at("checksum").get<std::string>() != hex64(fnv1a64(std::span<const double>(values)))) {
      throw CheckpointError(CheckpointErrorKind::corrupted, "checkpoint: parameter checksum mismatch");
    }
    m.params = ParamVector(layout, Eigen::Map<const diff::Vector>(values.data(), layout.total()));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointErrorKind::corrupted, std::string("checkpoint: malformed envelope: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(CheckpointErrorKind::corrupted, std::string("checkpoint: invalid architecture: ") + e.what());
  }
}

inline DeepOnetModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::io, "cannot open checkpoint '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(CheckpointErrorKind::corrupted,
                          "checkpoint '" + path.string() + "' is not valid JSON (truncated?): " + e.what());
  }
  return checkpoint_from_json(j);
}

/// Loads into an expected architecture; any difference is a spec mismatch.
inline DeepOnetModel load_checkpoint(const std::filesystem::path& path, const MlpSpec& branch, const MlpSpec& trunk) {
  DeepOnetModel m = load_checkpoint(path);
  if (!(m.branch == branch) || !(m.trunk == trunk)) {
    throw CheckpointError(CheckpointErrorKind::spec_mismatch,
                          "checkpoint architecture branch " + describe(m.branch) + " / trunk " + describe(m.trunk) +
                              " does not match expected branch " + describe(branch) + " / trunk " + describe(trunk));
  }
  return m;
}

}  // namespace deeponet::nn
