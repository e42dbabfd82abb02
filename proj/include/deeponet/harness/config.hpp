#pragma once

#include "deeponet/basis/basis.hpp"
#include "deeponet/networks/deeponet.hpp"
#include "deeponet/pde/pde.hpp"
#include "deeponet/sampling/sampling.hpp"
#include "deeponet/spectral/spectral.hpp"
#include "deeponet/training/training.hpp"
#include "deeponet/util/hash.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace deeponet::harness {

using Eigen::Index;

using nlohmann::json;

enum class ExitCode : int {
  ok = 0,
  failure = 1,
  usage = 2,
  invalid_config = 3,
  missing_artifact = 4,
  checkpoint = 5,
  numerical = 6,
};

class HarnessError : public std::runtime_error {
 public:
  HarnessError(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

inline HarnessError config_error(const std::string& what) { return {ExitCode::invalid_config, "invalid config: " + what}; }

struct NetConfig {
  Index width = 64;
  int depth = 4;  // weight layers
  nn::Variant variant = nn::Variant::plain;
};

struct TrainingConfig {
  std::string mode = "physics";  // physics | data
  Index functions = 100;         // N
  Index points = 64;             // P per function and role
  Index batch = 768;             // points per step
  int steps = 20000;
  double lr = 1e-3;
  double decay_rate = 0.9;
  int decay_steps = 2000;
  training::Scheme scheme = training::Scheme::ntk;
  double alpha = 0.5;
  int refresh = 1000;
  training::KernelNorm norm = training::KernelNorm::max_diagonal;
  int bc_orders = -1;  // -1: spatial order - 1
  int log_every = 100;
};

struct ReferenceConfig {
  Index grid = 256;  // solver grid M_g
  int steps = 2000;
  int stride = 20;
};

struct BasisConfig {
  double freeze_time = 0.0;
  basis::QuadratureKind quadrature = basis::QuadratureKind::gauss_legendre;
  Index nodes = 512;
  int legendre_degree = 120;
  double cutoff = 1e-13;
};

struct EvolutionConfig {
  int steps = 2000;
  int stride = 20;
  Index ics = 5;
  std::vector<Index> counts;  // empty: spread up to the retained size
  spectral::Closure closure = spectral::Closure::periodic;
};

struct ExperimentConfig {
  std::string name = "custom";
  pde::PdeSpec pde = pde::PdeSpec::advection_diffusion(4.0, 0.01);
  sampling::GrfSpec inputs = sampling::GrfSpec::warped_se(0.5, 128);
  NetConfig branch{64, 3, nn::Variant::plain};
  NetConfig trunk{64, 4, nn::Variant::plain};
  TrainingConfig training;
  std::string init_checkpoint;  // empty: random init from `seed`
  ReferenceConfig reference;
  Index test_functions = 10;
  BasisConfig basis;
  EvolutionConfig evolution;
  std::uint64_t seed = 0;       // model init and batch order
  std::uint64_t data_seed = 1;  // inputs, pools and test set
  std::string scale_note;

  nn::MlpSpec branch_spec() const { return nn::MlpSpec::uniform(inputs.sensors, branch.width, branch.depth, branch.variant); }
  nn::MlpSpec trunk_spec() const { return nn::MlpSpec::uniform(2, trunk.width, trunk.depth, trunk.variant); }
  int bc_orders() const { return training.bc_orders >= 0 ? training.bc_orders : pde::default_boundary_orders(pde); }
};

// ------------------------------------------------------------- JSON schema

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw config_error(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw config_error("unknown key '" + where + "." + k + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw config_error("'" + where + "." + key + "' has the wrong type");
  }
}

inline json net_to_json(const NetConfig& n) { return {{"width", n.width}, {"depth", n.depth}, {"variant", nn::to_string(n.variant)}}; }

inline void net_from_json(const json& j, NetConfig& n, const std::string& where) {
  check_keys(j, where, {"width", "depth", "variant"});
  read(j, "width", n.width, where);
  read(j, "depth", n.depth, where);
  std::string v = nn::to_string(n.variant);
  read(j, "variant", v, where);
  try {
    n.variant = nn::variant_from_string(v);
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }
}

}  // namespace detail

inline json to_json(const ExperimentConfig& c) {
  const auto& t = c.training;
  return {
      {"name", c.name},
      {"pde",
       {{"kind", pde::kind_name(c.pde.kind)},
        {"advection", c.pde.advection},
        {"viscosity", c.pde.viscosity},
        {"dispersion", c.pde.dispersion},
        {"x_max", c.pde.x_max},
        {"t_max", c.pde.t_max}}},
      {"inputs",
       {{"family", sampling::family_name(c.inputs.family)},
        {"length_scale", c.inputs.length_scale},
        {"amplitude", c.inputs.amplitude},
        {"shift", c.inputs.shift},
        {"power", c.inputs.power},
        {"sensors", c.inputs.sensors}}},
      {"branch", detail::net_to_json(c.branch)},
      {"trunk", detail::net_to_json(c.trunk)},
      {"training",
       {{"mode", t.mode},
        {"functions", t.functions},
        {"points", t.points},
        {"batch", t.batch},
        {"steps", t.steps},
        {"lr", t.lr},
        {"decay_rate", t.decay_rate},
        {"decay_steps", t.decay_steps},
        {"scheme", training::scheme_name(t.scheme)},
        {"alpha", t.alpha},
        {"refresh", t.refresh},
        {"norm", training::norm_name(t.norm)},
        {"bc_orders", t.bc_orders},
        {"log_every", t.log_every}}},
      {"init", {{"checkpoint", c.init_checkpoint}}},
      {"reference", {{"grid", c.reference.grid}, {"steps", c.reference.steps}, {"stride", c.reference.stride}}},
      {"test", {{"functions", c.test_functions}}},
      {"basis",
       {{"freeze_time", c.basis.freeze_time},
        {"quadrature", basis::quadrature_name(c.basis.quadrature)},
        {"nodes", c.basis.nodes},
        {"legendre_degree", c.basis.legendre_degree},
        {"cutoff", c.basis.cutoff}}},
      {"evolution",
       {{"steps", c.evolution.steps}, {"stride", c.evolution.stride}, {"ics", c.evolution.ics}, {"counts", c.evolution.counts},
        {"closure", spectral::closure_name(c.evolution.closure)}}},
      {"seed", c.seed},
      {"data_seed", c.data_seed},
      {"scale_note", c.scale_note},
  };
}

/// Overlays `j` on `base`; absent keys keep their base values, unknown keys
/// are rejected.
inline ExperimentConfig from_json(const json& j, ExperimentConfig c = {}) {
  using detail::check_keys;
  using detail::read;
  check_keys(j, "config", {"name", "pde", "inputs", "branch", "trunk", "training", "init", "reference", "test", "basis",
                           "evolution", "seed", "data_seed", "scale_note", "preset"});
  read(j, "name", c.name, "config");
  read(j, "seed", c.seed, "config");
  read(j, "data_seed", c.data_seed, "config");
  read(j, "scale_note", c.scale_note, "config");
  try {
    if (j.contains("pde")) {
      const json& p = j["pde"];
      check_keys(p, "pde", {"kind", "advection", "viscosity", "dispersion", "x_max", "t_max"});
      std::string kind = pde::kind_name(c.pde.kind);
      read(p, "kind", kind, "pde");
      c.pde.kind = pde::kind_from_name(kind);
      read(p, "advection", c.pde.advection, "pde");
      read(p, "viscosity", c.pde.viscosity, "pde");
      read(p, "dispersion", c.pde.dispersion, "pde");
      read(p, "x_max", c.pde.x_max, "pde");
      read(p, "t_max", c.pde.t_max, "pde");
    }
    if (j.contains("inputs")) {
      const json& p = j["inputs"];
      check_keys(p, "inputs", {"family", "length_scale", "amplitude", "shift", "power", "sensors"});
      std::string fam = sampling::family_name(c.inputs.family);
      read(p, "family", fam, "inputs");
      c.inputs.family = sampling::family_from_name(fam);
      read(p, "length_scale", c.inputs.length_scale, "inputs");
      read(p, "amplitude", c.inputs.amplitude, "inputs");
      read(p, "shift", c.inputs.shift, "inputs");
      read(p, "power", c.inputs.power, "inputs");
      read(p, "sensors", c.inputs.sensors, "inputs");
    }
    if (j.contains("branch")) detail::net_from_json(j["branch"], c.branch, "branch");
    if (j.contains("trunk")) detail::net_from_json(j["trunk"], c.trunk, "trunk");
    if (j.contains("training")) {
      const json& p = j["training"];
      auto& t = c.training;
      check_keys(p, "training", {"mode", "functions", "points", "batch", "steps", "lr", "decay_rate", "decay_steps", "scheme",
                                 "alpha", "refresh", "norm", "bc_orders", "log_every"});
      read(p, "mode", t.mode, "training");
      read(p, "functions", t.functions, "training");
      read(p, "points", t.points, "training");
      read(p, "batch", t.batch, "training");
      read(p, "steps", t.steps, "training");
      read(p, "lr", t.lr, "training");
      read(p, "decay_rate", t.decay_rate, "training");
      read(p, "decay_steps", t.decay_steps, "training");
      std::string scheme = training::scheme_name(t.scheme), norm = training::norm_name(t.norm);
      read(p, "scheme", scheme, "training");
      read(p, "norm", norm, "training");
      t.scheme = training::scheme_from_name(scheme);
      t.norm = training::norm_from_name(norm);
      read(p, "alpha", t.alpha, "training");
      read(p, "refresh", t.refresh, "training");
      read(p, "bc_orders", t.bc_orders, "training");
      read(p, "log_every", t.log_every, "training");
    }
    if (j.contains("init")) {
      check_keys(j["init"], "init", {"checkpoint"});
      read(j["init"], "checkpoint", c.init_checkpoint, "init");
    }
    if (j.contains("reference")) {
      check_keys(j["reference"], "reference", {"grid", "steps", "stride"});
      read(j["reference"], "grid", c.reference.grid, "reference");
      read(j["reference"], "steps", c.reference.steps, "reference");
      read(j["reference"], "stride", c.reference.stride, "reference");
    }
    if (j.contains("test")) {
      check_keys(j["test"], "test", {"functions"});
      read(j["test"], "functions", c.test_functions, "test");
    }
    if (j.contains("basis")) {
      const json& p = j["basis"];
      check_keys(p, "basis", {"freeze_time", "quadrature", "nodes", "legendre_degree", "cutoff"});
      read(p, "freeze_time", c.basis.freeze_time, "basis");
      std::string q = basis::quadrature_name(c.basis.quadrature);
      read(p, "quadrature", q, "basis");
      c.basis.quadrature = basis::quadrature_from_name(q);
      read(p, "nodes", c.basis.nodes, "basis");
      read(p, "legendre_degree", c.basis.legendre_degree, "basis");
      read(p, "cutoff", c.basis.cutoff, "basis");
    }
    if (j.contains("evolution")) {
      const json& p = j["evolution"];
      check_keys(p, "evolution", {"steps", "stride", "ics", "counts", "closure"});
      read(p, "steps", c.evolution.steps, "evolution");
      read(p, "stride", c.evolution.stride, "evolution");
      read(p, "ics", c.evolution.ics, "evolution");
      read(p, "counts", c.evolution.counts, "evolution");
      if (p.contains("closure")) c.evolution.closure = spectral::closure_from_name(p["closure"].get<std::string>());
    }
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }
  c.inputs.x_max = c.pde.x_max;
  return c;
}

/// Every field checked before any compute.
inline void validate(const ExperimentConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw config_error(msg);
  };
  try {
    c.pde.validate();
    c.inputs.validate();
    nn::validate_architecture(c.branch_spec(), c.trunk_spec());
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }
  require(c.inputs.x_max == c.pde.x_max, "input domain differs from the PDE domain");
  const auto& t = c.training;
  require(t.mode == "physics" || t.mode == "data", "training.mode must be 'physics' or 'data'");
  require(t.functions >= 1 && t.points >= 1, "training.functions and training.points must be >= 1");
  require(t.batch >= 3, "training.batch must be >= 3");
  require(t.steps >= 0, "training.steps must be >= 0");
  require(t.lr > 0.0 && t.decay_rate > 0.0 && t.decay_rate <= 1.0 && t.decay_steps >= 1, "bad learning-rate schedule");
  require(t.alpha > 0.0, "training.alpha must be positive");
  require(t.refresh >= 1, "training.refresh must be >= 1");
  require(t.bc_orders >= -1 && t.bc_orders <= 3, "training.bc_orders must be in [-1, 3]");
  require(t.log_every >= 1, "training.log_every must be >= 1");
  require(c.reference.grid >= 8, "reference.grid must be >= 8");
  require(c.reference.steps >= 1 && c.reference.stride >= 1 && c.reference.steps % c.reference.stride == 0,
          "reference.steps must be a positive multiple of reference.stride");
  require(c.test_functions >= 1, "test.functions must be >= 1");
  require(c.basis.freeze_time >= 0.0 && c.basis.freeze_time <= c.pde.t_max, "basis.freeze_time must lie in [0, T]");
  require(c.basis.nodes >= 2, "basis.nodes must be >= 2");
  require(c.basis.legendre_degree >= 0 && c.basis.legendre_degree < c.basis.nodes, "basis.legendre_degree must be below basis.nodes");
  require(c.basis.cutoff >= 0.0, "basis.cutoff must be >= 0");
  require(c.evolution.steps >= 1 && c.evolution.stride >= 1 && c.evolution.steps % c.evolution.stride == 0,
          "evolution.steps must be a positive multiple of evolution.stride");
  require(c.evolution.ics >= 1 && c.evolution.ics <= c.test_functions, "evolution.ics must be in [1, test.functions]");
  for (Index k : c.evolution.counts) require(k >= 1, "evolution.counts entries must be >= 1");
}

/// FNV-1a of the canonical JSON (keys sorted).
inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

// ------------------------------------------------------------- presets

inline ExperimentConfig advdiff_full() {
  ExperimentConfig c;
  c.name = "advdiff-full";
  c.pde = pde::PdeSpec::advection_diffusion(4.0, 0.01);
  c.inputs = sampling::GrfSpec::warped_se(0.5, 128);
  // NTK model: modified architecture, trunk one layer deeper than the table.
  c.branch = {128, 3, nn::Variant::modified};
  c.trunk = {128, 5, nn::Variant::modified};
  c.training.functions = 500;
  c.training.points = 128;
  c.training.batch = 1000;
  c.training.steps = 200000;
  c.test_functions = 100;
  c.scale_note = "full-scale settings";
  return c;
}

inline ExperimentConfig advdiff_desk() {
  ExperimentConfig c = advdiff_full();
  c.name = "advdiff-desk";
  c.branch.width = c.trunk.width = 64;
  c.training.functions = 100;
  c.training.points = 64;
  c.training.batch = 768;
  c.training.steps = 20000;
  c.test_functions = 10;
  c.scale_note = "desk scale: width 128->64, N 500->100, P 128->64, batch 1000->768, steps 200000->20000, test 100->10";
  return c;
}

inline ExperimentConfig burgers_benchmark(double nu, bool full) {
  ExperimentConfig c;
  c.pde = pde::PdeSpec::burgers(nu, 1.0);
  c.inputs = sampling::GrfSpec::spectral_burgers(101, 1.0);
  c.reference = {256, 2000, 20};
  if (full) {
    c.branch = {100, 7, nn::Variant::modified};
    c.trunk = {100, 7, nn::Variant::modified};
    c.training.functions = 500;
    c.training.points = 101;
    c.training.batch = 14000;
    c.training.steps = 200000;
    c.test_functions = 100;
    c.scale_note = "full-scale settings";
  } else {
    c.branch = {64, 4, nn::Variant::modified};
    c.trunk = {64, 4, nn::Variant::modified};
    c.training.functions = 100;
    c.training.points = 64;
    c.training.batch = 768;
    c.training.steps = 20000;
    c.test_functions = 10;
    c.scale_note = "desk scale: width 100->64, depth 7->4, N 500->100, P 101->64, batch 14000->768, steps 200000->20000, test 100->10";
  }
  return c;
}

inline ExperimentConfig kdv_config(bool full) {
  ExperimentConfig c;
  c.pde = pde::PdeSpec::kdv(0.1);
  c.inputs = sampling::GrfSpec::kdv_trig(128);
  c.training.scheme = training::Scheme::ck;
  if (full) {
    c.branch = {128, 5, nn::Variant::modified};
    c.trunk = {128, 6, nn::Variant::modified};
    c.training.functions = 500;
    c.training.points = 128;
    c.training.batch = 16384;
    c.training.steps = 200000;
    c.test_functions = 100;
    c.scale_note = "full-scale settings";
  } else {
    c.branch = {64, 5, nn::Variant::modified};
    c.trunk = {64, 6, nn::Variant::modified};
    c.training.functions = 100;
    c.training.points = 64;
    c.training.batch = 768;
    c.training.steps = 20000;
    c.test_functions = 10;
    c.scale_note = "desk scale: width 128->64, N 500->100, P 128->64, batch 16384->768, steps 200000->20000, test 100->10";
  }
  return c;
}

inline const std::map<std::string, ExperimentConfig (*)()>& preset_table() {
  static const std::map<std::string, ExperimentConfig (*)()> table{
      {"advdiff-full", [] { return advdiff_full(); }},
      {"advdiff-desk", [] { return advdiff_desk(); }},
      {"advdiff-data-desk",
       [] {
         ExperimentConfig c = advdiff_desk();
         c.name = "advdiff-data-desk";
         c.branch = {64, 3, nn::Variant::plain};
         c.trunk = {64, 4, nn::Variant::plain};
         c.training.mode = "data";
         c.training.scheme = training::Scheme::fixed;
         return c;
       }},
      {"burgers-1e-3-full",
       [] {
         ExperimentConfig c = burgers_benchmark(1e-3, true);
         c.name = "burgers-1e-3-full";
         return c;
       }},
      {"burgers-1e-4-full",
       [] {
         ExperimentConfig c = burgers_benchmark(1e-4, true);
         c.name = "burgers-1e-4-full";
         return c;
       }},
      {"burgers-1e-3-desk",
       [] {
         ExperimentConfig c = burgers_benchmark(1e-3, false);
         c.name = "burgers-1e-3-desk";
         return c;
       }},
      {"burgers-1e-4-desk",
       [] {
         ExperimentConfig c = burgers_benchmark(1e-4, false);
         c.name = "burgers-1e-4-desk";
         return c;
       }},
      {"kdv-full",
       [] {
         ExperimentConfig c = kdv_config(true);
         c.name = "kdv-full";
         return c;
       }},
      {"kdv-desk",
       [] {
         ExperimentConfig c = kdv_config(false);
         c.name = "kdv-desk";
         return c;
       }},
  };
  return table;
}

inline std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [k, v] : preset_table()) names.push_back(k);
  return names;
}

inline ExperimentConfig preset(const std::string& name) {
  const auto& t = preset_table();
  const auto it = t.find(name);
  if (it == t.end()) {
    std::string all;
    for (const auto& n : preset_names()) all += (all.empty() ? "" : ", ") + n;
    throw config_error("unknown preset '" + name + "' (available: " + all + ")");
  }
  return it->second();
}

/// A config file may name a preset to start from; its other keys override it.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw HarnessError(ExitCode::missing_artifact, "cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw config_error(path.string() + ": " + e.what());
  }
  ExperimentConfig base;
  if (j.contains("preset")) base = preset(j["preset"].get<std::string>());
  return from_json(j, base);
}

}  // namespace deeponet::harness
