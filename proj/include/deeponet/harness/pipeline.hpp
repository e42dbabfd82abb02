#pragma once

#include "deeponet/basis/basis.hpp"
#include "deeponet/harness/config.hpp"
#include "deeponet/harness/svg.hpp"
#include "deeponet/metrics/metrics.hpp"
#include "deeponet/networks/checkpoint.hpp"
#include "deeponet/sampling/sampling.hpp"
#include "deeponet/solvers/solvers.hpp"
#include "deeponet/spectral/spectral.hpp"
#include "deeponet/training/training.hpp"
#include "deeponet/util/csv.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace deeponet::harness {

namespace fs = std::filesystem;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"sample-inputs", "solve-reference", "train", "transfer",
                                              "extract-basis", "spectral-evolve", "evaluate", "report"};
  return names;
}

/// Directory layout of one run.
struct Layout {
  fs::path root;

  fs::path config() const { return root / "config.json"; }
  fs::path run_manifest() const { return root / "run.json"; }
  fs::path inputs() const { return root / "inputs"; }
  fs::path reference() const { return root / "reference"; }
  fs::path train() const { return root / "train"; }
  fs::path checkpoint() const { return train() / "checkpoint.json"; }
  fs::path basis() const { return root / "basis"; }
  fs::path evolve() const { return root / "evolve"; }
  fs::path eval() const { return root / "eval"; }
  fs::path report() const { return root / "report"; }
};

inline std::string sample_name(const std::string& prefix, Index j) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03lld.csv", prefix.c_str(), static_cast<long long>(j));
  return buf;
}

// ------------------------------------------------------------------ file IO

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw HarnessError(ExitCode::failure, "cannot write '" + path.string() + "'");
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline void require_file(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw HarnessError(ExitCode::missing_artifact,
                       "missing artifact '" + path.string() + "' (produced by the '" + producer + "' stage)");
  }
}

inline json read_json(const fs::path& path, const std::string& producer) {
  require_file(path, producer);
  std::ifstream in(path, std::ios::binary);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw HarnessError(ExitCode::missing_artifact, "artifact '" + path.string() + "' is unreadable: " + e.what());
  }
}

inline Matrix read_matrix(const fs::path& path, const std::string& producer, bool header = false) {
  require_file(path, producer);
  return read_csv_matrix(path, header);
}

inline Vector col_vector(const Matrix& m) { return m.size() ? Vector(m.col(0)) : Vector(); }

// ------------------------------------------------------------------ manifests

/// Per-stage manifest. Everything except the "timing" object is a pure
/// function of (config, seeds, upstream artifacts).
inline json stage_manifest(const std::string& stage, const ExperimentConfig& c) {
  return {{"stage", stage},
          {"config_name", c.name},
          {"config_hash", config_hash(c)},
          {"seeds", {{"seed", c.seed}, {"data_seed", c.data_seed}}},
          {"scale_note", c.scale_note},
          {"timing", json::object()}};
}

/// Upstream stages of each stage; the run manifest stores this DAG together
/// with what every executed stage read and wrote.
inline json stage_dag() {
  return {{"sample-inputs", json::array()},
          {"solve-reference", {"sample-inputs"}},
          {"train", {"sample-inputs", "solve-reference"}},
          {"transfer", {"sample-inputs", "solve-reference"}},
          {"extract-basis", {"train|transfer"}},
          {"spectral-evolve", {"extract-basis", "sample-inputs", "solve-reference"}},
          {"evaluate", {"train|transfer", "sample-inputs", "solve-reference"}},
          {"report", {"evaluate"}}};
}

inline void record_stage(const Layout& L, const std::string& stage, const ExperimentConfig& c,
                         const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
  json run;
  if (fs::exists(L.run_manifest())) run = read_json(L.run_manifest(), stage);
  run["format"] = "deeponet-run";
  run["dag"] = stage_dag();
  run["config_name"] = c.name;
  run["config_hash"] = config_hash(c);
  run["stages"][stage] = {{"config_hash", config_hash(c)}, {"inputs", inputs}, {"outputs", outputs}};
  write_json(L.run_manifest(), run);
}

/// Stored config of a run directory; stages without an explicit config reuse it.
inline void store_config(const Layout& L, const ExperimentConfig& c) { write_json(L.config(), to_json(c)); }

inline ExperimentConfig stored_config(const Layout& L) {
  const json j = read_json(L.config(), "sample-inputs");
  return from_json(j);
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

// ------------------------------------------------------------------ solver dispatch

inline solvers::SolutionField solve_field(const pde::PdeSpec& spec, const Vector& u0, const solvers::TimeGrid& grid) {
  switch (spec.kind) {
    case pde::Kind::advection_diffusion: return solvers::solve_advdiff(u0, spec.advection, spec.viscosity, spec.x_max, grid);
    case pde::Kind::burgers: return solvers::solve_burgers(u0, spec.viscosity, spec.x_max, grid);
    case pde::Kind::kdv: return solvers::solve_kdv(u0, spec.dispersion, spec.x_max, grid);
  }
  throw std::logic_error("solve_field: unknown PDE");
}

inline solvers::TimeGrid reference_grid(const ExperimentConfig& c) {
  return {c.pde.t_max, c.reference.steps, c.reference.stride};
}

/// Stream labels under data_seed.
enum : std::uint64_t { kTrainInputs = 1, kTestInputs = 2, kPool = 3, kDataPoints = 4 };

// ------------------------------------------------------------------ stages

struct StageOptions {
  bool verbose = false;
};

/// Train and test input functions on the sensor grid and on the fine
/// reference grid.
inline void run_sample_inputs(const ExperimentConfig& c, const Layout& L, const StageOptions& = {}) {
  validate(c);
  Timer timer;
  store_config(L, c);
  const auto train = sampling::sample_inputs(c.inputs, derive_seed(c.data_seed, kTrainInputs), c.training.functions, c.reference.grid);
  const auto test = sampling::sample_inputs(c.inputs, derive_seed(c.data_seed, kTestInputs), c.test_functions, c.reference.grid);
  const fs::path d = L.inputs();
  write_csv(d / "sensor_grid.csv", c.inputs.sensor_grid());
  write_csv(d / "fine_grid.csv", fourier::uniform_grid(c.reference.grid, c.pde.x_max));
  write_csv(d / "train_sensors.csv", train.sensors);
  write_csv(d / "train_fine.csv", train.fine);
  write_csv(d / "test_sensors.csv", test.sensors);
  write_csv(d / "test_fine.csv", test.fine);
  json m = stage_manifest("sample-inputs", c);
  m["family"] = sampling::family_name(c.inputs.family);
  m["sensors"] = c.inputs.sensors;
  m["fine_grid"] = c.reference.grid;
  m["train_functions"] = c.training.functions;
  m["test_functions"] = c.test_functions;
  m["timing"]["seconds"] = timer.seconds();
  write_json(d / "manifest.json", m);
  record_stage(L, "sample-inputs", c, {},
               {"inputs/sensor_grid.csv", "inputs/fine_grid.csv", "inputs/train_sensors.csv", "inputs/train_fine.csv",
                "inputs/test_sensors.csv", "inputs/test_fine.csv", "inputs/manifest.json"});
}

/// Reference fields of the test functions; in data mode also the supervised
/// training pairs drawn from the training functions' fields.
inline void run_solve_reference(const ExperimentConfig& c, const Layout& L, const StageOptions& opt = {}) {
  validate(c);
  Timer timer;
  const Matrix test = read_matrix(L.inputs() / "test_fine.csv", "sample-inputs");
  if (test.rows() != c.reference.grid || test.cols() != c.test_functions) {
    throw HarnessError(ExitCode::missing_artifact, "inputs/test_fine.csv does not match the config; rerun sample-inputs");
  }
  const auto grid = reference_grid(c);
  const fs::path d = L.reference();
  std::vector<std::string> outputs{"reference/x.csv", "reference/t.csv"};
  write_csv(d / "x.csv", fourier::uniform_grid(c.reference.grid, c.pde.x_max));
  write_csv(d / "t.csv", grid.times());
  for (Index j = 0; j < test.cols(); ++j) {
    const auto f = solve_field(c.pde, test.col(j), grid);
    write_csv(d / sample_name("test", j), f.values);
    outputs.push_back("reference/" + sample_name("test", j));
    if (opt.verbose) std::cerr << "reference " << j + 1 << "/" << test.cols() << '\n';
  }
  json m = stage_manifest("solve-reference", c);
  if (c.training.mode == "data") {
    const Matrix train = read_matrix(L.inputs() / "train_fine.csv", "sample-inputs");
    const Index n = train.cols(), p = c.training.points;
    Matrix pairs(n * p, 4);  // function, x, t, s
    Rng rng(derive_seed(c.data_seed, kDataPoints));
    const Vector x = fourier::uniform_grid(c.reference.grid, c.pde.x_max), t = grid.times();
    for (Index j = 0; j < n; ++j) {
      const auto f = solve_field(c.pde, train.col(j), grid);
      for (Index i = 0; i < p; ++i) {
        const Index r = static_cast<Index>(rng.index(static_cast<std::uint64_t>(t.size())));
        const Index g = static_cast<Index>(rng.index(static_cast<std::uint64_t>(x.size())));
        pairs.row(j * p + i) << static_cast<double>(j), x(g), t(r), f.values(r, g);
      }
    }
    write_csv(d / "train_data.csv", pairs, {"function", "x", "t", "s"});
    outputs.push_back("reference/train_data.csv");
    m["train_pairs"] = n * p;
  }
  m["records"] = grid.records();
  m["grid"] = c.reference.grid;
  m["steps"] = grid.steps;
  m["timing"]["seconds"] = timer.seconds();
  write_json(d / "manifest.json", m);
  outputs.push_back("reference/manifest.json");
  record_stage(L, "solve-reference", c, {"inputs/test_fine.csv"}, outputs);
}

/// The preset echo: headline training sizes in the units the tables use.
inline json training_echo(const ExperimentConfig& c) {
  return {{"N", c.training.functions},
          {"P", c.training.points},
          {"m", c.inputs.sensors},
          {"test", c.test_functions},
          {"batch", c.training.batch},
          {"epochs", c.training.steps},
          {"branch", {{"width", c.branch.width}, {"depth", c.branch.depth}, {"variant", nn::to_string(c.branch.variant)}}},
          {"trunk", {{"width", c.trunk.width}, {"depth", c.trunk.depth}, {"variant", nn::to_string(c.trunk.variant)}}},
          {"scheme", training::scheme_name(c.training.scheme)},
          {"alpha", c.training.alpha},
          {"refresh", c.training.refresh}};
}

inline training::TrainOptions train_options(const ExperimentConfig& c, bool verbose) {
  training::TrainOptions o;
  o.steps = c.training.steps;
  o.batch = c.training.batch;
  o.adam.lr = c.training.lr;
  o.adam.decay_rate = c.training.decay_rate;
  o.adam.decay_steps = c.training.decay_steps;
  o.scheme = c.training.scheme;
  o.alpha = c.training.alpha;
  o.refresh_period = c.training.refresh;
  o.norm = c.training.norm;
  o.seed = c.seed;
  o.log_every = c.training.log_every;
  o.verbose = verbose;
  return o;
}

/// `train` from random weights, or `transfer` from c.init_checkpoint.
inline void run_train(const ExperimentConfig& c, const Layout& L, const std::string& stage = "train",
                      const StageOptions& opt = {}) {
  validate(c);
  if (stage == "transfer" && c.init_checkpoint.empty()) {
    throw HarnessError(ExitCode::usage, "transfer needs an initial checkpoint (--checkpoint PATH)");
  }
  Timer timer;
  const Matrix u = read_matrix(L.inputs() / "train_sensors.csv", "sample-inputs");
  if (u.rows() != c.inputs.sensors || u.cols() != c.training.functions) {
    throw HarnessError(ExitCode::missing_artifact, "inputs/train_sensors.csv does not match the config; rerun sample-inputs");
  }
  nn::DeepOnetModel init;
  json init_info;
  if (c.init_checkpoint.empty()) {
    init = nn::init_model(c.branch_spec(), c.trunk_spec(), c.seed);
    init_info = {{"kind", "random"}, {"seed", c.seed}};
  } else {
    try {
      init = nn::load_checkpoint(c.init_checkpoint, c.branch_spec(), c.trunk_spec());
    } catch (const nn::CheckpointError& e) {
      throw HarnessError(ExitCode::checkpoint, e.what());
    }
    init_info = {{"kind", "checkpoint"}, {"path", c.init_checkpoint}, {"source_pde", init.pde_tag}, {"source_step", init.step}};
  }
  std::vector<std::string> inputs{"inputs/train_sensors.csv"};
  training::TrainingLog log;
  nn::DeepOnetModel model;
  const auto o = train_options(c, opt.verbose);
  if (c.training.mode == "physics") {
    const auto set = training::make_physics_set(u, c.inputs.sensor_grid(), c.pde, c.training.points, c.bc_orders(),
                                                derive_seed(c.data_seed, kPool));
    auto r = training::train_physics(std::move(init), set, c.pde, o);
    log = std::move(r.log);
    model = std::move(r.model);
  } else {
    const Matrix pairs = read_matrix(L.reference() / "train_data.csv", "solve-reference", true);
    training::DataSet d;
    d.u = u;
    d.points = pairs.middleCols(1, 2).transpose();
    d.targets = pairs.col(3);
    for (Index i = 0; i < pairs.rows(); ++i) d.fn.push_back(static_cast<Index>(pairs(i, 0)));
    auto r = training::train_data(std::move(init), d, o, c.pde.tag());
    log = std::move(r.log);
    model = std::move(r.model);
    inputs.push_back("reference/train_data.csv");
  }
  if (!model.params.values().allFinite()) {
    throw HarnessError(ExitCode::numerical, "training produced non-finite parameters");
  }
  fs::create_directories(L.train());
  nn::save_checkpoint(model, L.checkpoint());
  write_text(L.train() / "log.csv", log.to_csv());
  json m = stage_manifest(stage, c);
  m["mode"] = c.training.mode;
  m["pde"] = c.pde.tag();
  m["echo"] = training_echo(c);
  m["init"] = init_info;
  m["final_step"] = model.step;
  m["final_loss"] = log.rows.empty() ? 0.0 : log.rows.back().loss;
  m["skipped_steps"] = log.skipped_steps;
  m["warnings"] = log.warnings;
  m["parameters"] = model.params.size();
  m["timing"] = {{"seconds_total", log.seconds_total}, {"seconds_kernel", log.seconds_kernel}, {"seconds_stage", timer.seconds()}};
  write_json(L.train() / "manifest.json", m);
  if (!c.init_checkpoint.empty()) inputs.push_back(c.init_checkpoint);
  record_stage(L, stage, c, inputs, {"train/checkpoint.json", "train/log.csv", "train/manifest.json"});
}

/// Probe function expanded in the extracted basis: e^{sin(2 pi x / L)}.
inline double probe_function(double x, double x_max) { return std::exp(std::sin(2.0 * std::numbers::pi * x / x_max)); }

inline basis::BasisSet build_basis(const nn::DeepOnetModel& model, const ExperimentConfig& c) {
  const auto quad = basis::QuadratureRule::make(c.basis.quadrature, c.basis.nodes, 0.0, c.pde.x_max);
  auto b = basis::extract_basis(basis::freeze_trunk(model, c.basis.freeze_time, quad), quad);
  b = basis::legendre_project(std::move(b), c.basis.legendre_degree);
  return basis::truncate_by_cutoff(std::move(b), c.basis.cutoff);
}

inline nn::DeepOnetModel load_trained(const ExperimentConfig& c, const Layout& L) {
  require_file(L.checkpoint(), "train");
  try {
    return nn::load_checkpoint(L.checkpoint(), c.branch_spec(), c.trunk_spec());
  } catch (const nn::CheckpointError& e) {
    throw HarnessError(ExitCode::checkpoint, e.what());
  }
}

inline void run_extract_basis(const ExperimentConfig& c, const Layout& L, const StageOptions& = {}) {
  validate(c);
  Timer timer;
  const nn::DeepOnetModel model = load_trained(c, L);
  basis::BasisSet b;
  try {
    b = build_basis(model, c);
  } catch (const basis::BasisError& e) {
    throw HarnessError(ExitCode::numerical, e.what());
  }
  const json ck = nn::checkpoint_to_json(model);
  b.source = "checkpoint " + ck.at("checksum").get<std::string>() + " step " + std::to_string(model.step);
  basis::save_basis(L.basis(), b);
  // Coefficients over every extracted function; the retained flag marks the cutoff.
  const basis::BasisSet all = basis::truncate_to(b, b.size());
  const Vector a = basis::expansion_coefficients(all, [&](double x) { return probe_function(x, c.pde.x_max); });
  Matrix rows(b.size(), 4);
  for (Index k = 0; k < b.size(); ++k) rows.row(k) << static_cast<double>(k + 1), b.sigma(k), a(k), k < b.retained ? 1.0 : 0.0;
  write_csv(L.basis() / "coefficients.csv", rows, {"k", "sigma", "coefficient", "retained"});
  json m = stage_manifest("extract-basis", c);
  m["p"] = b.size();
  m["retained"] = b.retained;
  m["cutoff"] = b.cutoff;
  m["freeze_time"] = b.freeze_time;
  m["quadrature"] = basis::quadrature_name(b.quad.kind);
  m["nodes"] = b.quad.size();
  m["legendre_degree"] = b.degree();
  m["source"] = b.source;
  if (b.retained > 0) {
    m["gram_error"] = (basis::gram(b) - Matrix::Identity(b.retained, b.retained)).cwiseAbs().maxCoeff();
    m["legendre_residual_max"] = basis::projection_residuals(b).head(b.retained).maxCoeff();
  }
  m["timing"]["seconds"] = timer.seconds();
  write_json(L.basis() / "manifest.json", m);
  record_stage(L, "extract-basis", c, {"train/checkpoint.json"},
               {"basis/basis.json", "basis/quadrature.csv", "basis/nodes.csv", "basis/sigma.csv", "basis/legendre.csv",
                "basis/coefficients.csv", "basis/manifest.json"});
}

/// Retained counts swept by spectral-evolve when the config gives none:
/// every k up to 8, then every 4th, always ending at the retained size.
inline std::vector<Index> default_counts(Index retained) {
  std::vector<Index> k;
  for (Index i = 1; i <= retained; ++i) {
    if (i <= 8 || i % 4 == 0 || i == retained) k.push_back(i);
  }
  return k;
}

inline void run_spectral_evolve(const ExperimentConfig& c, const Layout& L, const StageOptions& opt = {}) {
  validate(c);
  Timer timer;
  require_file(L.basis() / "basis.json", "extract-basis");
  const basis::BasisSet b = basis::load_basis(L.basis());
  const Matrix test = read_matrix(L.inputs() / "test_fine.csv", "sample-inputs");
  const Vector x = col_vector(read_matrix(L.reference() / "x.csv", "solve-reference"));
  const Vector t_ref = col_vector(read_matrix(L.reference() / "t.csv", "solve-reference"));
  const solvers::TimeGrid grid{c.pde.t_max, c.evolution.steps, c.evolution.stride};
  const Vector t = grid.times();
  if (t.size() != t_ref.size() || (t - t_ref).cwiseAbs().maxCoeff() > 1e-12 * c.pde.t_max) {
    throw config_error("evolution record times differ from the reference record times");
  }
  const Index ics = std::min<Index>(c.evolution.ics, test.cols());
  std::vector<Index> counts = c.evolution.counts.empty() ? default_counts(b.retained) : c.evolution.counts;
  counts.erase(std::remove_if(counts.begin(), counts.end(), [&](Index k) { return k > b.size(); }), counts.end());
  if (counts.empty()) throw HarnessError(ExitCode::numerical, "spectral-evolve: basis retains no functions");

  std::vector<std::string> header{"k", "median"};
  for (Index j = 0; j < ics; ++j) header.push_back("ic" + std::to_string(j));
  Matrix rows(static_cast<Index>(counts.size()), 2 + ics);
  std::vector<Matrix> refs;
  for (Index j = 0; j < ics; ++j) refs.push_back(read_matrix(L.reference() / sample_name("test", j), "solve-reference"));
  json failures = json::array();
  for (std::size_t r = 0; r < counts.size(); ++r) {
    const basis::BasisSet bk = basis::truncate_to(b, counts[r]);
    const auto sys = spectral::build_system(bk, c.pde, c.evolution.closure);
    std::vector<double> errs;
    for (Index j = 0; j < ics; ++j) {
      double e = std::numeric_limits<double>::infinity();
      try {
        const Vector a0 = spectral::init_coeffs(sys, spectral::to_nodes(test.col(j), b.quad));
        const auto field = spectral::reconstruct(bk, spectral::evolve(sys, a0, grid), x);
        e = metrics::error_report(field.values, refs[static_cast<std::size_t>(j)], t).average;
      } catch (const spectral::SpectralError& ex) {
        failures.push_back({{"k", counts[r]}, {"ic", j}, {"error", ex.what()}});
      }
      errs.push_back(e);
      rows(static_cast<Index>(r), 2 + j) = e;
    }
    std::vector<double> sorted = errs;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    rows(static_cast<Index>(r), 0) = static_cast<double>(counts[r]);
    rows(static_cast<Index>(r), 1) = median;
    if (opt.verbose) std::cerr << "k " << counts[r] << " median error " << median << '\n';
  }
  write_csv(L.evolve() / "error_vs_k.csv", rows, header);
  json m = stage_manifest("spectral-evolve", c);
  m["retained"] = b.retained;
  m["p"] = b.size();
  m["ics"] = ics;
  m["steps"] = grid.steps;
  m["closure"] = spectral::closure_name(c.evolution.closure);
  m["failures"] = failures;
  m["timing"]["seconds"] = timer.seconds();
  write_json(L.evolve() / "manifest.json", m);
  record_stage(L, "spectral-evolve", c, {"basis/basis.json", "inputs/test_fine.csv", "reference/t.csv"},
               {"evolve/error_vs_k.csv", "evolve/manifest.json"});
}

/// Space-time grid of the reference records as a 2 x (records * grid) matrix,
/// time-major.
inline Matrix space_time_coords(const Vector& x, const Vector& t) {
  Matrix c(2, x.size() * t.size());
  for (Index n = 0; n < t.size(); ++n) {
    for (Index i = 0; i < x.size(); ++i) c.col(n * x.size() + i) << x(i), t(n);
  }
  return c;
}

/// Relative errors of the trained model on the test set, or of stored fields
/// (`fields_dir` with test_XXX.csv files) when given.
inline void run_evaluate(const ExperimentConfig& c, const Layout& L, const std::optional<fs::path>& fields_dir = {},
                         const StageOptions& = {}) {
  validate(c);
  Timer timer;
  const Vector x = col_vector(read_matrix(L.reference() / "x.csv", "solve-reference"));
  const Vector t = col_vector(read_matrix(L.reference() / "t.csv", "solve-reference"));
  const Index count = c.test_functions;
  std::vector<Matrix> refs;
  for (Index j = 0; j < count; ++j) refs.push_back(read_matrix(L.reference() / sample_name("test", j), "solve-reference"));
  std::vector<Matrix> preds;
  std::vector<std::string> inputs{"reference/x.csv", "reference/t.csv"};
  std::string source;
  if (fields_dir) {
    for (Index j = 0; j < count; ++j) preds.push_back(read_matrix(*fields_dir / sample_name("test", j), "fields"));
    source = "fields:" + fields_dir->string();
    inputs.push_back(fields_dir->string());
  } else {
    const nn::DeepOnetModel model = load_trained(c, L);
    const Matrix sensors = read_matrix(L.inputs() / "test_sensors.csv", "sample-inputs");
    if (sensors.cols() != count || sensors.rows() != model.sensors()) {
      throw HarnessError(ExitCode::missing_artifact, "inputs/test_sensors.csv does not match the config; rerun sample-inputs");
    }
    const Matrix trunk = nn::trunk_forward(model, space_time_coords(x, t));
    const Matrix branch = nn::branch_forward(model, sensors);
    for (Index j = 0; j < count; ++j) {
      const Matrix flat = branch.col(j).transpose() * trunk;  // 1 x (records * grid)
      preds.push_back(Eigen::Map<const Matrix>(flat.data(), x.size(), t.size()).transpose());
    }
    source = "model step " + std::to_string(model.step);
    inputs.insert(inputs.end(), {"train/checkpoint.json", "inputs/test_sensors.csv"});
  }
  std::vector<metrics::ErrorReport> reports;
  Matrix errors(count, 2), per_time(t.size(), count + 1);
  per_time.col(0) = t;
  std::vector<std::string> pt_header{"t"};
  for (Index j = 0; j < count; ++j) {
    if (preds[static_cast<std::size_t>(j)].rows() != refs[static_cast<std::size_t>(j)].rows() ||
        preds[static_cast<std::size_t>(j)].cols() != refs[static_cast<std::size_t>(j)].cols()) {
      throw HarnessError(ExitCode::missing_artifact, "prediction " + sample_name("test", j) + " has the wrong shape");
    }
    try {
      reports.push_back(metrics::error_report(preds[static_cast<std::size_t>(j)], refs[static_cast<std::size_t>(j)], t));
    } catch (const std::invalid_argument& e) {
      throw HarnessError(ExitCode::numerical, std::string("evaluate: ") + e.what());
    }
    errors.row(j) << static_cast<double>(j), reports.back().average;
    per_time.col(j + 1) = reports.back().per_time;
    pt_header.push_back("sample" + std::to_string(j));
  }
  const metrics::Summary s = metrics::aggregate(reports);
  write_csv(L.eval() / "errors.csv", errors, {"sample", "error"});
  write_csv(L.eval() / "per_time.csv", per_time, pt_header);
  write_json(L.eval() / "summary.json",
             {{"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"max", s.max}, {"count", s.count}, {"source", source}});
  json m = stage_manifest("evaluate", c);
  m["source"] = source;
  m["timing"]["seconds"] = timer.seconds();
  write_json(L.eval() / "manifest.json", m);
  record_stage(L, "evaluate", c, inputs, {"eval/errors.csv", "eval/per_time.csv", "eval/summary.json", "eval/manifest.json"});
}

// ------------------------------------------------------------------ report

inline std::string percent(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f%%", digits, 100.0 * v);
  return buf;
}

inline std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

inline std::vector<double> column(const Matrix& m, Index c) {
  std::vector<double> v(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) v[static_cast<std::size_t>(i)] = m(i, c);
  return v;
}

/// Collates the artifacts of every stage the run manifest lists. A listed
/// artifact that is missing is an error, never a silently dropped row.
inline void run_report(const Layout& L, const StageOptions& = {}) {
  const json run = read_json(L.run_manifest(), "sample-inputs");
  if (!run.contains("stages")) throw HarnessError(ExitCode::missing_artifact, "run manifest lists no stages");
  const json& stages = run["stages"];
  for (const auto& [name, info] : stages.items()) {
    if (name == "report") continue;
    for (const auto& out : info.at("outputs")) require_file(L.root / out.get<std::string>(), name);
  }
  if (!stages.contains("evaluate")) {
    throw HarnessError(ExitCode::missing_artifact, "report needs the 'evaluate' stage; run it first");
  }
  const ExperimentConfig c = stored_config(L);
  std::ostringstream md;
  md << "# Run report: " << c.name << "\n\n";
  md << "- PDE: `" << c.pde.tag() << "`\n";
  md << "- config hash: `" << run.value("config_hash", std::string()) << "`\n";
  md << "- seeds: model " << c.seed << ", data " << c.data_seed << "\n";
  if (!c.scale_note.empty()) md << "- scale: " << c.scale_note << "\n";
  md << "\n";

  std::vector<std::string> outputs;
  const std::string train_stage = stages.contains("transfer") ? "transfer" : "train";
  json train_m;
  if (stages.contains(train_stage)) {
    train_m = read_json(L.train() / "manifest.json", train_stage);
    const json& e = train_m.at("echo");
    md << "## Training\n\n| N | P | m | batch | steps | branch | trunk | scheme | init | final loss |\n";
    md << "|---|---|---|---|---|---|---|---|---|---|\n";
    md << "| " << e["N"] << " | " << e["P"] << " | " << e["m"] << " | " << e["batch"] << " | " << e["epochs"] << " | "
       << e["branch"]["width"] << "x" << e["branch"]["depth"] << " " << e["branch"]["variant"].get<std::string>() << " | "
       << e["trunk"]["width"] << "x" << e["trunk"]["depth"] << " " << e["trunk"]["variant"].get<std::string>() << " | "
       << train_m.at("mode").get<std::string>() << "/" << e["scheme"].get<std::string>() << " | "
       << train_m.at("init").at("kind").get<std::string>() << " | " << sci(train_m.at("final_loss").get<double>()) << " |\n\n";
  }

  const json summary = read_json(L.eval() / "summary.json", "evaluate");
  md << "## Test error\n\nAverage relative L2 errors across " << summary.at("count").get<Index>() << " test samples.\n\n";
  md << "| Model | Mean | Std | Min | Max |\n|---|---|---|---|---|\n";
  std::string label = c.name;
  if (!train_m.is_null()) {
    label += " (" + train_m.at("mode").get<std::string>() + ", " + train_m.at("echo").at("scheme").get<std::string>() + ", " +
             train_m.at("init").at("kind").get<std::string>() + " init)";
  }
  md << "| " << label << " | " << percent(summary.at("mean").get<double>()) << " | " << percent(summary.at("std").get<double>()) << " | "
     << percent(summary.at("min").get<double>()) << " | " << percent(summary.at("max").get<double>()) << " |\n\n";

  if (stages.contains("extract-basis")) {
    const json bm = read_json(L.basis() / "manifest.json", "extract-basis");
    const Matrix coef = read_matrix(L.basis() / "coefficients.csv", "extract-basis", true);
    md << "## Basis\n\n- extracted p = " << bm.at("p") << ", retained " << bm.at("retained") << " at cutoff "
       << sci(bm.at("cutoff").get<double>()) << ", t* = " << bm.at("freeze_time") << "\n";
    md << "- sigma range: " << sci(coef(0, 1)) << " .. " << sci(coef(coef.rows() - 1, 1)) << "\n\n";
    Series sig{"sigma_k", column(coef, 0), column(coef, 1)};
    std::vector<double> absc = column(coef, 2);
    for (double& v : absc) v = std::abs(v);
    Series cs{"|a_k|, e^sin", column(coef, 0), absc};
    write_text(L.report() / "singular_values.svg",
               line_plot({"Singular values of the frozen trunk", "k", "sigma_k", true}, {sig}));
    write_text(L.report() / "coefficients.svg",
               line_plot({"Expansion coefficients of exp(sin x)", "k", "|a_k|", true}, {cs}));
    md << "![singular values](singular_values.svg)\n![coefficients](coefficients.svg)\n\n";
    outputs.insert(outputs.end(), {"report/singular_values.svg", "report/coefficients.svg"});
  }
  if (stages.contains("spectral-evolve")) {
    const Matrix ek = read_matrix(L.evolve() / "error_vs_k.csv", "spectral-evolve", true);
    const json em = read_json(L.evolve() / "manifest.json", "spectral-evolve");
    md << "## Spectral evolution\n\nMedian average error over " << em.at("ics").get<Index>()
       << " evolved test initial conditions, " << em.value("closure", std::string("strong")) << " closure.\n\n| k | median error |\n|---|---|\n";
    for (Index r = 0; r < ek.rows(); ++r) md << "| " << static_cast<Index>(ek(r, 0)) << " | " << sci(ek(r, 1)) << " |\n";
    md << "\n![error vs k](error_vs_k.svg)\n\n";
    write_text(L.report() / "error_vs_k.svg",
               line_plot({"Spectral evolution error vs retained basis size", "k", "median error", true},
                         {{"median", column(ek, 0), column(ek, 1)}}));
    outputs.push_back("report/error_vs_k.svg");
  }
  write_text(L.report() / "report.md", md.str());
  outputs.push_back("report/report.md");
  record_stage(L, "report", c, {"run.json"}, outputs);
}

// ------------------------------------------------------------------ determinism

/// Drops every "timing" member, recursively.
inline json strip_timing(json j) {
  if (j.is_object()) {
    j.erase("timing");
    for (auto& [k, v] : j.items()) v = strip_timing(v);
  } else if (j.is_array()) {
    for (auto& v : j) v = strip_timing(v);
  }
  return j;
}

/// File content with wall-clock fields removed: "timing" JSON members, the
/// elapsed_s CSV column and Markdown lines tagged "(wall-clock)".
inline std::string comparable_content(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const std::string ext = p.extension().string();
  if (ext == ".json") {
    try {
      return strip_timing(json::parse(text)).dump();
    } catch (const json::parse_error&) {
      return text;
    }
  }
  std::istringstream lines(text);
  std::string line, out;
  if (ext == ".csv") {
    std::optional<std::size_t> drop;
    bool first = true;
    while (std::getline(lines, line)) {
      auto cells = split_csv_line(line);
      if (first) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
          if (cells[i] == "elapsed_s") drop = i;
        }
        first = false;
      }
      if (drop && *drop < cells.size()) cells.erase(cells.begin() + static_cast<std::ptrdiff_t>(*drop));
      out += csv_row(cells) + "\n";
    }
    return out;
  }
  if (ext == ".md") {
    while (std::getline(lines, line)) {
      if (line.find("(wall-clock)") == std::string::npos) out += line + "\n";
    }
    return out;
  }
  return text;
}

/// Relative paths whose comparable content differs, or which exist on one side only.
inline std::vector<std::string> compare_trees(const fs::path& a, const fs::path& b) {
  std::vector<std::string> files, diffs;
  for (const fs::path& root : {a, b}) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root).generic_string());
    }
  }
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  for (const auto& f : files) {
    if (!fs::exists(a / f) || !fs::exists(b / f) || comparable_content(a / f) != comparable_content(b / f)) diffs.push_back(f);
  }
  return diffs;
}

/// Every stage in order, as the CLI would run them.
inline void run_pipeline(const ExperimentConfig& c, const Layout& L, bool evolve = true, const StageOptions& opt = {}) {
  run_sample_inputs(c, L, opt);
  run_solve_reference(c, L, opt);
  run_train(c, L, c.init_checkpoint.empty() ? "train" : "transfer", opt);
  run_extract_basis(c, L, opt);
  if (evolve) run_spectral_evolve(c, L, opt);
  run_evaluate(c, L, {}, opt);
  run_report(L, opt);
}

}  // namespace deeponet::harness
