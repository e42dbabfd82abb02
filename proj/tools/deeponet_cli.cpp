#include "deeponet/harness/study.hpp"
#include "deeponet/util/alloc.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

using namespace deeponet;
using namespace deeponet::harness;

constexpr const char* kOutputRootEnv = "DEEPONET_OUTPUT_ROOT";

struct Args {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  std::optional<double> cutoff;
  std::optional<double> freeze_time;
  std::string fields;
  std::string study;
  bool verbose = false;
};

fs::path default_out(const std::string& name) {
  const char* root = std::getenv(kOutputRootEnv);
  return fs::path(root && *root ? root : "runs") / name;
}

/// --config, else --preset, else the config stored in --out.
ExperimentConfig resolve_config(const Args& a) {
  ExperimentConfig c;
  if (!a.config.empty() && !a.preset.empty()) throw HarnessError(ExitCode::usage, "give --config or --preset, not both");
  if (!a.config.empty()) {
    c = load_config(a.config);
  } else if (!a.preset.empty()) {
    c = preset(a.preset);
  } else if (!a.out.empty() && fs::exists(Layout{a.out}.config())) {
    c = stored_config(Layout{a.out});
  } else {
    throw HarnessError(ExitCode::usage, "no configuration: pass --config PATH or --preset NAME (or --out of an existing run)");
  }
  if (a.seed) c.seed = *a.seed;
  if (!a.checkpoint.empty()) c.init_checkpoint = a.checkpoint;
  if (a.cutoff) c.basis.cutoff = *a.cutoff;
  if (a.freeze_time) c.basis.freeze_time = *a.freeze_time;
  validate(c);
  return c;
}

Layout resolve_layout(const Args& a, const ExperimentConfig& c) { return {a.out.empty() ? default_out(c.name) : fs::path(a.out)}; }

StudySpec resolve_study(const Args& a) {
  if (a.study.empty()) throw HarnessError(ExitCode::usage, "study needs --study NAME|PATH");
  if (fs::exists(a.study)) return load_study(a.study);
  return study_preset(a.study);
}

void add_common(CLI::App* cmd, Args& a, bool with_config = true) {
  if (with_config) {
    cmd->add_option("--config", a.config, "experiment config (JSON)");
    cmd->add_option("--preset", a.preset, "named preset; `presets` lists them");
    cmd->add_option("--seed", a.seed, "model seed (init and batch order)");
    cmd->add_option("--cutoff", a.cutoff, "singular-value cutoff");
    cmd->add_option("--freeze-time", a.freeze_time, "trunk freeze time t*");
  }
  cmd->add_option("--out", a.out, std::string("run directory (default $") + kOutputRootEnv + "/<config name>)");
  cmd->add_flag("-v,--verbose", a.verbose, "progress on stderr");
}

int run(int argc, char** argv) {
  CLI::App app{"Physics-informed DeepONet training, basis extraction and spectral evolution"};
  app.require_subcommand(1);
  Args a;
  std::map<std::string, CLI::App*> cmd;
  cmd["sample-inputs"] = app.add_subcommand("sample-inputs", "sample train and test input functions");
  cmd["solve-reference"] = app.add_subcommand("solve-reference", "pseudo-spectral reference solutions of the test inputs");
  cmd["train"] = app.add_subcommand("train", "train from random initialization");
  cmd["transfer"] = app.add_subcommand("transfer", "train starting from --checkpoint");
  cmd["extract-basis"] = app.add_subcommand("extract-basis", "SVD basis of the frozen trunk");
  cmd["spectral-evolve"] = app.add_subcommand("spectral-evolve", "Galerkin evolution on the extracted basis");
  cmd["evaluate"] = app.add_subcommand("evaluate", "relative L2 errors on the test set");
  cmd["report"] = app.add_subcommand("report", "Markdown tables and SVG plots from a run or study directory");
  cmd["run"] = app.add_subcommand("run", "every stage in order");
  cmd["study"] = app.add_subcommand("study", "run a multi-config study over shared seeds");
  cmd["presets"] = app.add_subcommand("presets", "list config presets");
  cmd["show-config"] = app.add_subcommand("show-config", "print the resolved config as JSON");
  for (const auto& name : {"sample-inputs", "solve-reference", "train", "transfer", "extract-basis", "spectral-evolve",
                           "evaluate", "run", "show-config"}) {
    add_common(cmd[name], a);
  }
  cmd["transfer"]->add_option("--checkpoint", a.checkpoint, "initial checkpoint")->required();
  cmd["train"]->add_option("--checkpoint", a.checkpoint, "initial checkpoint (same as transfer)");
  cmd["run"]->add_option("--checkpoint", a.checkpoint, "initial checkpoint for the training stage");
  cmd["evaluate"]->add_option("--fields", a.fields, "directory of predicted test_XXX.csv fields to score instead of the model");
  add_common(cmd["report"], a, false);
  cmd["report"]->add_option("--study", a.study, "study preset or file (default: the study stored in --out)");
  add_common(cmd["study"], a, false);
  cmd["study"]->add_option("--study", a.study, "study preset name or JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  const StageOptions opt{a.verbose};
  try {
    if (cmd["presets"]->parsed()) {
      for (const auto& n : preset_names()) std::cout << n << '\n';
      for (const auto& n : {"burgers-transfer-desk", "burgers-transfer-full", "advdiff-ntk-vs-ck-desk"}) {
        std::cout << n << " (study)\n";
      }
      return 0;
    }
    if (cmd["study"]->parsed()) {
      const StudySpec s = resolve_study(a);
      const fs::path root = a.out.empty() ? default_out(s.name) : fs::path(a.out);
      run_study(s, root, opt);
      std::cout << (root / "study.md").string() << '\n';
      return 0;
    }
    if (cmd["report"]->parsed()) {
      if (a.out.empty()) throw HarnessError(ExitCode::usage, "report needs --out DIR");
      const fs::path root(a.out);
      if (!a.study.empty() || fs::exists(root / "study_spec.json")) {
        const StudySpec s = a.study.empty() ? load_study(root / "study_spec.json") : resolve_study(a);
        run_study_report(s, root);
        std::cout << (root / "study.md").string() << '\n';
      } else {
        run_report(Layout{root}, opt);
        std::cout << (Layout{root}.report() / "report.md").string() << '\n';
      }
      return 0;
    }
    const ExperimentConfig c = resolve_config(a);
    const Layout L = resolve_layout(a, c);
    if (cmd["show-config"]->parsed()) {
      std::cout << to_json(c).dump(2) << '\n';
    } else if (cmd["sample-inputs"]->parsed()) {
      run_sample_inputs(c, L, opt);
    } else if (cmd["solve-reference"]->parsed()) {
      run_solve_reference(c, L, opt);
    } else if (cmd["train"]->parsed()) {
      run_train(c, L, c.init_checkpoint.empty() ? "train" : "transfer", opt);
    } else if (cmd["transfer"]->parsed()) {
      run_train(c, L, "transfer", opt);
    } else if (cmd["extract-basis"]->parsed()) {
      run_extract_basis(c, L, opt);
    } else if (cmd["spectral-evolve"]->parsed()) {
      run_spectral_evolve(c, L, opt);
    } else if (cmd["evaluate"]->parsed()) {
      run_evaluate(c, L, a.fields.empty() ? std::nullopt : std::optional<fs::path>(a.fields), opt);
      const json s = read_json(L.eval() / "summary.json", "evaluate");
      std::cout << "mean relative L2 error " << s.at("mean").get<double>() << " +- " << s.at("std").get<double>() << " over "
                << s.at("count") << " samples\n";
    } else if (cmd["run"]->parsed()) {
      run_pipeline(c, L, true, opt);
      std::cout << (L.report() / "report.md").string() << '\n';
    }
    return 0;
  } catch (const HarnessError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const nn::CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::checkpoint);
  } catch (const spectral::SpectralError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::numerical);
  } catch (const basis::BasisError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::numerical);
  } catch (const solvers::SolverError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::numerical);
  } catch (const sampling::SamplingError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::numerical);
  } catch (const CsvError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::missing_artifact);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::failure);
  }
}

}  // namespace

int main(int argc, char** argv) {
  deeponet::util::keep_heap_warm();
  return run(argc, argv);
}
