#pragma once

#include "deeponet/harness/pipeline.hpp"

#include <map>
#include <mutex>
#include <thread>

namespace deeponet::harness {

/// One configuration of a study. `once` entries train a single time (with the
/// first study seed) and serve as transfer sources through `init_from`.
struct StudyEntry {
  std::string label;
  ExperimentConfig config;
  std::string init_from;
  bool once = false;
  bool evolve = false;
};

/// Paired comparison row, e.g. random vs transfer initialization, with
/// optional reference values to print beside the measured means.
struct StudyPair {
  std::string baseline;
  std::string candidate;
  std::optional<double> reference_baseline;
  std::optional<double> reference_candidate;
};

struct StudySpec {
  std::string name = "study";
  std::vector<std::uint64_t> seeds;
  std::vector<StudyEntry> entries;
  std::vector<StudyPair> pairs;
  std::optional<double> reference_ntk_ck_ratio;
};

inline StudySpec study_from_json(const json& j) {
  detail::check_keys(j, "study", {"name", "seeds", "entries", "pairs", "reference_ntk_ck_ratio"});
  StudySpec s;
  detail::read(j, "name", s.name, "study");
  detail::read(j, "seeds", s.seeds, "study");
  if (j.contains("reference_ntk_ck_ratio")) s.reference_ntk_ck_ratio = j["reference_ntk_ck_ratio"].get<double>();
  if (!j.contains("entries") || !j["entries"].is_array()) throw config_error("study.entries must be an array");
  for (const json& e : j["entries"]) {
    detail::check_keys(e, "study.entries[]", {"label", "preset", "config", "init_from", "once", "evolve", "seeds"});
    StudyEntry entry;
    detail::read(e, "label", entry.label, "study.entries[]");
    ExperimentConfig base;
    if (e.contains("preset")) base = preset(e["preset"].get<std::string>());
    entry.config = e.contains("config") ? from_json(e["config"], base) : base;
    detail::read(e, "init_from", entry.init_from, "study.entries[]");
    detail::read(e, "once", entry.once, "study.entries[]");
    detail::read(e, "evolve", entry.evolve, "study.entries[]");
    if (e.contains("seeds") && e["seeds"].get<std::vector<std::uint64_t>>() != s.seeds) {
      throw config_error("study entry '" + entry.label + "' uses a different seed set than the study");
    }
    s.entries.push_back(std::move(entry));
  }
  if (j.contains("pairs")) {
    for (const json& p : j["pairs"]) {
      detail::check_keys(p, "study.pairs[]", {"baseline", "candidate", "reference_baseline", "reference_candidate"});
      StudyPair pair;
      detail::read(p, "baseline", pair.baseline, "study.pairs[]");
      detail::read(p, "candidate", pair.candidate, "study.pairs[]");
      if (p.contains("reference_baseline")) pair.reference_baseline = p["reference_baseline"].get<double>();
      if (p.contains("reference_candidate")) pair.reference_candidate = p["reference_candidate"].get<double>();
      s.pairs.push_back(pair);
    }
  }
  return s;
}

inline void validate(const StudySpec& s) {
  if (s.seeds.empty()) throw config_error("study needs at least one seed");
  std::set<std::uint64_t> unique(s.seeds.begin(), s.seeds.end());
  if (unique.size() != s.seeds.size()) throw config_error("study seeds must be distinct");
  std::map<std::string, const StudyEntry*> by_label;
  Index compared = 0;
  for (const auto& e : s.entries) {
    if (e.label.empty() || e.label.find('/') != std::string::npos) throw config_error("study entry labels must be non-empty path names");
    if (!by_label.emplace(e.label, &e).second) throw config_error("duplicate study entry '" + e.label + "'");
    validate(e.config);
    if (!e.once) ++compared;
  }
  if (compared < 2) throw config_error("a study compares at least two seeded entries");
  for (const auto& e : s.entries) {
    if (e.init_from.empty()) continue;
    const auto it = by_label.find(e.init_from);
    if (it == by_label.end()) throw config_error("entry '" + e.label + "' initializes from unknown entry '" + e.init_from + "'");
    if (!it->second->once) throw config_error("transfer source '" + e.init_from + "' must be a 'once' entry");
    if (e.once) throw config_error("'once' entries cannot themselves be transferred");
  }
  for (const auto& p : s.pairs) {
    if (!by_label.count(p.baseline) || !by_label.count(p.candidate)) throw config_error("study pair names an unknown entry");
  }
}

/// Full serialization; study_from_json reads it back.
inline json study_to_json(const StudySpec& s) {
  json j{{"name", s.name}, {"seeds", s.seeds}, {"entries", json::array()}, {"pairs", json::array()}};
  for (const auto& e : s.entries) {
    json c = to_json(e.config);
    j["entries"].push_back({{"label", e.label}, {"config", c}, {"init_from", e.init_from}, {"once", e.once}, {"evolve", e.evolve}});
  }
  for (const auto& p : s.pairs) {
    json pj{{"baseline", p.baseline}, {"candidate", p.candidate}};
    if (p.reference_baseline) pj["reference_baseline"] = *p.reference_baseline;
    if (p.reference_candidate) pj["reference_candidate"] = *p.reference_candidate;
    j["pairs"].push_back(pj);
  }
  if (s.reference_ntk_ck_ratio) j["reference_ntk_ck_ratio"] = *s.reference_ntk_ck_ratio;
  return j;
}

inline StudySpec load_study(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw HarnessError(ExitCode::missing_artifact, "cannot open study '" + path.string() + "'");
  try {
    return study_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw config_error(path.string() + ": " + e.what());
  }
}

/// Burgers transfer study: random vs transfer initialization for nu = 1e-4,
/// the transfer source trained on nu = 1e-3.
inline StudySpec burgers_transfer_study(bool full = false) {
  StudySpec s;
  s.name = full ? "burgers-transfer-full" : "burgers-transfer-desk";
  s.seeds = {0, 1, 2};
  const std::string tag = full ? "full" : "desk";
  s.entries.push_back({"source-nu-1e-3", preset("burgers-1e-3-" + tag), "", true, false});
  s.entries.push_back({"random", preset("burgers-1e-4-" + tag), "", false, false});
  s.entries.push_back({"transfer", preset("burgers-1e-4-" + tag), "source-nu-1e-3", false, false});
  s.pairs.push_back({"random", "transfer", 0.1367, 0.0703});
  return s;
}

/// NTK vs CK weighting on the same problem, for the training-cost ratio.
inline StudySpec ntk_ck_study() {
  StudySpec s;
  s.name = "advdiff-ntk-vs-ck-desk";
  s.seeds = {0};
  ExperimentConfig ntk = preset("advdiff-desk"), ck = ntk;
  ck.training.scheme = training::Scheme::ck;
  s.entries.push_back({"ntk", ntk, "", false, false});
  s.entries.push_back({"ck", ck, "", false, false});
  s.pairs.push_back({"ntk", "ck", std::nullopt, std::nullopt});
  s.reference_ntk_ck_ratio = (7 * 60 + 56) / (3.0 * 60 + 11);
  return s;
}

inline StudySpec study_preset(const std::string& name) {
  if (name == "burgers-transfer-desk") return burgers_transfer_study(false);
  if (name == "burgers-transfer-full") return burgers_transfer_study(true);
  if (name == "advdiff-ntk-vs-ck-desk") return ntk_ck_study();
  throw config_error("unknown study preset '" + name + "' (available: burgers-transfer-desk, burgers-transfer-full, advdiff-ntk-vs-ck-desk)");
}

struct RunOutcome {
  std::string label;
  std::uint64_t seed = 0;
  fs::path dir;
  double error = 0.0;
  Index retained = 0;
  double seconds_train = 0.0;
  std::vector<double> sigma;
};

struct StudyResult {
  std::vector<RunOutcome> runs;
  json summary;
};

inline fs::path run_dir(const fs::path& root, const StudyEntry& e, std::uint64_t seed) {
  return root / e.label / (e.once ? std::string("once") : "seed" + std::to_string(seed));
}

inline RunOutcome collect_run(const StudyEntry& e, std::uint64_t seed, const fs::path& dir) {
  const Layout L{dir};
  RunOutcome o;
  o.label = e.label;
  o.seed = seed;
  o.dir = dir;
  o.error = read_json(L.eval() / "summary.json", "evaluate").at("mean").get<double>();
  o.retained = read_json(L.basis() / "manifest.json", "extract-basis").at("retained").get<Index>();
  o.seconds_train = read_json(L.train() / "manifest.json", "train").at("timing").at("seconds_total").get<double>();
  o.sigma = column(read_matrix(L.basis() / "sigma.csv", "extract-basis", true), 0);
  return o;
}

inline void run_entry(const StudyEntry& e, std::uint64_t seed, const fs::path& root, const StudySpec& s, const StageOptions& opt) {
  ExperimentConfig c = e.config;
  c.seed = seed;
  if (!e.init_from.empty()) {
    const auto& src = *std::find_if(s.entries.begin(), s.entries.end(), [&](const StudyEntry& x) { return x.label == e.init_from; });
    c.init_checkpoint = Layout{run_dir(root, src, s.seeds.front())}.checkpoint().string();
  }
  run_pipeline(c, Layout{run_dir(root, e, seed)}, e.evolve, opt);
}

inline void run_study_report(const StudySpec& s, const fs::path& root);

/// Runs every entry over the shared seeds (sources first, then the rest on a
/// small thread pool) and writes study.json, study.md and decay plots.
inline StudyResult run_study(const StudySpec& s, const fs::path& root, const StageOptions& opt = {}, unsigned threads = 0) {
  validate(s);
  struct Job {
    const StudyEntry* entry;
    std::uint64_t seed;
  };
  std::vector<Job> sources, jobs;
  for (const auto& e : s.entries) {
    if (e.once) sources.push_back({&e, s.seeds.front()});
    else
      for (auto seed : s.seeds) jobs.push_back({&e, seed});
  }
  auto execute = [&](const std::vector<Job>& list) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    std::size_t next = 0;
    std::mutex mu;
    std::exception_ptr failure;
    auto worker = [&] {
      while (true) {
        Job job;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (next >= list.size() || failure) return;
          job = list[next++];
        }
        try {
          run_entry(*job.entry, job.seed, root, s, opt);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    const unsigned n = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, list.size())));
    std::vector<std::thread> pool;
    for (unsigned i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  };
  execute(sources);
  execute(jobs);

  StudyResult r;
  for (const auto& j : sources) r.runs.push_back(collect_run(*j.entry, j.seed, run_dir(root, *j.entry, j.seed)));
  for (const auto& j : jobs) r.runs.push_back(collect_run(*j.entry, j.seed, run_dir(root, *j.entry, j.seed)));
  write_json(root / "study_spec.json", study_to_json(s));
  run_study_report(s, root);
  r.summary = read_json(root / "study.json", "study");
  return r;
}

/// Collates finished study runs into study.json, study.md and SVG plots.
/// Every expected run must be present.
inline void run_study_report(const StudySpec& s, const fs::path& root) {
  validate(s);
  std::map<std::string, std::vector<RunOutcome>> by;
  for (const auto& e : s.entries) {
    const std::vector<std::uint64_t> seeds = e.once ? std::vector<std::uint64_t>{s.seeds.front()} : s.seeds;
    for (auto seed : seeds) by[e.label].push_back(collect_run(e, seed, run_dir(root, e, seed)));
  }
  json out{{"format", "deeponet-study"}, {"name", s.name}, {"seeds", s.seeds}};
  std::ostringstream md;
  md << "# Study: " << s.name << "\n\nSeeds: ";
  for (std::size_t i = 0; i < s.seeds.size(); ++i) md << (i ? ", " : "") << s.seeds[i];
  md << "\n\n## Per-configuration errors\n\nAverage relative L2 test error, mean and population std over seeds.\n\n";
  md << "| Entry | PDE | Scheme | Init | Mean | Std | Retained (mean) |\n|---|---|---|---|---|---|---|\n";
  std::map<std::string, metrics::Summary> stats;
  std::map<std::string, double> mean_seconds, mean_retained;
  for (const auto& e : s.entries) {
    std::vector<double> errs;
    double secs = 0.0, ret = 0.0;
    for (const auto& o : by[e.label]) {
      errs.push_back(o.error);
      secs += o.seconds_train;
      ret += static_cast<double>(o.retained);
    }
    const auto n = static_cast<double>(by[e.label].size());
    stats[e.label] = metrics::aggregate(errs);
    mean_seconds[e.label] = secs / n;
    mean_retained[e.label] = ret / n;
    json runs = json::array();
    for (const auto& o : by[e.label]) runs.push_back({{"seed", o.seed}, {"error", o.error}, {"retained", o.retained}});
    out["entries"][e.label] = {{"pde", e.config.pde.tag()},
                               {"scheme", training::scheme_name(e.config.training.scheme)},
                               {"init", e.init_from.empty() ? "random" : "transfer:" + e.init_from},
                               {"runs", runs},
                               {"mean", stats[e.label].mean},
                               {"std", stats[e.label].std},
                               {"mean_retained", mean_retained[e.label]},
                               {"timing", {{"mean_train_seconds", mean_seconds[e.label]}}}};
    char ret_buf[32];
    std::snprintf(ret_buf, sizeof ret_buf, "%.1f", mean_retained[e.label]);
    md << "| " << e.label << (e.once ? " (source)" : "") << " | `" << e.config.pde.tag() << "` | "
       << training::scheme_name(e.config.training.scheme) << " | " << (e.init_from.empty() ? "random" : "from " + e.init_from)
       << " | " << percent(stats[e.label].mean) << " | " << percent(stats[e.label].std) << " | " << ret_buf << " |\n";
  }

  json pairs = json::array();
  for (const auto& p : s.pairs) {
    md << "\n## " << p.baseline << " vs " << p.candidate << "\n\n| Seed | " << p.baseline << " | " << p.candidate
       << " |\n|---|---|---|\n";
    const auto& a = by[p.baseline];
    const auto& b = by[p.candidate];
    json rows = json::array();
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
      md << "| " << a[i].seed << " | " << percent(a[i].error) << " | " << percent(b[i].error) << " |\n";
      rows.push_back({{"seed", a[i].seed}, {"baseline", a[i].error}, {"candidate", b[i].error}});
    }
    md << "| mean | " << percent(stats[p.baseline].mean) << " | " << percent(stats[p.candidate].mean) << " |\n";
    if (p.reference_baseline && p.reference_candidate) {
      md << "| published full scale | " << percent(*p.reference_baseline) << " | " << percent(*p.reference_candidate) << " |\n";
    }
    const bool candidate_better = stats[p.candidate].mean <= stats[p.baseline].mean;
    md << "\nCandidate mean error " << (candidate_better ? "<=" : ">") << " baseline mean error; retained basis size "
       << mean_retained[p.candidate] << " vs " << mean_retained[p.baseline] << ".\n";
    json pj{{"baseline", p.baseline},
            {"candidate", p.candidate},
            {"rows", rows},
            {"baseline_mean", stats[p.baseline].mean},
            {"candidate_mean", stats[p.candidate].mean},
            {"candidate_not_worse", candidate_better},
            {"baseline_mean_retained", mean_retained[p.baseline]},
            {"candidate_mean_retained", mean_retained[p.candidate]}};
    if (p.reference_baseline) pj["reference_baseline"] = *p.reference_baseline;
    if (p.reference_candidate) pj["reference_candidate"] = *p.reference_candidate;
    pairs.push_back(pj);
  }
  out["pairs"] = pairs;

  // Training-cost ratio between NTK and CK entries, when both are present.
  std::vector<double> ntk, ck;
  for (const auto& e : s.entries) {
    if (e.config.training.scheme == training::Scheme::ntk) ntk.push_back(mean_seconds[e.label]);
    if (e.config.training.scheme == training::Scheme::ck) ck.push_back(mean_seconds[e.label]);
  }
  if (!ntk.empty() && !ck.empty()) {
    const double ratio = metrics::aggregate(ntk).mean / metrics::aggregate(ck).mean;
    out["timing"]["ntk_ck_ratio"] = ratio;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.2f", ratio);
    md << "\nNTK / CK training time ratio: " << buf << " (wall-clock)\n";
    if (s.reference_ntk_ck_ratio) {
      std::snprintf(buf, sizeof buf, "%.2f", *s.reference_ntk_ck_ratio);
      md << "Published full-scale ratio: " << buf << "\n";
      out["reference_ntk_ck_ratio"] = *s.reference_ntk_ck_ratio;
    }
  }

  std::vector<Series> curves;
  for (const auto& e : s.entries) {
    const auto& o = by[e.label].front();
    Series sr{e.label + " seed " + std::to_string(o.seed), {}, o.sigma};
    for (std::size_t k = 0; k < o.sigma.size(); ++k) sr.x.push_back(static_cast<double>(k + 1));
    curves.push_back(sr);
  }
  write_text(root / "singular_values.svg", line_plot({"Singular-value decay per trained model", "k", "sigma_k", true}, curves));
  md << "\n![singular values](singular_values.svg)\n";
  write_json(root / "study.json", out);
  write_text(root / "study.md", md.str());
}

}  // namespace deeponet::harness
