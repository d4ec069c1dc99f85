// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the slimrnn CLI. Each returns a process exit
// status and writes human output to the given streams.
#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "slimrnn/checkpoint.hpp"
#include "slimrnn/config.hpp"
#include "slimrnn/errors.hpp"
#include "slimrnn/gradcheck.hpp"
#include "slimrnn/rng.hpp"
#include "slimrnn/taxonomy.hpp"
#include "slimrnn/train.hpp"

namespace slimrnn {

inline constexpr std::string_view kLibraryVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitUsage = 2,
  kExitNumericFault = 3,
  kExitPersistence = 4,
};

inline constexpr std::string_view kCurveHeader = "epoch,train_loss,val_metric,seconds,param_count";

inline std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string curve_row(const TrainRecord& r) {
  return std::to_string(r.epoch) + "," + format_g9(r.train_loss) + "," + format_g9(r.val_metric) +
         "," + format_g9(r.seconds) + "," + std::to_string(r.param_count);
}

// ---------------------------------------------------------------- catalog

inline int cmd_catalog(std::ostream& out) {
  for (VariantId id : kAllVariants) {
    const CellConfig cfg = variant_config(id);
    char name[16];
    std::snprintf(name, sizeof name, "%-10s", std::string(to_string(id)).c_str());
    out << name << describe(cfg) << '\n';
  }
  return kExitOk;
}

// ------------------------------------------------------------ param-table

inline int cmd_param_table(std::uint64_t n, std::uint64_t m, const std::vector<std::string>& names,
                           std::ostream& out, std::ostream& err) {
  if (n < 1 || m < 1) {
    err << "param-table: n and m must be >= 1\n";
    return kExitUsage;
  }
  std::vector<VariantId> ids;
  if (names.empty()) {
    ids.assign(kAllVariants.begin(), kAllVariants.end());
  } else {
    for (const auto& name : names) {
      const auto id = parse_variant(name);
      if (!id) {
        err << "param-table: unknown variant '" << name << "'\n";
        return kExitUsage;
      }
      ids.push_back(*id);
    }
  }
  const double standard = static_cast<double>(param_count(variant_config(VariantId::LSTM), n, m));
  char line[128];
  std::snprintf(line, sizeof line, "%-9s %13s %14s %9s\n", "variant", "params", "reduction",
                "percent");
  out << line;
  for (VariantId id : ids) {
    const CellConfig cfg = variant_config(id);
    const auto count = param_count(cfg, n, m);
    const auto red = reduction_vs_standard(cfg, n, m);
    std::snprintf(line, sizeof line, "%-9s %13llu %14llu %8.1f%%\n",
                  std::string(to_string(id)).c_str(), static_cast<unsigned long long>(count),
                  static_cast<unsigned long long>(red), 100.0 * static_cast<double>(red) / standard);
    out << line;
  }
  return kExitOk;
}

// -------------------------------------------------------------- gradcheck

struct GradCheckOptions {
  std::string variant = "LSTM";
  std::size_t n = 4;
  std::size_t m = 3;
  std::size_t T = 5;
  std::uint64_t seed = 7;
  double alpha = kDefaultAlpha;
  double eps = 1e-5;
  double threshold = 1e-5;
  bool corrupt = false;  // debug: perturb one analytic entry of W_c
  bool json = false;
};

inline int cmd_gradcheck(const GradCheckOptions& o, std::ostream& out, std::ostream& err) {
  const auto id = parse_variant(o.variant);
  if (!id) {
    err << "gradcheck: unknown variant '" << o.variant << "'\n";
    return kExitUsage;
  }
  try {
    const CellConfig cfg = variant_config(*id, o.alpha);
    std::optional<GradientCorruption> corrupt;
    if (o.corrupt) corrupt = GradientCorruption{"W_c", 0};
    const auto report = gradient_check(cfg, o.n, o.m, o.T, o.seed, o.eps, o.threshold, corrupt);
    if (o.json) {
      nlohmann::json doc = to_json(report);
      doc["variant"] = std::string(to_string(*id));
      doc["n"] = o.n;
      doc["m"] = o.m;
      doc["T"] = o.T;
      doc["seed"] = o.seed;
      out << doc.dump(2) << '\n';
    } else {
      out << "variant " << to_string(*id) << " n " << o.n << " m " << o.m << " T " << o.T
          << " seed " << o.seed << '\n'
          << to_table(report);
    }
    return report.pass ? kExitOk : kExitCheckFailed;
  } catch (const NumericFault& e) {
    err << "gradcheck: numeric fault: " << e.what() << '\n';
    return kExitNumericFault;
  } catch (const ContractError& e) {
    err << "gradcheck: " << e.what() << '\n';
    return kExitUsage;
  }
}

// ----------------------------------------------------------- checkpoints

/// Run position stored next to the config inside a checkpoint snapshot.
struct ResumeInfo {
  std::size_t epochs_completed = 0;
  std::uint64_t next_batch = 0;
  std::uint64_t optimizer_step = 0;
};

namespace detail {

inline constexpr std::string_view kResumeSection = "\n[resume]\n";

// the snapshot records what the run is, not where it was written
inline ExperimentConfig snapshot_config(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.output_dir.clear();
  return c;
}

}  // namespace detail

inline Checkpoint make_checkpoint(const ExperimentConfig& cfg, const TrainerState& state) {
  Checkpoint ckpt;
  ckpt.snapshot = serialize_config(detail::snapshot_config(cfg));
  ckpt.snapshot += detail::kResumeSection;
  ckpt.snapshot += "epochs_completed = " + std::to_string(state.epochs_completed) + "\n";
  ckpt.snapshot += "next_batch = " + std::to_string(state.next_batch) + "\n";
  ckpt.snapshot += "optimizer_step = " + std::to_string(state.optimizer.step) + "\n";
  ckpt.snapshot += "rng = " + std::string(kRngAlgorithm) + "\n";
  const auto add = [&](const std::string& prefix, const ModelParams& p) {
    for_each_group(p, [&](const std::string& name, std::span<const double> v) {
      ckpt.groups.push_back({prefix + name, std::vector<double>(v.begin(), v.end())});
    });
  };
  add("", state.model);
  add("adam.m.", state.optimizer.first);
  add("adam.v.", state.optimizer.second);
  return ckpt;
}

/// Splits a snapshot into its config and resume position.
inline std::pair<ExperimentConfig, ResumeInfo> parse_snapshot(const std::string& snapshot) {
  const auto at = snapshot.find(detail::kResumeSection);
  if (at == std::string::npos) throw PersistenceError("checkpoint snapshot lacks a resume section");
  ExperimentConfig cfg;
  try {
    cfg = parse_config(snapshot.substr(0, at));
  } catch (const ConfigError& e) {
    throw PersistenceError(std::string("checkpoint snapshot: ") + e.what());
  }
  ResumeInfo info;
  bool rng_ok = false;
  std::istringstream lines(snapshot.substr(at + detail::kResumeSection.size()));
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      if (key == "epochs_completed") {
        info.epochs_completed = detail::parse_int<std::size_t>(key, value);
      } else if (key == "next_batch") {
        info.next_batch = detail::parse_int<std::uint64_t>(key, value);
      } else if (key == "optimizer_step") {
        info.optimizer_step = detail::parse_int<std::uint64_t>(key, value);
      } else if (key == "rng") {
        rng_ok = value == kRngAlgorithm;
      } else {
        throw PersistenceError("checkpoint snapshot: unknown resume key '" + key + "'");
      }
    } catch (const ConfigError& e) {
      throw PersistenceError(std::string("checkpoint snapshot: ") + e.what());
    }
  }
  if (!rng_ok) throw PersistenceError("checkpoint was written with a different generator");
  return {cfg, info};
}

/// Rebuilds a trainer state from `ckpt`, using `like` for the group shapes.
inline TrainerState restore_state(const Checkpoint& ckpt, const TrainerState& like) {
  const auto [cfg, info] = parse_snapshot(ckpt.snapshot);
  TrainerState state = like;
  const auto fill = [&](const std::string& prefix, ModelParams& p) {
    for_each_group(p, [&](const std::string& name, std::span<double> v) {
      const NamedGroup* g = ckpt.find(prefix + name);
      if (!g) throw PersistenceError("checkpoint lacks group '" + prefix + name + "'");
      if (g->values.size() != v.size()) {
        throw PersistenceError("checkpoint group '" + prefix + name + "' has the wrong size");
      }
      std::copy(g->values.begin(), g->values.end(), v.begin());
    });
  };
  fill("", state.model);
  fill("adam.m.", state.optimizer.first);
  fill("adam.v.", state.optimizer.second);
  state.optimizer.step = info.optimizer_step;
  state.next_batch = info.next_batch;
  state.epochs_completed = info.epochs_completed;
  return state;
}

// ------------------------------------------------------------------ train

struct RunSummary {
  int exit = kExitOk;
  std::string status;  // completed | early_stopped | numeric_fault | failed
  std::string message;
  std::uint64_t param_count = 0;
  std::vector<TrainRecord> records;  // this invocation's records
  std::optional<TrainRecord> last;   // latest record, including resumed history
  std::optional<std::size_t> epochs_to_threshold;
  double seconds = 0.0;
};

inline bool metric_meets_target(const ExperimentConfig& cfg, double metric) {
  return cfg.task == TaskKind::AddingProblem ? metric < cfg.target_metric
                                             : metric >= cfg.target_metric;
}

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::vector<std::string> out;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

inline void write_manifest(const std::filesystem::path& path, const ExperimentConfig& cfg,
                           const RunSummary& run, std::size_t epochs_completed,
                           std::uint64_t readout_params) {
  nlohmann::ordered_json doc;
  doc["slimrnn_version"] = kLibraryVersion;
  doc["checkpoint_format_version"] = kCheckpointVersion;
  doc["rng"] = kRngAlgorithm;
  doc["seed"] = cfg.seed;
  doc["config_hash"] = hex64(config_hash(cfg));
  doc["variant"] = cfg.variant;
  doc["task"] = to_string(cfg.task);
  doc["cell_param_count"] = run.param_count;
  doc["readout_param_count"] = readout_params;
  doc["epochs_completed"] = epochs_completed;
  doc["status"] = run.status;
  if (run.last) doc["final_val_metric"] = run.last->val_metric;
  if (run.epochs_to_threshold) {
    doc["epochs_to_threshold"] = *run.epochs_to_threshold;
  } else {
    doc["epochs_to_threshold"] = nullptr;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw PersistenceError("cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

}  // namespace detail

/// Trains per `cfg`, writing curve.csv, checkpoint.bin and manifest.json into
/// cfg.output_dir. With `resume_from`, continues the run stored there; the
/// checkpoint must have been written for the same configuration.
inline RunSummary run_training(const ExperimentConfig& cfg, unsigned threads,
                               const std::optional<std::string>& resume_from = std::nullopt) {
  RunSummary run;
  const auto fail = [&](int code, std::string status, std::string msg) {
    run.exit = code;
    run.status = std::move(status);
    run.message = std::move(msg);
    return run;
  };

  std::optional<Trainer> trainer;
  try {
    trainer.emplace(train_settings(cfg, threads));
  } catch (const ConfigError& e) {
    return fail(kExitUsage, "failed", e.what());
  } catch (const ContractError& e) {
    return fail(kExitUsage, "failed", e.what());
  }
  run.param_count = trainer->cell_param_count();

  namespace fs = std::filesystem;
  const fs::path dir = cfg.output_dir.empty() ? fs::path(".") : fs::path(cfg.output_dir);
  const fs::path curve_path = dir / "curve.csv";
  std::vector<std::string> kept_rows;
  try {
    if (resume_from) {
      const Checkpoint ckpt = load_checkpoint(*resume_from);
      const auto [saved, info] = parse_snapshot(ckpt.snapshot);
      if (config_hash(saved) != config_hash(cfg)) {
        throw PersistenceError("checkpoint config hash " + hex64(config_hash(saved)) +
                               " does not match this run (" + hex64(config_hash(cfg)) + ")");
      }
      trainer->restore(restore_state(ckpt, trainer->state()));
      // keep the curve rows the checkpoint already covers
      const auto lines = detail::read_lines(curve_path);
      for (std::size_t k = 1; k < lines.size() && kept_rows.size() < info.epochs_completed; ++k) {
        kept_rows.push_back(lines[k]);
      }
    }
    fs::create_directories(dir);
  } catch (const PersistenceError& e) {
    return fail(kExitPersistence, "failed", e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(kExitPersistence, "failed", e.what());
  }

  std::ofstream curve(curve_path, std::ios::trunc);
  if (!curve) return fail(kExitPersistence, "failed", "cannot write '" + curve_path.string() + "'");
  curve << kCurveHeader << '\n';
  for (const auto& row : kept_rows) curve << row << '\n';
  curve.flush();

  run.status = "completed";
  while (trainer->state().epochs_completed < cfg.epochs) {
    TrainRecord rec;
    try {
      rec = trainer->run_epoch();
    } catch (const NumericFault& e) {
      run.exit = kExitNumericFault;
      run.status = "numeric_fault";
      run.message = std::string("numeric fault: ") + e.what();
      break;
    }
    curve << curve_row(rec) << '\n';
    curve.flush();
    run.records.push_back(rec);
    run.last = rec;
    run.seconds += rec.seconds;
    if (!run.epochs_to_threshold && metric_meets_target(cfg, rec.val_metric)) {
      run.epochs_to_threshold = rec.epoch;
      if (cfg.early_stop) {
        run.status = "early_stopped";
        break;
      }
    }
  }
  if (!curve) return fail(kExitPersistence, "failed", "write to curve file failed");

  try {
    // after a fault the in-memory state may be partially updated; keep the
    // last checkpoint on disk instead
    if (run.exit == kExitOk) {
      save_checkpoint((dir / "checkpoint.bin").string(), make_checkpoint(cfg, trainer->state()));
    }
    detail::write_manifest(dir / "manifest.json", cfg, run, trainer->state().epochs_completed,
                           readout_param_count(cfg.n, trainer->output_dim()));
  } catch (const PersistenceError& e) {
    return fail(kExitPersistence, "failed", e.what());
  }
  return run;
}

inline int cmd_train(const ExperimentConfig& cfg, unsigned threads,
                     const std::optional<std::string>& resume_from, std::ostream& out,
                     std::ostream& err) {
  const RunSummary run = run_training(cfg, threads, resume_from);
  if (run.exit != kExitOk && run.exit != kExitNumericFault) {
    err << "train: " << run.message << '\n';
    return run.exit;
  }
  for (const auto& r : run.records) {
    out << "epoch " << r.epoch << " train_loss " << format_g9(r.train_loss) << " val_metric "
        << format_g9(r.val_metric) << '\n';
  }
  if (run.exit == kExitNumericFault) {
    err << "train: " << run.message << '\n';
  } else {
    out << "status " << run.status << ", outputs in " << cfg.output_dir << '\n';
  }
  return run.exit;
}

// ---------------------------------------------------------------- compare

/// Trains every variant in cfg.compare_variants with otherwise identical
/// settings. Up to `threads` runs proceed at once (each single-threaded);
/// rows keep the input order.
inline int cmd_compare(const ExperimentConfig& cfg, unsigned threads, std::ostream& out,
                       std::ostream& err) {
  if (cfg.compare_variants.size() < 2) {
    err << "compare: [compare] variants must list at least two variants\n";
    return kExitUsage;
  }
  namespace fs = std::filesystem;
  const fs::path root = cfg.output_dir.empty() ? fs::path(".") : fs::path(cfg.output_dir);
  const std::size_t count = cfg.compare_variants.size();
  std::vector<RunSummary> runs(count);
  const auto run_one = [&](std::size_t k) {
    ExperimentConfig c = cfg;
    c.variant = cfg.compare_variants[k];
    c.compare_variants.clear();
    c.output_dir = (root / (std::to_string(k) + "_" + c.variant)).string();
    runs[k] = run_training(c, 0);
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) run_one(k);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t k = w; k < count; k += workers) run_one(k);
      });
    }
    for (auto& t : pool) t.join();
  }

  int exit = kExitOk;
  std::string csv = "variant,params,final_metric,epochs_to_threshold,seconds,status\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-9s %9s %16s %10s %10s  %s\n", "variant", "params",
                "final_metric", "to_thresh", "seconds", "status");
  out << line;
  for (std::size_t k = 0; k < count; ++k) {
    const RunSummary& r = runs[k];
    const std::string metric = r.last ? format_g9(r.last->val_metric) : "";
    const std::string epochs = r.epochs_to_threshold ? std::to_string(*r.epochs_to_threshold) : "";
    csv += cfg.compare_variants[k] + "," + std::to_string(r.param_count) + "," + metric + "," +
           epochs + "," + format_g9(r.seconds) + "," + r.status + "\n";
    std::snprintf(line, sizeof line, "%-9s %9llu %16s %10s %10s  %s\n",
                  cfg.compare_variants[k].c_str(), static_cast<unsigned long long>(r.param_count),
                  metric.empty() ? "-" : metric.c_str(), epochs.empty() ? "-" : epochs.c_str(),
                  format_g9(r.seconds).c_str(), r.status.c_str());
    out << line;
    if (r.exit != kExitOk) {
      err << "compare: " << cfg.compare_variants[k] << ": " << r.message << '\n';
      if (exit == kExitOk) exit = r.exit;
    }
  }
  try {
    fs::create_directories(root);
    std::ofstream f(root / "compare.csv", std::ios::trunc);
    f << csv;
    if (!f) throw PersistenceError("cannot write compare.csv");
  } catch (const std::exception& e) {
    err << "compare: " << e.what() << '\n';
    return kExitPersistence;
  }
  return exit;
}

}  // namespace slimrnn
