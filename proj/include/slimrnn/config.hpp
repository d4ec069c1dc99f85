// SPDX-License-Identifier: Apache-2.0
//
// Experiment config files: INI-style sections [experiment], [task],
// [optimizer] and optional [compare], one `key = value` per line. Lines
// starting with ';' or '#' are comments. Unknown sections or keys are errors.
#pragma once

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "slimrnn/errors.hpp"
#include "slimrnn/optim.hpp"
#include "slimrnn/taxonomy.hpp"
#include "slimrnn/tasks.hpp"
#include "slimrnn/train.hpp"

namespace slimrnn {

struct ExperimentConfig {
  // [experiment]
  std::string variant = "LSTM";
  std::size_t n = 32;
  double alpha = kDefaultAlpha;
  ActivationKind activation = ActivationKind::Tanh;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";
  bool record_time = false;
  bool early_stop = false;

  // [task]
  TaskKind task = TaskKind::AddingProblem;
  std::size_t T = 30;
  std::size_t batch_size = 32;
  std::size_t batches_per_epoch = 20;
  std::size_t val_batches = 4;
  std::size_t delay = 10;
  std::size_t alphabet_size = 8;
  std::string text_path;
  double target_metric = 0.05;

  // [optimizer]
  OptimizerConfig optimizer;

  // [compare]
  std::vector<std::string> compare_variants;

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& text) {
  Int v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + text + "'");
  }
  return v;
}

inline double parse_double(const std::string& key, const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v)) {
    throw ConfigError("key '" + key + "': expected a finite number, got '" + text + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (detail::iequals(text, "true") || text == "1") return true;
  if (detail::iequals(text, "false") || text == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + text + "'");
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (k) out += ", ";
    out += items[k];
  }
  return out;
}

struct KeyBinding {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline TaskKind parse_task_kind(const std::string& text) {
  if (iequals(text, "adding")) return TaskKind::AddingProblem;
  if (iequals(text, "copy")) return TaskKind::CopyMemory;
  if (iequals(text, "char")) return TaskKind::CharNextStep;
  throw ConfigError("task.kind: expected adding, copy or char, got '" + text + "'");
}

/// Every recognised key, in canonical serialization order.
inline const std::vector<std::pair<std::string, KeyBinding>>& key_table() {
  using C = ExperimentConfig;
  static const std::vector<std::pair<std::string, KeyBinding>> table = [] {
    std::vector<std::pair<std::string, KeyBinding>> t;
    const auto size_key = [&](std::string name, std::size_t C::*field) {
      t.push_back({name,
                   {[name, field](C& c, const std::string& v) {
                      c.*field = parse_int<std::size_t>(name, v);
                    },
                    [field](const C& c) { return std::to_string(c.*field); }}});
    };
    const auto double_key = [&](std::string name, auto getter) {
      t.push_back({name,
                   {[name, getter](C& c, const std::string& v) { getter(c) = parse_double(name, v); },
                    [getter](const C& c) { return format_double(getter(const_cast<C&>(c))); }}});
    };
    const auto bool_key = [&](std::string name, bool C::*field) {
      t.push_back({name,
                   {[name, field](C& c, const std::string& v) { c.*field = parse_bool(name, v); },
                    [field](const C& c) { return std::string(c.*field ? "true" : "false"); }}});
    };

    t.push_back({"experiment.variant",
                 {[](C& c, const std::string& v) {
                    const auto id = parse_variant(v);
                    if (!id) throw ConfigError("experiment.variant: unknown variant '" + v + "'");
                    c.variant = std::string(to_string(*id));
                  },
                  [](const C& c) { return c.variant; }}});
    size_key("experiment.n", &C::n);
    double_key("experiment.alpha", [](C& c) -> double& { return c.alpha; });
    t.push_back({"experiment.activation",
                 {[](C& c, const std::string& v) {
                    const auto a = parse_activation(v);
                    if (!a) throw ConfigError("experiment.activation: unknown activation '" + v + "'");
                    c.activation = *a;
                  },
                  [](const C& c) { return to_string(c.activation); }}});
    size_key("experiment.epochs", &C::epochs);
    t.push_back({"experiment.seed",
                 {[](C& c, const std::string& v) {
                    c.seed = parse_int<std::uint64_t>("experiment.seed", v);
                  },
                  [](const C& c) { return std::to_string(c.seed); }}});
    t.push_back({"experiment.output_dir",
                 {[](C& c, const std::string& v) { c.output_dir = v; },
                  [](const C& c) { return c.output_dir; }}});
    bool_key("experiment.record_time", &C::record_time);
    bool_key("experiment.early_stop", &C::early_stop);

    t.push_back({"task.kind",
                 {[](C& c, const std::string& v) { c.task = parse_task_kind(v); },
                  [](const C& c) { return to_string(c.task); }}});
    size_key("task.T", &C::T);
    size_key("task.batch_size", &C::batch_size);
    size_key("task.batches_per_epoch", &C::batches_per_epoch);
    size_key("task.val_batches", &C::val_batches);
    size_key("task.delay", &C::delay);
    size_key("task.alphabet_size", &C::alphabet_size);
    t.push_back({"task.text_path",
                 {[](C& c, const std::string& v) { c.text_path = v; },
                  [](const C& c) { return c.text_path; }}});
    double_key("task.target_metric", [](C& c) -> double& { return c.target_metric; });

    t.push_back({"optimizer.kind",
                 {[](C& c, const std::string& v) {
                    if (iequals(v, "sgd")) {
                      c.optimizer.kind = OptimizerKind::SGD;
                    } else if (iequals(v, "adam")) {
                      c.optimizer.kind = OptimizerKind::Adam;
                    } else {
                      throw ConfigError("optimizer.kind: expected sgd or adam, got '" + v + "'");
                    }
                  },
                  [](const C& c) {
                    return std::string(c.optimizer.kind == OptimizerKind::SGD ? "sgd" : "adam");
                  }}});
    double_key("optimizer.lr", [](C& c) -> double& { return c.optimizer.lr; });
    double_key("optimizer.beta1", [](C& c) -> double& { return c.optimizer.beta1; });
    double_key("optimizer.beta2", [](C& c) -> double& { return c.optimizer.beta2; });
    double_key("optimizer.eps", [](C& c) -> double& { return c.optimizer.eps; });
    double_key("optimizer.clip", [](C& c) -> double& { return c.optimizer.clip; });

    t.push_back({"compare.variants",
                 {[](C& c, const std::string& v) {
                    c.compare_variants.clear();
                    for (const auto& name : split_list(v)) {
                      const auto id = parse_variant(name);
                      if (!id) throw ConfigError("compare.variants: unknown variant '" + name + "'");
                      c.compare_variants.emplace_back(to_string(*id));
                    }
                  },
                  [](const C& c) { return join_list(c.compare_variants); }}});
    return t;
  }();
  return table;
}

inline const KeyBinding* find_key(const std::string& key) {
  for (const auto& [name, binding] : key_table()) {
    if (name == key) return &binding;
  }
  return nullptr;
}

}  // namespace detail

/// Sets `section.key` from its textual value, e.g. from a command-line override.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key,
                             const std::string& value) {
  const auto* binding = detail::find_key(key);
  if (!binding) throw ConfigError("unknown config key '" + key + "'");
  binding->set(cfg, detail::trim(value));
}

/// Applies an override of the form `section.key=value`.
inline void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  }
  set_config_value(cfg, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

/// Checks cross-field invariants; throws ConfigError.
inline void validate(const ExperimentConfig& c) {
  if (c.n < 1) throw ConfigError("experiment.n must be positive");
  if (c.epochs < 1) throw ConfigError("experiment.epochs must be positive");
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw ConfigError("experiment.alpha out of range");
  if (c.T < 2) throw ConfigError("task.T must be at least 2");
  if (c.batch_size < 1) throw ConfigError("task.batch_size must be positive");
  if (c.batches_per_epoch < 1) throw ConfigError("task.batches_per_epoch must be positive");
  if (c.val_batches < 1) throw ConfigError("task.val_batches must be positive");
  if (c.task == TaskKind::CopyMemory) {
    if (c.delay < 1 || c.T <= c.delay + 20) throw ConfigError("copy task requires T > delay + 20");
    if (c.alphabet_size < 2) throw ConfigError("task.alphabet_size must be at least 2");
  }
  if (c.task == TaskKind::CharNextStep && c.text_path.empty()) {
    throw ConfigError("char task requires task.text_path");
  }
  if (c.optimizer.lr < 0.0) throw ConfigError("optimizer.lr must be >= 0");
  if (c.optimizer.clip < 0.0) throw ConfigError("optimizer.clip must be >= 0");
  if (!(c.optimizer.beta1 >= 0.0 && c.optimizer.beta1 < 1.0) ||
      !(c.optimizer.beta2 >= 0.0 && c.optimizer.beta2 < 1.0)) {
    throw ConfigError("optimizer betas must lie in [0, 1)");
  }
  if (c.optimizer.eps <= 0.0) throw ConfigError("optimizer.eps must be positive");
}

inline ExperimentConfig parse_config(const std::string& text) {
  // boost's INI reader only knows whole-line ';' comments; also drop '#' lines
  // and trailing comments introduced by whitespace then '#' or ';'
  std::string cleaned;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    const std::string t = detail::trim(line);
    if (!t.empty() && (t.front() == '#' || t.front() == ';')) continue;
    for (std::size_t k = 1; k < line.size(); ++k) {
      if ((line[k] == '#' || line[k] == ';') && (line[k - 1] == ' ' || line[k - 1] == '\t')) {
        line.resize(k);
        break;
      }
    }
    cleaned += line;
    cleaned += '\n';
  }
  boost::property_tree::ptree tree;
  std::istringstream in(cleaned);
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }

  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) {
      throw ConfigError("key '" + section + "' appears outside a section");
    }
    for (const auto& [key, value] : body) {
      set_config_value(cfg, section + "." + key, value.get_value<std::string>());
    }
  }
  validate(cfg);
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Canonical text form; parse_config(serialize_config(c)) == c.
inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& [name, binding] : detail::key_table()) {
    const auto dot = name.find('.');
    const std::string sec = name.substr(0, dot);
    const std::string value = binding.get(cfg);
    if (sec == "compare" && cfg.compare_variants.empty()) continue;
    if (sec != section) {
      if (!section.empty()) out += '\n';
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += name.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

/// FNV-1a over the canonical text of everything that determines the model
/// and its training trajectory (run length, output location, timing and the
/// compare list are excluded).
inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.epochs = 1;
  c.output_dir.clear();
  c.record_time = false;
  c.early_stop = false;
  c.compare_variants.clear();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_config(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline CellConfig cell_config(const ExperimentConfig& c) {
  const auto id = parse_variant(c.variant);
  if (!id) throw ConfigError("unknown variant '" + c.variant + "'");
  return variant_config(*id, c.alpha, c.activation);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read text file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Builds trainer settings; reads the corpus for the char task.
inline TrainSettings train_settings(const ExperimentConfig& c, unsigned threads = 0) {
  validate(c);
  TrainSettings s;
  s.cell = cell_config(c);
  s.n = c.n;
  s.task.kind = c.task;
  s.task.T = c.T;
  s.task.batch_size = c.batch_size;
  s.task.delay = c.delay;
  s.task.alphabet_size = c.alphabet_size;
  s.task.seed = c.seed;
  if (c.task == TaskKind::CharNextStep) {
    s.task.text = read_text_file(c.text_path);
    if (s.task.text.size() < c.T + 1) throw ConfigError("text file shorter than T+1 bytes");
  }
  s.optimizer = c.optimizer;
  s.batches_per_epoch = c.batches_per_epoch;
  s.val_batches = c.val_batches;
  s.seed = c.seed;
  s.record_time = c.record_time;
  s.threads = threads;
  return s;
}

}  // namespace slimrnn
