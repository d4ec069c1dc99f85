// SPDX-License-Identifier: Apache-2.0
//
// slimrnn: variant catalog, parameter tables, gradient checks, training runs
// and variant comparisons.
//
//   slimrnn catalog
//   slimrnn param-table --n 100 --m 64 [--variants LSTM,LSTM_6]
//   slimrnn gradcheck LSTM --n 4 --m 3 --T 5 --seed 7 [--json] [--debug-corrupt-gradient]
//   slimrnn train run.ini [--set optimizer.lr=0.01] [--resume ckpt.bin]
//   slimrnn compare compare.ini [--set ...]

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slimrnn/slimrnn.hpp"

namespace {

unsigned threads_from_env() {
  const char* v = std::getenv("SLIMRNN_THREADS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const unsigned long n = std::strtoul(v, &end, 10);
  if (*end != '\0') {
    std::cerr << "warning: ignoring SLIMRNN_THREADS='" << v << "'\n";
    return 0;
  }
  return static_cast<unsigned>(n);
}

std::optional<slimrnn::ExperimentConfig> load_with_overrides(const std::string& path,
                                                             const std::vector<std::string>& sets) {
  try {
    auto cfg = slimrnn::load_config(path);
    for (const auto& s : sets) slimrnn::apply_override(cfg, s);
    slimrnn::validate(cfg);
    return cfg;
  } catch (const slimrnn::ConfigError& e) {
    std::cerr << "config: " << e.what() << '\n';
    return std::nullopt;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SLIM LSTM variant toolkit"};
  app.require_subcommand(1);

  auto* catalog = app.add_subcommand("catalog", "list variants with their equations");

  std::uint64_t pt_n = 100, pt_m = 64;
  std::vector<std::string> pt_variants;
  auto* table = app.add_subcommand("param-table", "cell parameter counts per variant");
  table->add_option("--n", pt_n, "hidden size")->capture_default_str();
  table->add_option("--m", pt_m, "input size")->capture_default_str();
  table->add_option("--variants", pt_variants, "variants (default: all)")->delimiter(',');

  slimrnn::GradCheckOptions gc;
  auto* grad = app.add_subcommand("gradcheck", "compare BPTT against finite differences");
  grad->add_option("variant", gc.variant, "variant name")->required();
  grad->add_option("--n", gc.n)->capture_default_str();
  grad->add_option("--m", gc.m)->capture_default_str();
  grad->add_option("--T", gc.T)->capture_default_str();
  grad->add_option("--seed", gc.seed)->capture_default_str();
  grad->add_option("--alpha", gc.alpha, "constant forget value")->capture_default_str();
  grad->add_option("--eps", gc.eps)->capture_default_str();
  grad->add_option("--threshold", gc.threshold)->capture_default_str();
  grad->add_flag("--json", gc.json, "emit JSON instead of a table");
  grad->add_flag("--debug-corrupt-gradient", gc.corrupt, "perturb one analytic entry");

  std::string config_path;
  std::vector<std::string> sets;
  std::string resume;
  auto* train = app.add_subcommand("train", "train one variant from a config file");
  train->add_option("config", config_path)->required();
  train->add_option("--set", sets, "override, section.key=value")->allow_extra_args(false);
  train->add_option("--resume", resume, "continue from a checkpoint");

  auto* compare = app.add_subcommand("compare", "train the [compare] variants side by side");
  compare->add_option("config", config_path)->required();
  compare->add_option("--set", sets, "override, section.key=value")->allow_extra_args(false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : slimrnn::kExitUsage;
  }

  if (*catalog) return slimrnn::cmd_catalog(std::cout);
  if (*table) return slimrnn::cmd_param_table(pt_n, pt_m, pt_variants, std::cout, std::cerr);
  if (*grad) return slimrnn::cmd_gradcheck(gc, std::cout, std::cerr);

  const auto cfg = load_with_overrides(config_path, sets);
  if (!cfg) return slimrnn::kExitUsage;
  const unsigned threads = threads_from_env();
  if (*train) {
    std::optional<std::string> from;
    if (!resume.empty()) from = resume;
    return slimrnn::cmd_train(*cfg, threads, from, std::cout, std::cerr);
  }
  return slimrnn::cmd_compare(*cfg, threads, std::cout, std::cerr);
}
