// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "slimrnn/experiment.hpp"

using namespace slimrnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const char* env = std::getenv("SLIMRNN_TEST_TMP");
  const auto dir = (env ? fs::path(env) : fs::temp_directory_path()) / "experiment_tests" / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& row) {
  std::vector<std::string> out;
  std::istringstream in(row);
  for (std::string cell; std::getline(in, cell, ',');) out.push_back(cell);
  if (!row.empty() && row.back() == ',') out.emplace_back();
  return out;
}

ExperimentConfig tiny(const fs::path& dir, std::string variant = "LSTM") {
  ExperimentConfig c;
  c.variant = std::move(variant);
  c.n = 5;
  c.epochs = 4;
  c.seed = 3;
  c.T = 8;
  c.batch_size = 4;
  c.batches_per_epoch = 3;
  c.val_batches = 2;
  c.optimizer.lr = 0.01;
  c.output_dir = dir.string();
  return c;
}

int run_train(const ExperimentConfig& c, std::optional<std::string> resume = std::nullopt) {
  std::ostringstream out, err;
  return cmd_train(c, 0, resume, out, err);
}

}  // namespace

TEST(ParamTable, PaperScaleRows) {
  std::ostringstream out, err;
  ASSERT_EQ(cmd_param_table(100, 64, {"LSTM", "LSTM_6"}, out, err), kExitOk);
  const auto rows = lines(out.str());
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_NE(rows[1].find("66000"), std::string::npos);
  EXPECT_NE(rows[2].find("16500"), std::string::npos);
  EXPECT_NE(rows[2].find("75.0%"), std::string::npos);
}

TEST(ParamTable, AllVariantsByDefaultAndUnknownIsUsageError) {
  std::ostringstream out, err;
  ASSERT_EQ(cmd_param_table(8, 2, {}, out, err), kExitOk);
  EXPECT_EQ(lines(out.str()).size(), 24u);
  EXPECT_EQ(cmd_param_table(8, 2, {"LSTM", "GRU"}, out, err), kExitUsage);
  EXPECT_EQ(cmd_param_table(0, 2, {}, out, err), kExitUsage);
}

TEST(Gradcheck, ExitStatuses) {
  std::ostringstream out, err;
  EXPECT_EQ(cmd_gradcheck({}, out, err), kExitOk);
  GradCheckOptions corrupt;
  corrupt.corrupt = true;
  EXPECT_EQ(cmd_gradcheck(corrupt, out, err), kExitCheckFailed);
  GradCheckOptions unknown;
  unknown.variant = "LSTM_42";
  EXPECT_EQ(cmd_gradcheck(unknown, out, err), kExitUsage);
}

TEST(Gradcheck, JsonDocument) {
  std::ostringstream out, err;
  GradCheckOptions o;
  o.variant = "LSTM_C6b";
  o.json = true;
  ASSERT_EQ(cmd_gradcheck(o, out, err), kExitOk);
  const auto doc = nlohmann::json::parse(out.str());
  EXPECT_TRUE(doc["pass"].get<bool>());
  EXPECT_EQ(doc["variant"], "LSTM_C6b");
  EXPECT_EQ(doc["groups"].size(), 4u);  // W_c, u_c, b_c and the inputs
}

TEST(Catalog, OneLinePerVariant) {
  std::ostringstream out;
  EXPECT_EQ(cmd_catalog(out), kExitOk);
  EXPECT_EQ(lines(out.str()).size(), 23u);
}

TEST(TrainCommand, WritesCurveCheckpointAndManifest) {
  const auto dir = scratch("outputs");
  const auto cfg = tiny(dir);
  ASSERT_EQ(run_train(cfg), kExitOk);
  const auto curve = lines(slurp(dir / "curve.csv"));
  ASSERT_EQ(curve.size(), 5u);
  EXPECT_EQ(curve[0], "epoch,train_loss,val_metric,seconds,param_count");
  EXPECT_EQ(split(curve[1]).size(), 5u);
  EXPECT_EQ(split(curve[4])[0], "4");
  EXPECT_EQ(split(curve[4])[4], std::to_string(param_count(variant_config(VariantId::LSTM), 5, 2)));

  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["config_hash"], hex64(config_hash(cfg)));
  EXPECT_EQ(manifest["rng"], std::string(kRngAlgorithm));
  EXPECT_EQ(manifest["checkpoint_format_version"], kCheckpointVersion);
  EXPECT_EQ(manifest["status"], "completed");

  const Checkpoint ckpt = load_checkpoint((dir / "checkpoint.bin").string());
  EXPECT_EQ(parse_snapshot(ckpt.snapshot).second.epochs_completed, 4u);
}

TEST(TrainCommand, ZeroLearningRateGivesFlatCurve) {
  const auto dir = scratch("flat");
  auto cfg = tiny(dir);
  cfg.optimizer.lr = 0.0;
  ASSERT_EQ(run_train(cfg), kExitOk);
  const auto curve = lines(slurp(dir / "curve.csv"));
  for (std::size_t k = 2; k < curve.size(); ++k) EXPECT_EQ(split(curve[k])[2], split(curve[1])[2]);
}

TEST(TrainCommand, RepeatedRunsAreByteIdentical) {
  const auto a = scratch("repeat_a"), b = scratch("repeat_b");
  ASSERT_EQ(run_train(tiny(a)), kExitOk);
  ASSERT_EQ(run_train(tiny(b)), kExitOk);
  EXPECT_EQ(slurp(a / "curve.csv"), slurp(b / "curve.csv"));
  EXPECT_EQ(slurp(a / "checkpoint.bin"), slurp(b / "checkpoint.bin"));
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
}

TEST(TrainCommand, ResumeEqualsUninterrupted) {
  const auto whole = scratch("resume_whole"), split_dir = scratch("resume_split");
  ASSERT_EQ(run_train(tiny(whole)), kExitOk);
  auto first = tiny(split_dir);
  first.epochs = 1;
  ASSERT_EQ(run_train(first), kExitOk);
  ASSERT_EQ(run_train(tiny(split_dir), (split_dir / "checkpoint.bin").string()), kExitOk);
  EXPECT_EQ(slurp(whole / "curve.csv"), slurp(split_dir / "curve.csv"));
  EXPECT_EQ(slurp(whole / "checkpoint.bin"), slurp(split_dir / "checkpoint.bin"));
}

TEST(TrainCommand, CrossVariantResumeRejected) {
  const auto dir = scratch("cross");
  ASSERT_EQ(run_train(tiny(dir, "LSTM_3")), kExitOk);
  EXPECT_EQ(run_train(tiny(scratch("cross_other"), "LSTM_2"), (dir / "checkpoint.bin").string()),
            kExitPersistence);
}

TEST(TrainCommand, VersionMismatchOnResumeIsPersistenceError) {
  const auto dir = scratch("version");
  ASSERT_EQ(run_train(tiny(dir)), kExitOk);
  auto bytes = read_file_bytes((dir / "checkpoint.bin").string());
  bytes[8] = 9;
  {
    std::ofstream f(dir / "future.bin", std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  EXPECT_EQ(run_train(tiny(dir), (dir / "future.bin").string()), kExitPersistence);
}

TEST(TrainCommand, NumericFaultKeepsPartialCurve) {
  const auto dir = scratch("fault");
  auto cfg = tiny(dir);
  cfg.epochs = 20;
  cfg.optimizer.kind = OptimizerKind::SGD;
  cfg.optimizer.lr = 1e20;
  cfg.optimizer.clip = 0.0;
  EXPECT_EQ(run_train(cfg), kExitNumericFault);
  const auto curve = lines(slurp(dir / "curve.csv"));
  EXPECT_GE(curve.size(), 1u);
  EXPECT_LT(curve.size(), 21u);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "manifest.json"))["status"], "numeric_fault");
}

TEST(TrainCommand, InvalidConfigIsUsageError) {
  auto cfg = tiny(scratch("invalid"));
  cfg.task = TaskKind::CharNextStep;
  cfg.text_path = "/nonexistent/corpus.txt";
  EXPECT_EQ(run_train(cfg), kExitUsage);
}

TEST(TrainCommand, EarlyStopRecordsThreshold) {
  const auto dir = scratch("early");
  auto cfg = tiny(dir);
  cfg.epochs = 50;
  cfg.early_stop = true;
  cfg.target_metric = 10.0;  // met after the first epoch
  const RunSummary run = run_training(cfg, 0);
  EXPECT_EQ(run.status, "early_stopped");
  EXPECT_EQ(run.epochs_to_threshold, 1u);
  EXPECT_EQ(run.records.size(), 1u);
}

TEST(CompareCommand, RowsFollowInputOrderWithDecreasingParams) {
  const auto dir = scratch("compare");
  auto cfg = tiny(dir);
  cfg.epochs = 2;
  cfg.compare_variants = {"LSTM", "LSTM_1", "LSTM_2", "LSTM_3"};
  std::ostringstream out, err;
  ASSERT_EQ(cmd_compare(cfg, 0, out, err), kExitOk) << err.str();
  const auto rows = lines(slurp(dir / "compare.csv"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "variant,params,final_metric,epochs_to_threshold,seconds,status");
  std::uint64_t previous = UINT64_MAX;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto cells = split(rows[k]);
    ASSERT_EQ(cells.size(), 6u);
    EXPECT_EQ(cells[0], cfg.compare_variants[k - 1]);
    const auto params = std::stoull(cells[1]);
    EXPECT_LT(params, previous);
    previous = params;
    EXPECT_TRUE(fs::exists(dir / (std::to_string(k - 1) + "_" + cells[0]) / "curve.csv"));
  }
}

TEST(CompareCommand, RepeatedVariantGivesIdenticalRowsAndThreadsKeepOrder) {
  auto cfg = tiny(scratch("compare_twice"));
  cfg.epochs = 2;
  cfg.compare_variants = {"LSTM_5", "LSTM_C3", "LSTM_5"};
  std::ostringstream out, err;
  ASSERT_EQ(cmd_compare(cfg, 0, out, err), kExitOk);
  const auto serial = lines(slurp(fs::path(cfg.output_dir) / "compare.csv"));
  EXPECT_EQ(serial[1], serial[3]);

  auto threaded = cfg;
  threaded.output_dir = scratch("compare_threaded").string();
  ASSERT_EQ(cmd_compare(threaded, 3, out, err), kExitOk);
  EXPECT_EQ(lines(slurp(fs::path(threaded.output_dir) / "compare.csv")), serial);
}

TEST(CompareCommand, FailuresAreRecordedPerVariant) {
  auto cfg = tiny(scratch("compare_fail"));
  cfg.epochs = 20;
  cfg.optimizer.kind = OptimizerKind::SGD;
  cfg.optimizer.lr = 1e20;
  cfg.optimizer.clip = 0.0;
  cfg.compare_variants = {"LSTM", "LSTM_6b"};
  std::ostringstream out, err;
  const int code = cmd_compare(cfg, 0, out, err);
  const auto rows = lines(slurp(fs::path(cfg.output_dir) / "compare.csv"));
  ASSERT_EQ(rows.size(), 3u);  // both variants reported, whichever failed
  EXPECT_EQ(split(rows[1]).back(), "numeric_fault");
  EXPECT_EQ(code, kExitNumericFault);
}

TEST(CompareCommand, NeedsTwoVariants) {
  auto cfg = tiny(scratch("compare_one"));
  cfg.compare_variants = {"LSTM"};
  std::ostringstream out, err;
  EXPECT_EQ(cmd_compare(cfg, 0, out, err), kExitUsage);
}
