// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "slimrnn/gradcheck.hpp"
#include "slimrnn/losses.hpp"
#include "slimrnn/optim.hpp"
#include "slimrnn/tasks.hpp"
#include "slimrnn/train.hpp"

using namespace slimrnn;

// ------------------------------------------------------------------ tasks

TEST(AddingProblem, ShortestSequenceForcesMarkers) {
  const Batch b = gen_adding_problem(2, 5, 1);
  for (std::size_t s = 0; s < b.size(); ++s) {
    EXPECT_EQ(b.inputs[s][0][1], 1.0);
    EXPECT_EQ(b.inputs[s][1][1], 1.0);
    EXPECT_EQ(b.values[s][0], b.inputs[s][0][0] + b.inputs[s][1][0]);
  }
}

TEST(AddingProblem, TargetsAreTheMarkedSums) {
  const Batch b = gen_adding_problem(10, 4, 3);
  ASSERT_EQ(b.size(), 4u);
  EXPECT_TRUE(b.regression);
  EXPECT_EQ(b.mask, (std::vector<bool>{false, false, false, false, false, false, false, false,
                                       false, true}));
  for (std::size_t s = 0; s < 4; ++s) {
    std::vector<std::size_t> marked;
    double sum = 0.0;
    for (std::size_t t = 0; t < 10; ++t) {
      const auto& x = b.inputs[s][t];
      ASSERT_EQ(x.size(), 2u);
      EXPECT_GE(x[0], 0.0);
      EXPECT_LT(x[0], 1.0);
      if (x[1] == 1.0) {
        marked.push_back(t);
        sum += x[0];
      } else {
        EXPECT_EQ(x[1], 0.0);
      }
    }
    ASSERT_EQ(marked.size(), 2u);
    EXPECT_LT(marked[0], 5u);
    EXPECT_GE(marked[1], 5u);
    EXPECT_EQ(b.values[s][0], sum);
  }
}

TEST(AddingProblem, DeterministicPerSeed) {
  const Batch a = gen_adding_problem(12, 3, 9), b = gen_adding_problem(12, 3, 9);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.inputs, gen_adding_problem(12, 3, 10).inputs);
  EXPECT_THROW(gen_adding_problem(1, 3, 9), ContractError);
}

TEST(CopyMemory, SingleSymbolRecall) {
  const std::size_t T = 22, K = 1, A = 2;
  const Batch b = gen_copy_memory(T, K, A, 6, 2);
  EXPECT_EQ(b.input_dim, A + 2);
  for (std::size_t s = 0; s < b.size(); ++s) {
    const auto& first = b.inputs[s][0];
    const auto symbol = static_cast<int>(std::max_element(first.begin(), first.end()) - first.begin());
    EXPECT_LT(symbol, 2);
    EXPECT_EQ(b.classes[s][T - 1], symbol);
    EXPECT_EQ(b.inputs[s][T - K - 1][A + 1], 1.0);
  }
  EXPECT_EQ(std::count(b.mask.begin(), b.mask.end(), true), 1);
  EXPECT_TRUE(b.mask.back());
}

TEST(CopyMemory, TargetsEqualLeadingSymbols) {
  const std::size_t T = 40, K = 10, A = 8;
  const Batch b = gen_copy_memory(T, K, A, 3, 5);
  for (std::size_t s = 0; s < b.size(); ++s) {
    for (std::size_t t = 0; t < T; ++t) {
      const auto& x = b.inputs[s][t];
      EXPECT_EQ(std::accumulate(x.begin(), x.end(), 0.0), 1.0);  // exactly one hot
      if (t < K) {
        const auto sym = static_cast<int>(std::max_element(x.begin(), x.end()) - x.begin());
        EXPECT_EQ(b.classes[s][T - K + t], sym);
      } else if (t != T - K - 1) {
        EXPECT_EQ(x[A], 1.0);  // blank
      }
    }
  }
  for (std::size_t t = 0; t < T; ++t) EXPECT_EQ(b.mask[t], t >= T - K);
}

TEST(CopyMemory, MaskedStepsContributeNoLoss) {
  const Batch b = gen_copy_memory(25, 3, 4, 1, 8);
  std::vector<Vector> logits(25, Vector(4));
  const double base = softmax_xent_loss(logits, b.classes[0], b.mask).value;
  for (std::size_t t = 0; t < 22; ++t) logits[t] = Vector{9.0, -3.0, 2.0, 0.5};
  const auto moved = softmax_xent_loss(logits, b.classes[0], b.mask);
  EXPECT_EQ(moved.value, base);
  for (std::size_t t = 0; t < 22; ++t) EXPECT_EQ(moved.grad[t], Vector(4));
}

TEST(CopyMemory, PreconditionsAreContractErrors) {
  EXPECT_THROW(gen_copy_memory(30, 10, 4, 1, 1), ContractError);
  EXPECT_THROW(gen_copy_memory(40, 10, 1, 1, 1), ContractError);
}

TEST(CharNextStep, TargetsAreTheShiftedWindow) {
  const std::string text = "ababab";
  const Batch b = gen_char_next_step(text, 4, 8, 3);
  EXPECT_EQ(b.input_dim, 2u);
  EXPECT_EQ(b.mask, std::vector<bool>(4, true));
  for (std::size_t s = 0; s < b.size(); ++s) {
    for (std::size_t t = 0; t < 4; ++t) {
      const int here = b.inputs[s][t][0] == 1.0 ? 0 : 1;
      EXPECT_EQ(b.classes[s][t], 1 - here);
      if (t + 1 < 4) EXPECT_EQ(b.inputs[s][t + 1][static_cast<std::size_t>(b.classes[s][t])], 1.0);
    }
  }
}

TEST(CharNextStep, DeterministicAndValidated) {
  const std::string text = "the quick brown fox jumps over the lazy dog";
  EXPECT_EQ(gen_char_next_step(text, 8, 4, 6).inputs, gen_char_next_step(text, 8, 4, 6).inputs);
  EXPECT_THROW(gen_char_next_step("abc", 3, 1, 1), ContractError);
}

// ----------------------------------------------------------------- losses

TEST(MseLoss, Examples) {
  const std::vector<bool> all(3, true);
  const std::vector<double> p{0.5, -1.0, 2.0};
  EXPECT_EQ(mse_loss(p, p, all).value, 0.0);
  const std::vector<double> t{-0.5, -2.0, 1.0};
  EXPECT_EQ(mse_loss(p, t, all).value, 1.0);
}

TEST(MseLoss, HandComputedMaskedCase) {
  const std::vector<double> p{0.3, 1.7, -0.4, 2.2}, t{0.1, 1.0, 0.6, 2.0};
  const std::vector<bool> mask{true, false, true, true};
  const auto l = mse_loss(p, t, mask);
  const double r0 = 0.3 - 0.1, r2 = -0.4 - 0.6, r3 = 2.2 - 2.0;
  EXPECT_NEAR(l.value, (r0 * r0 + r2 * r2 + r3 * r3) / 3.0, 1e-15);
  EXPECT_NEAR(l.grad[0], 2.0 * r0 / 3.0, 1e-15);
  EXPECT_EQ(l.grad[1], 0.0);
  EXPECT_THROW(mse_loss(p, t, std::vector<bool>(4, false)), ContractError);
}

TEST(SoftmaxXent, UniformLogitsGiveLogA) {
  const std::vector<Vector> z(3, Vector(5));
  const std::vector<int> y{0, 3, 4};
  EXPECT_NEAR(softmax_xent_loss(z, y, std::vector<bool>(3, true)).value, std::log(5.0), 1e-15);
}

TEST(SoftmaxXent, SaturatesTowardZeroAndStaysFinite) {
  const std::vector<Vector> z{Vector{800.0, 0.0, -800.0}};
  const auto l = softmax_xent_loss(z, std::vector<int>{0}, std::vector<bool>{true});
  EXPECT_EQ(l.value, 0.0);
  EXPECT_TRUE(std::isfinite(l.grad[0][2]));
}

TEST(SoftmaxXent, RandomCaseAgainstDirectFormula) {
  CounterRng rng(12);
  std::vector<Vector> z(4, Vector(6));
  for (auto& v : z) {
    for (double& x : v) x = rng.uniform(-3, 3);
  }
  const std::vector<int> y{1, 5, 0, 2};
  const std::vector<bool> mask{true, true, false, true};
  double expect = 0.0;
  for (std::size_t t : {0u, 1u, 3u}) {
    double denom = 0.0;
    for (double v : z[t]) denom += std::exp(v);
    expect += -std::log(std::exp(z[t][static_cast<std::size_t>(y[t])]) / denom);
  }
  expect /= 3.0;
  const auto l = softmax_xent_loss(z, y, mask);
  EXPECT_NEAR(l.value, expect, 1e-14);
  // gradient: (softmax - onehot) / 3
  const Vector p = softmax(z[1]);
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_NEAR(l.grad[1][k], (p[k] - (k == 5 ? 1.0 : 0.0)) / 3.0, 1e-15);
  }
  EXPECT_THROW(softmax_xent_loss(z, y, std::vector<bool>(4, false)), ContractError);
}

// ------------------------------------------------------------- optimizers

namespace {

Parameters scalar_params(double w, double b) {
  Parameters p = allocate_params(variant_config(VariantId::LSTM_6b), 1, 1);
  p.W_c(0, 0) = w;
  (*p.b_c)[0] = b;
  return p;
}

}  // namespace

TEST(Optimizer, ZeroGradientLeavesParametersUnchanged) {
  for (auto kind : {OptimizerKind::SGD, OptimizerKind::Adam}) {
    Parameters p = scalar_params(0.4, -0.2);
    const Parameters before = p;
    auto state = make_optimizer_state(OptimizerConfig{kind, 0.1}, p);
    optimizer_step(p, zeros_like(p), state);
    EXPECT_EQ(p, before);
  }
}

TEST(Optimizer, SgdSingleScalarStep) {
  Parameters p = scalar_params(1.0, 0.0);
  auto state = make_optimizer_state(OptimizerConfig{OptimizerKind::SGD, 0.1}, p);
  optimizer_step(p, scalar_params(1.0, 0.0), state);
  EXPECT_DOUBLE_EQ(p.W_c(0, 0), 0.9);
  EXPECT_EQ((*p.b_c)[0], 0.0);
}

TEST(Optimizer, AdamFirstStepClosedForm) {
  Parameters p = scalar_params(0.5, 0.5);
  OptimizerConfig cfg{OptimizerKind::Adam, 0.01};
  auto state = make_optimizer_state(cfg, p);
  const double g0 = 0.3, g1 = -2.0;
  optimizer_step(p, scalar_params(g0, g1), state);
  EXPECT_NEAR(p.W_c(0, 0), 0.5 - 0.01 * g0 / (std::abs(g0) + 1e-8), 1e-15);
  EXPECT_NEAR((*p.b_c)[0], 0.5 - 0.01 * g1 / (std::abs(g1) + 1e-8), 1e-15);
  EXPECT_EQ(state.step, 1u);
}

TEST(Optimizer, GlobalNormClipping) {
  Parameters p = scalar_params(0.0, 0.0);
  auto state = make_optimizer_state(OptimizerConfig{OptimizerKind::SGD, 1.0}, p);
  optimizer_step(p, scalar_params(6.0, 8.0), state);  // norm 10, clipped to 5
  EXPECT_DOUBLE_EQ(p.W_c(0, 0), -3.0);
  EXPECT_DOUBLE_EQ((*p.b_c)[0], -4.0);

  Parameters q = scalar_params(0.0, 0.0);
  OptimizerConfig off{OptimizerKind::SGD, 1.0};
  off.clip = 0.0;
  auto free_state = make_optimizer_state(off, q);
  optimizer_step(q, scalar_params(6.0, 8.0), free_state);
  EXPECT_DOUBLE_EQ(q.W_c(0, 0), -6.0);
}

TEST(Optimizer, MomentsMirrorParameters) {
  const ModelParams model = init_model(variant_config(VariantId::LSTM_C4), 4, 2, 1, 1);
  const auto state = make_optimizer_state(OptimizerConfig{}, model);
  EXPECT_EQ(group_views(state.first).size(), group_views(model).size());
  EXPECT_EQ(zero_mirror(model), state.second);
}

// ----------------------------------------------------------- model + loop

namespace {

ModelParams perturbed(const ModelParams& m, std::size_t group, std::size_t k, double delta) {
  ModelParams out = m;
  auto spans = group_spans(out);
  spans[group][k] += delta;
  return out;
}

void expect_model_gradient_matches(const CellConfig& cfg, const ModelParams& model,
                                   const Batch& batch) {
  const auto lg = batch_loss_grad(cfg, model, batch);
  const auto analytic = group_views(lg.grads);
  std::vector<std::string> names;
  for_each_group(model, [&](const std::string& name, std::span<const double>) { names.push_back(name); });
  const double eps = 1e-5;
  for (std::size_t g = 0; g < analytic.size(); ++g) {
    for (std::size_t k = 0; k < analytic[g].size(); ++k) {
      const double plus = batch_loss(cfg, perturbed(model, g, k, eps), batch);
      const double minus = batch_loss(cfg, perturbed(model, g, k, -eps), batch);
      const double fd = (plus - minus) / (2 * eps);
      EXPECT_LT(relative_error(analytic[g][k], fd), 1e-5) << names[g] << "[" << k << "]";
    }
  }
}

TrainSettings small_settings(VariantId id, double lr, std::uint64_t seed = 1) {
  TrainSettings s;
  s.cell = variant_config(id);
  s.n = 6;
  s.task.kind = TaskKind::AddingProblem;
  s.task.T = 10;
  s.task.batch_size = 8;
  s.optimizer.lr = lr;
  s.batches_per_epoch = 4;
  s.val_batches = 2;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(Model, RegressionGradientIncludingReadoutMatchesFiniteDifferences) {
  const CellConfig cfg = variant_config(VariantId::LSTM);
  const ModelParams model = init_model(cfg, 3, 2, 1, 4, InitScheme::Uniform);
  expect_model_gradient_matches(cfg, model, gen_adding_problem(6, 3, 2));
}

TEST(Model, ClassificationGradientIncludingReadoutMatchesFiniteDifferences) {
  const CellConfig cfg = variant_config(VariantId::LSTM_C5i);
  const ModelParams model = init_model(cfg, 3, 5, 3, 6, InitScheme::Uniform);
  expect_model_gradient_matches(cfg, model, gen_copy_memory(23, 2, 3, 2, 7));
}

TEST(Model, ReadoutCountedSeparately) {
  EXPECT_EQ(readout_param_count(32, 1), 33u);
  Trainer t(small_settings(VariantId::LSTM_3, 1e-3));
  EXPECT_EQ(t.cell_param_count(), param_count(variant_config(VariantId::LSTM_3), 6, 2));
}

TEST(Model, LineSearchProbeEveryVariant) {
  for (VariantId id : kAllVariants) {
    const CellConfig cfg = variant_config(id);
    const ModelParams model = init_model(cfg, 6, 2, 1, 3);
    const Batch batch = gen_adding_problem(10, 8, 5);
    const auto lg = batch_loss_grad(cfg, model, batch);
    bool decreased = false;
    for (double lr : {1e-2, 1e-3, 1e-4}) {
      ModelParams trial = model;
      auto state = make_optimizer_state(OptimizerConfig{OptimizerKind::SGD, lr}, trial);
      optimizer_step(trial, lg.grads, state);
      decreased = decreased || batch_loss(cfg, trial, batch) < lg.loss;
    }
    EXPECT_TRUE(decreased) << to_string(id);
  }
}

TEST(Model, ThreadedBatchGradientEqualsSerial) {
  const CellConfig cfg = variant_config(VariantId::LSTM);
  const ModelParams model = init_model(cfg, 5, 2, 1, 2);
  const Batch batch = gen_adding_problem(12, 9, 3);
  const auto serial = batch_loss_grad(cfg, model, batch, 0);
  const auto threaded = batch_loss_grad(cfg, model, batch, 4);
  EXPECT_EQ(serial.loss, threaded.loss);
  EXPECT_EQ(serial.grads, threaded.grads);
}

TEST(Train, ZeroLearningRateGivesFlatValidationCurve) {
  const auto out = train(small_settings(VariantId::LSTM, 0.0), 3);
  ASSERT_EQ(out.records.size(), 3u);
  for (const auto& r : out.records) EXPECT_EQ(r.val_metric, out.records[0].val_metric);

  Trainer t(small_settings(VariantId::LSTM, 0.0));
  const ModelParams before = t.state().model;
  t.train_until(2);
  EXPECT_EQ(t.state().model, before);
}

TEST(Train, BitReproducible) {
  const auto a = train(small_settings(VariantId::LSTM_2, 1e-2), 3);
  const auto b = train(small_settings(VariantId::LSTM_2, 1e-2), 3);
  EXPECT_EQ(a.records, b.records);
  auto threaded = small_settings(VariantId::LSTM_2, 1e-2);
  threaded.threads = 3;
  EXPECT_EQ(train(threaded, 3).records, a.records);
}

TEST(Train, RecordsCarryTheCellParameterCount) {
  const auto out = train(small_settings(VariantId::LSTM_C4ib, 1e-3), 2);
  for (const auto& r : out.records) {
    EXPECT_EQ(r.param_count, param_count(variant_config(VariantId::LSTM_C4ib), 6, 2));
    EXPECT_EQ(r.seconds, 0.0);
    EXPECT_TRUE(std::isfinite(r.train_loss));
  }
}

TEST(Train, NumericFaultKeepsCompletedRecords) {
  auto s = small_settings(VariantId::LSTM, 1e20);
  s.optimizer.kind = OptimizerKind::SGD;
  s.optimizer.clip = 0.0;
  const auto out = train(s, 10);
  ASSERT_TRUE(out.fault.has_value());
  EXPECT_LT(out.records.size(), 10u);
  for (const auto& r : out.records) EXPECT_TRUE(std::isfinite(r.train_loss));
}

TEST(Train, ResumedTrainerMatchesUninterrupted) {
  Trainer whole(small_settings(VariantId::LSTM_5, 1e-2));
  const auto all = whole.train_until(4).records;
  Trainer first(small_settings(VariantId::LSTM_5, 1e-2));
  first.train_until(2);
  Trainer second(small_settings(VariantId::LSTM_5, 1e-2));
  second.restore(first.state());
  const auto rest = second.train_until(4).records;
  ASSERT_EQ(rest.size(), 2u);
  EXPECT_EQ(rest[0], all[2]);
  EXPECT_EQ(rest[1], all[3]);
  EXPECT_EQ(second.state().model, whole.state().model);
}

TEST(Train, PeriodicTextIsLearned) {
  TrainSettings s;
  s.cell = variant_config(VariantId::LSTM);
  s.n = 8;
  s.task.kind = TaskKind::CharNextStep;
  s.task.text = std::string(120, ' ');
  for (std::size_t k = 0; k < s.task.text.size(); ++k) s.task.text[k] = "abc"[k % 3];
  s.task.T = 12;
  s.task.batch_size = 8;
  s.optimizer.lr = 0.05;
  s.batches_per_epoch = 10;
  s.val_batches = 2;
  s.seed = 3;
  const auto out = train(s, 8);
  ASSERT_EQ(out.records.size(), 8u);
  EXPECT_LT(out.records.back().train_loss, 0.1 * out.records.front().train_loss);
  EXPECT_EQ(out.records.back().val_metric, 1.0);  // accuracy
}
