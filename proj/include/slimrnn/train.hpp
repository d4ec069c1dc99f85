// SPDX-License-Identifier: Apache-2.0
//
// Cell + linear readout model, minibatch gradients, and the epoch loop.
#pragma once

#include <algorithm>
#include <chrono>
#include <exception>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include "slimrnn/cell.hpp"
#include "slimrnn/errors.hpp"
#include "slimrnn/losses.hpp"
#include "slimrnn/numerics.hpp"
#include "slimrnn/optim.hpp"
#include "slimrnn/rng.hpp"
#include "slimrnn/taxonomy.hpp"
#include "slimrnn/tasks.hpp"

namespace slimrnn {

/// y_t = W h_t + b, shared by every variant.
struct Readout {
  Matrix W;  // outputs x n
  Vector b;  // outputs

  bool operator==(const Readout&) const = default;
};

struct ModelParams {
  Parameters cell;
  Readout readout;

  bool operator==(const ModelParams&) const = default;
};

template <class P, class F>
  requires std::is_same_v<std::remove_const_t<P>, ModelParams>
void for_each_group(P& p, F&& f) {
  for_each_group(p.cell, [&](const std::string& name, auto v) { f("cell." + name, v); });
  f(std::string("readout.W"), p.readout.W.values());
  f(std::string("readout.b"), p.readout.b.values());
}

inline std::size_t readout_param_count(std::size_t n, std::size_t outputs) {
  return n * outputs + outputs;
}

inline ModelParams init_model(const CellConfig& cfg, std::size_t n, std::size_t m,
                              std::size_t outputs, std::uint64_t seed,
                              InitScheme scheme = InitScheme::Default) {
  ModelParams p;
  p.cell = init_params(cfg, n, m, seed, scheme);
  p.readout.W = Matrix(outputs, n);
  p.readout.b = Vector(outputs);
  if (scheme != InitScheme::Zero) {
    CounterRng rng = CounterRng::derive(seed, SeedStream::Init).substream(0);
    const double s = 1.0 / std::sqrt(static_cast<double>(n));
    for (double& w : p.readout.W.values()) w = rng.uniform(-s, s);
    if (scheme == InitScheme::Uniform) {
      for (double& w : p.readout.b.values()) w = rng.uniform(-s, s);
    }
  }
  return p;
}

struct LossAndGrad {
  double loss = 0.0;
  ModelParams grads;
};

/// Loss of sequence `s` of `batch` and, optionally, its gradient.
inline LossAndGrad sample_loss_grad(const CellConfig& cfg, const ModelParams& model,
                                    const Batch& batch, std::size_t s, bool want_grad = true) {
  const auto fwd = forward_sequence(cfg, model.cell, batch.inputs[s]);
  const std::size_t T = batch.steps();
  const std::size_t n = model.cell.n;
  const Readout& r = model.readout;

  LossAndGrad out;
  std::vector<Vector> d_h(T, Vector(n));
  ModelParams grads;
  if (want_grad) {
    grads.readout.W = Matrix(r.W.rows(), r.W.cols());
    grads.readout.b = Vector(r.b.size());
  }
  const auto readout_back = [&](std::size_t t, const Vector& d_y) {
    if (!want_grad) return;
    outer_acc(grads.readout.W, d_y, fwd.states[t].h);
    add_in_place(grads.readout.b, d_y);
    matvec_transposed_acc(r.W, d_y, d_h[t]);
  };

  if (batch.regression) {
    require(r.W.rows() == 1, "regression tasks use a single readout output");
    std::vector<double> pred;
    std::vector<std::size_t> steps;
    for (std::size_t t = 0; t < T; ++t) {
      if (!batch.mask[t]) continue;
      pred.push_back(matvec(r.W, fwd.states[t].h)[0] + r.b[0]);
      steps.push_back(t);
    }
    const auto loss = mse_loss(pred, batch.values[s], std::vector<bool>(pred.size(), true));
    out.loss = loss.value;
    for (std::size_t k = 0; k < steps.size(); ++k) readout_back(steps[k], Vector{loss.grad[k]});
  } else {
    std::vector<Vector> logits(T);
    for (std::size_t t = 0; t < T; ++t) {
      logits[t] = batch.mask[t] ? axpy_sum({matvec(r.W, fwd.states[t].h), r.b})
                                : Vector(r.b.size());
    }
    const auto loss = softmax_xent_loss(logits, batch.classes[s], batch.mask);
    out.loss = loss.value;
    for (std::size_t t = 0; t < T; ++t) {
      if (batch.mask[t]) readout_back(t, loss.grad[t]);
    }
  }
  if (!std::isfinite(out.loss)) throw NumericFault("non-finite loss", T - 1);
  if (want_grad) {
    grads.cell = backward_sequence(cfg, model.cell, fwd.caches, d_h).grads;
    out.grads = std::move(grads);
  }
  return out;
}

/// Mean loss and gradient over the batch. Per-sequence gradients may be
/// computed on `threads` workers but are always summed in sequence order.
inline LossAndGrad batch_loss_grad(const CellConfig& cfg, const ModelParams& model,
                                   const Batch& batch, unsigned threads = 0) {
  require(batch.size() >= 1, "batch_loss_grad: empty batch");
  std::vector<LossAndGrad> parts(batch.size());
  if (threads <= 1) {
    for (std::size_t s = 0; s < batch.size(); ++s) parts[s] = sample_loss_grad(cfg, model, batch, s);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t s = w; s < batch.size(); s += threads) {
            parts[s] = sample_loss_grad(cfg, model, batch, s);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  LossAndGrad out;
  out.grads = zero_mirror(model);
  auto acc = group_spans(out.grads);
  for (const auto& part : parts) {
    out.loss += part.loss;
    const auto g = group_views(part.grads);
    for (std::size_t k = 0; k < acc.size(); ++k) {
      for (std::size_t j = 0; j < acc[k].size(); ++j) acc[k][j] += g[k][j];
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  for (auto& span : acc) {
    for (double& v : span) v *= inv;
  }
  return out;
}

inline double batch_loss(const CellConfig& cfg, const ModelParams& model, const Batch& batch) {
  double total = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    total += sample_loss_grad(cfg, model, batch, s, false).loss;
  }
  return total / static_cast<double>(batch.size());
}

/// Validation metric: MSE for regression tasks, masked-step accuracy otherwise.
inline double evaluate_metric(const CellConfig& cfg, const ModelParams& model,
                              std::span<const Batch> batches) {
  double total = 0.0;
  std::size_t count = 0;
  for (const Batch& batch : batches) {
    for (std::size_t s = 0; s < batch.size(); ++s) {
      const auto fwd = forward_sequence(cfg, model.cell, batch.inputs[s]);
      for (std::size_t t = 0; t < batch.steps(); ++t) {
        if (!batch.mask[t]) continue;
        const Vector y = axpy_sum({matvec(model.readout.W, fwd.states[t].h), model.readout.b});
        if (batch.regression) {
          const double r = y[0] - batch.values[s][0];
          total += r * r;
        } else {
          const auto best = static_cast<int>(std::max_element(y.begin(), y.end()) - y.begin());
          total += best == batch.classes[s][t] ? 1.0 : 0.0;
        }
        ++count;
      }
    }
  }
  require(count > 0, "evaluate_metric: no masked steps");
  return total / static_cast<double>(count);
}

inline bool metric_lower_is_better(const TaskSpec& task) {
  return task.kind == TaskKind::AddingProblem;
}

struct TrainRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  double seconds = 0.0;
  std::uint64_t param_count = 0;

  bool operator==(const TrainRecord&) const = default;
};

struct TrainSettings {
  CellConfig cell;
  std::size_t n = 32;
  TaskSpec task;
  OptimizerConfig optimizer;
  std::size_t batches_per_epoch = 10;
  std::size_t val_batches = 4;
  std::uint64_t seed = 0;
  bool record_time = false;
  unsigned threads = 0;
};

struct TrainOutcome {
  std::vector<TrainRecord> records;
  std::optional<NumericFault> fault;
};

/// Position of a training run: everything a checkpoint needs besides the
/// settings.
struct TrainerState {
  ModelParams model;
  OptimizerState<ModelParams> optimizer;
  std::uint64_t next_batch = 0;
  std::size_t epochs_completed = 0;
};

class Trainer {
 public:
  explicit Trainer(TrainSettings settings) : settings_(std::move(settings)) {
    const std::string why = validate_config(settings_.cell);
    require(why.empty(), "Trainer: " + why);
    require(settings_.n >= 1, "Trainer: n must be positive");
    require(settings_.batches_per_epoch >= 1, "Trainer: batches_per_epoch must be positive");
    require(settings_.val_batches >= 1, "Trainer: val_batches must be positive");
    m_ = task_input_dim(settings_.task);
    outputs_ = task_output_dim(settings_.task);
    state_.model = init_model(settings_.cell, settings_.n, m_, outputs_, settings_.seed);
    state_.optimizer = make_optimizer_state(settings_.optimizer, state_.model);
    const CounterRng val = CounterRng::derive(settings_.seed, SeedStream::Validation);
    for (std::size_t k = 0; k < settings_.val_batches; ++k) {
      validation_.push_back(generate(settings_.task, val.substream(k).key()));
    }
  }

  const TrainSettings& settings() const { return settings_; }
  const TrainerState& state() const { return state_; }
  std::size_t input_dim() const { return m_; }
  std::size_t output_dim() const { return outputs_; }
  std::uint64_t cell_param_count() const { return param_count(settings_.cell, settings_.n, m_); }

  /// Replaces the run position, e.g. from a checkpoint.
  void restore(TrainerState state) {
    require(group_views(state.model).size() == group_views(state_.model).size(),
            "Trainer::restore: parameter structure mismatch");
    state_ = std::move(state);
    state_.optimizer.config = settings_.optimizer;
  }

  Batch training_batch(std::uint64_t index) const {
    const CounterRng task = CounterRng::derive(settings_.seed, SeedStream::Task);
    return generate(settings_.task, task.substream(index).key());
  }

  double validation_metric() const {
    return evaluate_metric(settings_.cell, state_.model, validation_);
  }

  TrainRecord run_epoch() {
    const auto start = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    for (std::size_t k = 0; k < settings_.batches_per_epoch; ++k) {
      const Batch batch = training_batch(state_.next_batch);
      auto lg = batch_loss_grad(settings_.cell, state_.model, batch, settings_.threads);
      if (!all_finite_groups(lg.grads)) {
        throw NumericFault("non-finite gradient", batch.steps() - 1);
      }
      optimizer_step(state_.model, lg.grads, state_.optimizer);
      if (!all_finite_groups(state_.model)) {
        throw NumericFault("non-finite parameters after update", batch.steps() - 1);
      }
      ++state_.next_batch;
      loss_sum += lg.loss;
    }
    TrainRecord rec;
    rec.epoch = ++state_.epochs_completed;
    rec.train_loss = loss_sum / static_cast<double>(settings_.batches_per_epoch);
    rec.val_metric = validation_metric();
    rec.param_count = cell_param_count();
    if (settings_.record_time) {
      rec.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    return rec;
  }

  /// Runs until `total_epochs` epochs have completed. A numeric fault stops
  /// the loop; records of the completed epochs are kept.
  template <class OnRecord>
  TrainOutcome train_until(std::size_t total_epochs, OnRecord&& on_record) {
    TrainOutcome out;
    while (state_.epochs_completed < total_epochs) {
      try {
        out.records.push_back(run_epoch());
      } catch (const NumericFault& fault) {
        out.fault = fault;
        break;
      }
      on_record(out.records.back());
    }
    return out;
  }

  TrainOutcome train_until(std::size_t total_epochs) {
    return train_until(total_epochs, [](const TrainRecord&) {});
  }

 private:
  template <class P>
  static bool all_finite_groups(const P& p) {
    bool ok = true;
    for_each_group(p, [&](const std::string&, std::span<const double> v) {
      ok = ok && all_finite(v);
    });
    return ok;
  }

  TrainSettings settings_;
  std::size_t m_ = 0;
  std::size_t outputs_ = 0;
  TrainerState state_;
  std::vector<Batch> validation_;
};

/// Trains a fresh model for `epochs` epochs.
inline TrainOutcome train(const TrainSettings& settings, std::size_t epochs) {
  require(epochs >= 1, "train: epochs must be positive");
  Trainer trainer(settings);
  return trainer.train_until(epochs);
}

}  // namespace slimrnn
