// SPDX-License-Identifier: Apache-2.0
//
// Synthetic sequence tasks that probe long-range memory.
#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "slimrnn/errors.hpp"
#include "slimrnn/numerics.hpp"
#include "slimrnn/rng.hpp"

namespace slimrnn {

enum class TaskKind { AddingProblem, CopyMemory, CharNextStep };

inline std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::AddingProblem: return "adding";
    case TaskKind::CopyMemory: return "copy";
    case TaskKind::CharNextStep: return "char";
  }
  return "?";
}

struct TaskSpec {
  TaskKind kind = TaskKind::AddingProblem;
  std::size_t T = 30;
  std::size_t batch_size = 32;
  std::size_t delay = 10;          // CopyMemory: number of symbols to recall
  std::size_t alphabet_size = 8;   // CopyMemory
  std::string text;                // CharNextStep: corpus bytes
  std::uint64_t seed = 0;
};

/// Regression batches carry one scalar target per masked step; classification
/// batches carry one class index per step.
struct Batch {
  std::vector<std::vector<Vector>> inputs;  // [sequence][step], each Vector(m)
  std::vector<std::vector<double>> values;  // regression targets, [sequence][masked step]
  std::vector<std::vector<int>> classes;    // class targets, [sequence][step]
  std::vector<bool> mask;                   // length T
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  bool regression = false;

  std::size_t size() const { return inputs.size(); }
  std::size_t steps() const { return mask.size(); }
};

/// Two channels: values in [0, 1) and a marker channel with exactly two ones,
/// one in each half of the sequence. Target is the sum of the marked values,
/// read at the final step.
inline Batch gen_adding_problem(std::size_t T, std::size_t batch_size, std::uint64_t seed) {
  require(T >= 2, "gen_adding_problem: T must be at least 2");
  require(batch_size >= 1, "gen_adding_problem: batch_size must be positive");
  CounterRng rng(splitmix64_mix(seed));
  Batch b;
  b.input_dim = 2;
  b.output_dim = 1;
  b.regression = true;
  b.mask.assign(T, false);
  b.mask.back() = true;
  const std::size_t half = T / 2;
  for (std::size_t s = 0; s < batch_size; ++s) {
    std::vector<Vector> seq(T, Vector(2));
    for (auto& x : seq) x[0] = rng.uniform();
    const std::size_t first = rng.below(half);
    const std::size_t second = half + rng.below(T - half);
    seq[first][1] = 1.0;
    seq[second][1] = 1.0;
    b.values.push_back({seq[first][0] + seq[second][0]});
    b.inputs.push_back(std::move(seq));
  }
  return b;
}

/// One-hot symbols 0..A-1, blank = A, go marker = A+1. The first `delay`
/// steps present symbols, the go marker sits at step T-delay-1 (0-based), and
/// the final `delay` steps must reproduce the symbols.
inline Batch gen_copy_memory(std::size_t T, std::size_t delay, std::size_t alphabet_size,
                             std::size_t batch_size, std::uint64_t seed) {
  require(delay >= 1, "gen_copy_memory: delay must be positive");
  require(T > delay + 20, "gen_copy_memory: requires T > delay + 20");
  require(alphabet_size >= 2, "gen_copy_memory: alphabet_size must be at least 2");
  require(batch_size >= 1, "gen_copy_memory: batch_size must be positive");
  CounterRng rng(splitmix64_mix(seed));
  Batch b;
  b.input_dim = alphabet_size + 2;
  b.output_dim = alphabet_size;
  b.mask.assign(T, false);
  for (std::size_t t = T - delay; t < T; ++t) b.mask[t] = true;
  const std::size_t blank = alphabet_size;
  const std::size_t go = alphabet_size + 1;
  for (std::size_t s = 0; s < batch_size; ++s) {
    std::vector<Vector> seq(T, Vector(b.input_dim));
    std::vector<int> target(T, 0);
    for (std::size_t t = 0; t < T; ++t) {
      if (t < delay) {
        const auto sym = static_cast<std::size_t>(rng.below(alphabet_size));
        seq[t][sym] = 1.0;
        target[T - delay + t] = static_cast<int>(sym);
      } else if (t == T - delay - 1) {
        seq[t][go] = 1.0;
      } else {
        seq[t][blank] = 1.0;
      }
    }
    b.inputs.push_back(std::move(seq));
    b.classes.push_back(std::move(target));
  }
  return b;
}

/// Sorted distinct bytes of `text`.
inline std::vector<unsigned char> text_alphabet(std::string_view text) {
  std::vector<unsigned char> a(text.begin(), text.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

/// Random windows of `text`, one-hot over the text's byte alphabet; the
/// target at each step is the next byte.
inline Batch gen_char_next_step(std::string_view text, std::size_t T, std::size_t batch_size,
                                std::uint64_t seed) {
  require(T >= 1, "gen_char_next_step: T must be positive");
  require(text.size() >= T + 1, "gen_char_next_step: text shorter than T+1");
  require(batch_size >= 1, "gen_char_next_step: batch_size must be positive");
  const auto alphabet = text_alphabet(text);
  std::vector<int> index(256, -1);
  for (std::size_t k = 0; k < alphabet.size(); ++k) index[alphabet[k]] = static_cast<int>(k);

  CounterRng rng(splitmix64_mix(seed));
  Batch b;
  b.input_dim = alphabet.size();
  b.output_dim = alphabet.size();
  b.mask.assign(T, true);
  const std::size_t starts = text.size() - T;
  for (std::size_t s = 0; s < batch_size; ++s) {
    const std::size_t start = rng.below(starts);
    std::vector<Vector> seq(T, Vector(b.input_dim));
    std::vector<int> target(T);
    for (std::size_t t = 0; t < T; ++t) {
      seq[t][index[static_cast<unsigned char>(text[start + t])]] = 1.0;
      target[t] = index[static_cast<unsigned char>(text[start + t + 1])];
    }
    b.inputs.push_back(std::move(seq));
    b.classes.push_back(std::move(target));
  }
  return b;
}

inline Batch generate(const TaskSpec& spec, std::uint64_t seed) {
  switch (spec.kind) {
    case TaskKind::AddingProblem: return gen_adding_problem(spec.T, spec.batch_size, seed);
    case TaskKind::CopyMemory:
      return gen_copy_memory(spec.T, spec.delay, spec.alphabet_size, spec.batch_size, seed);
    case TaskKind::CharNextStep: return gen_char_next_step(spec.text, spec.T, spec.batch_size, seed);
  }
  throw ContractError("generate: unknown task kind");
}

inline std::size_t task_input_dim(const TaskSpec& spec) {
  switch (spec.kind) {
    case TaskKind::AddingProblem: return 2;
    case TaskKind::CopyMemory: return spec.alphabet_size + 2;
    case TaskKind::CharNextStep: return text_alphabet(spec.text).size();
  }
  return 0;
}

inline std::size_t task_output_dim(const TaskSpec& spec) {
  switch (spec.kind) {
    case TaskKind::AddingProblem: return 1;
    case TaskKind::CopyMemory: return spec.alphabet_size;
    case TaskKind::CharNextStep: return text_alphabet(spec.text).size();
  }
  return 0;
}

}  // namespace slimrnn
