// SPDX-License-Identifier: Apache-2.0
//
// The LSTM variant family as one compositional configuration: each gate
// picks one of seven forms, the cell-input block picks dense or point-wise
// recurrent mixing with or without bias, and the "b" forms drop the
// cell-input squashing.
#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "slimrnn/errors.hpp"
#include "slimrnn/numerics.hpp"

namespace slimrnn {

inline constexpr double kDefaultAlpha = 0.96;

/// Which terms drive a gate's pre-activation.
///   Full               sigma(W x + U h + b)
///   StateBias          sigma(U h + b)
///   StateOnly          sigma(U h)
///   BiasOnly           sigma(b)
///   PointwiseState     sigma(u . h)
///   PointwiseStateBias sigma(u . h + b)
///   Constant           fixed value, not trainable
struct GateForm {
  enum class Tag { Full, StateBias, StateOnly, BiasOnly, PointwiseState, PointwiseStateBias, Constant };

  Tag tag = Tag::Full;
  double constant_value = 0.0;  // meaningful only for Constant

  static constexpr GateForm of(Tag t) { return GateForm{t, 0.0}; }
  static constexpr GateForm constant(double v) { return GateForm{Tag::Constant, v}; }

  constexpr bool is_constant() const { return tag == Tag::Constant; }
  constexpr bool has_input_matrix() const { return tag == Tag::Full; }
  constexpr bool has_state_matrix() const {
    return tag == Tag::Full || tag == Tag::StateBias || tag == Tag::StateOnly;
  }
  constexpr bool has_state_vector() const {
    return tag == Tag::PointwiseState || tag == Tag::PointwiseStateBias;
  }
  constexpr bool has_bias() const {
    return tag == Tag::Full || tag == Tag::StateBias || tag == Tag::BiasOnly ||
           tag == Tag::PointwiseStateBias;
  }

  bool operator==(const GateForm&) const = default;
};

struct CellInputForm {
  enum class Mixing { DenseMatrix, PointwiseVector };

  Mixing recurrent_mixing = Mixing::DenseMatrix;
  bool bias_present = true;

  bool operator==(const CellInputForm&) const = default;
};

struct CellConfig {
  GateForm input_gate = GateForm::of(GateForm::Tag::Full);
  GateForm forget_gate = GateForm::of(GateForm::Tag::Full);
  GateForm output_gate = GateForm::of(GateForm::Tag::Full);
  CellInputForm cell_input{};
  bool outer_nonlinearity = true;
  ActivationKind activation = ActivationKind::Tanh;
  double alpha = kDefaultAlpha;

  bool operator==(const CellConfig&) const = default;
};

enum class VariantId {
  LSTM, LSTM_1, LSTM_2, LSTM_3, LSTM_4, LSTM_4i, LSTM_4ib, LSTM_5, LSTM_5i, LSTM_5ib,
  LSTM_6, LSTM_6b, CELL_1, CELL_2, LSTM_C3, LSTM_C4, LSTM_C4i, LSTM_C4ib, LSTM_C5,
  LSTM_C5i, LSTM_C5ib, LSTM_C6, LSTM_C6b,
};

inline constexpr std::array<VariantId, 23> kAllVariants = {
    VariantId::LSTM,     VariantId::LSTM_1,   VariantId::LSTM_2,    VariantId::LSTM_3,
    VariantId::LSTM_4,   VariantId::LSTM_4i,  VariantId::LSTM_4ib,  VariantId::LSTM_5,
    VariantId::LSTM_5i,  VariantId::LSTM_5ib, VariantId::LSTM_6,    VariantId::LSTM_6b,
    VariantId::CELL_1,   VariantId::CELL_2,   VariantId::LSTM_C3,   VariantId::LSTM_C4,
    VariantId::LSTM_C4i, VariantId::LSTM_C4ib, VariantId::LSTM_C5,  VariantId::LSTM_C5i,
    VariantId::LSTM_C5ib, VariantId::LSTM_C6, VariantId::LSTM_C6b,
};

inline constexpr std::array<std::string_view, 23> kVariantNames = {
    "LSTM",     "LSTM_1",   "LSTM_2",    "LSTM_3",   "LSTM_4",    "LSTM_4i",
    "LSTM_4ib", "LSTM_5",   "LSTM_5i",   "LSTM_5ib", "LSTM_6",    "LSTM_6b",
    "CELL_1",   "CELL_2",   "LSTM_C3",   "LSTM_C4",  "LSTM_C4i",  "LSTM_C4ib",
    "LSTM_C5",  "LSTM_C5i", "LSTM_C5ib", "LSTM_C6",  "LSTM_C6b",
};

inline std::string_view to_string(VariantId id) {
  return kVariantNames[static_cast<std::size_t>(id)];
}

namespace detail {
inline bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}
}  // namespace detail

/// Case-insensitive lookup of a canonical variant name.
inline std::optional<VariantId> parse_variant(std::string_view name) {
  for (std::size_t k = 0; k < kVariantNames.size(); ++k) {
    if (detail::iequals(name, kVariantNames[k])) return kAllVariants[k];
  }
  return std::nullopt;
}

inline std::optional<ActivationKind> parse_activation(std::string_view name) {
  if (detail::iequals(name, "tanh")) return ActivationKind::Tanh;
  if (detail::iequals(name, "logistic") || detail::iequals(name, "sigmoid")) {
    return ActivationKind::Logistic;
  }
  if (detail::iequals(name, "relu")) return ActivationKind::ReLU;
  return std::nullopt;
}

inline CellConfig variant_config(VariantId id, double alpha = kDefaultAlpha,
                                 ActivationKind activation = ActivationKind::Tanh) {
  require(std::isfinite(alpha) && alpha >= 0.0 && alpha <= 1.0, "alpha out of range");
  using T = GateForm::Tag;
  const auto all = [](T t) {
    return std::array{GateForm::of(t), GateForm::of(t), GateForm::of(t)};
  };
  // Input gate variants of the "i" family keep only the input gate trainable.
  const auto input_only = [alpha](GateForm input) {
    return std::array{input, GateForm::constant(alpha), GateForm::constant(1.0)};
  };
  const auto constant_gates = std::array{GateForm::constant(1.0), GateForm::constant(alpha),
                                         GateForm::constant(1.0)};

  std::array<GateForm, 3> gates = all(T::Full);
  bool pointwise_cell = false;
  bool cell_bias = true;
  bool outer = true;

  switch (id) {
    case VariantId::LSTM: break;
    case VariantId::LSTM_1: gates = all(T::StateBias); break;
    case VariantId::LSTM_2: gates = all(T::StateOnly); break;
    case VariantId::LSTM_3: gates = all(T::BiasOnly); break;
    case VariantId::LSTM_4: gates = all(T::PointwiseState); break;
    case VariantId::LSTM_4i: gates = input_only(GateForm::of(T::PointwiseState)); break;
    case VariantId::LSTM_4ib:
      gates = input_only(GateForm::of(T::PointwiseState));
      outer = false;
      break;
    case VariantId::LSTM_5: gates = all(T::PointwiseStateBias); break;
    case VariantId::LSTM_5i: gates = input_only(GateForm::of(T::PointwiseStateBias)); break;
    case VariantId::LSTM_5ib:
      gates = input_only(GateForm::of(T::PointwiseStateBias));
      outer = false;
      break;
    case VariantId::LSTM_6: gates = constant_gates; break;
    case VariantId::LSTM_6b:
      gates = constant_gates;
      outer = false;
      break;
    case VariantId::CELL_1: pointwise_cell = true; break;
    case VariantId::CELL_2:
      pointwise_cell = true;
      cell_bias = false;
      break;
    case VariantId::LSTM_C3:
      gates = all(T::BiasOnly);
      pointwise_cell = true;
      break;
    case VariantId::LSTM_C4:
      gates = all(T::PointwiseState);
      pointwise_cell = true;
      break;
    case VariantId::LSTM_C4i:
      gates = input_only(GateForm::of(T::PointwiseState));
      pointwise_cell = true;
      break;
    case VariantId::LSTM_C4ib:
      gates = input_only(GateForm::of(T::PointwiseState));
      pointwise_cell = true;
      outer = false;
      break;
    case VariantId::LSTM_C5:
      gates = all(T::PointwiseStateBias);
      pointwise_cell = true;
      break;
    case VariantId::LSTM_C5i:
      gates = input_only(GateForm::of(T::PointwiseStateBias));
      pointwise_cell = true;
      break;
    case VariantId::LSTM_C5ib:
      gates = input_only(GateForm::of(T::PointwiseStateBias));
      pointwise_cell = true;
      outer = false;
      break;
    case VariantId::LSTM_C6:
      gates = constant_gates;
      pointwise_cell = true;
      break;
    case VariantId::LSTM_C6b:
      gates = constant_gates;
      pointwise_cell = true;
      outer = false;
      break;
  }

  CellConfig cfg;
  cfg.input_gate = gates[0];
  cfg.forget_gate = gates[1];
  cfg.output_gate = gates[2];
  cfg.cell_input.recurrent_mixing =
      pointwise_cell ? CellInputForm::Mixing::PointwiseVector : CellInputForm::Mixing::DenseMatrix;
  cfg.cell_input.bias_present = cell_bias;
  cfg.outer_nonlinearity = outer;
  cfg.activation = activation;
  cfg.alpha = alpha;
  return cfg;
}

/// Empty string when the configuration is valid, otherwise the name of the
/// first violated invariant.
inline std::string validate_config(const CellConfig& cfg) {
  if (!std::isfinite(cfg.alpha) || cfg.alpha < 0.0 || cfg.alpha > 1.0) {
    return "alpha out of range";
  }
  const std::array<std::pair<const char*, const GateForm*>, 3> gates = {{
      {"input", &cfg.input_gate}, {"forget", &cfg.forget_gate}, {"output", &cfg.output_gate}}};
  for (const auto& [name, g] : gates) {
    if (g->is_constant() &&
        (!std::isfinite(g->constant_value) || g->constant_value < 0.0 || g->constant_value > 1.0)) {
      return std::string(name) + " gate constant out of range";
    }
    if (!g->is_constant() && g->constant_value != 0.0) {
      return std::string(name) + " gate carries a constant but is not Constant";
    }
  }
  if (!cfg.outer_nonlinearity) {
    if (!cfg.forget_gate.is_constant()) return "no-outer-nonlinearity form requires a Constant forget gate";
    if (!cfg.output_gate.is_constant()) return "no-outer-nonlinearity form requires a Constant output gate";
  }
  return {};
}

inline std::uint64_t gate_param_count(const GateForm& g, std::uint64_t n, std::uint64_t m) {
  using T = GateForm::Tag;
  switch (g.tag) {
    case T::Full: return n * n + n * m + n;
    case T::StateBias: return n * n + n;
    case T::StateOnly: return n * n;
    case T::BiasOnly: return n;
    case T::PointwiseState: return n;
    case T::PointwiseStateBias: return 2 * n;
    case T::Constant: return 0;
  }
  return 0;
}

inline std::uint64_t cell_block_param_count(const CellInputForm& c, std::uint64_t n,
                                            std::uint64_t m) {
  const std::uint64_t mixing =
      c.recurrent_mixing == CellInputForm::Mixing::DenseMatrix ? n * n : n;
  return mixing + n * m + (c.bias_present ? n : 0);
}

/// Trainable scalars of one cell (readout excluded).
inline std::uint64_t param_count(const CellConfig& cfg, std::uint64_t n, std::uint64_t m) {
  require(n >= 1 && m >= 1, "param_count: n and m must be positive");
  return gate_param_count(cfg.input_gate, n, m) + gate_param_count(cfg.forget_gate, n, m) +
         gate_param_count(cfg.output_gate, n, m) + cell_block_param_count(cfg.cell_input, n, m);
}

inline std::uint64_t reduction_vs_standard(const CellConfig& cfg, std::uint64_t n,
                                           std::uint64_t m) {
  const std::uint64_t full = param_count(variant_config(VariantId::LSTM), n, m);
  const std::uint64_t mine = param_count(cfg, n, m);
  require(mine <= full, "reduction_vs_standard: configuration exceeds the standard LSTM");
  return full - mine;
}

/// One-line equation summary used by the `catalog` command.
inline std::string describe(const CellConfig& cfg) {
  const auto gate = [](const GateForm& g, char s) -> std::string {
    const std::string S(1, s);
    using T = GateForm::Tag;
    switch (g.tag) {
      case T::Full: return S + "=sig(W" + S + "x+U" + S + "h+b" + S + ")";
      case T::StateBias: return S + "=sig(U" + S + "h+b" + S + ")";
      case T::StateOnly: return S + "=sig(U" + S + "h)";
      case T::BiasOnly: return S + "=sig(b" + S + ")";
      case T::PointwiseState: return S + "=sig(u" + S + ".h)";
      case T::PointwiseStateBias: return S + "=sig(u" + S + ".h+b" + S + ")";
      case T::Constant: {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", g.constant_value);
        return S + "=" + buf;
      }
    }
    return S;
  };
  std::string z = "Wc x+";
  z += cfg.cell_input.recurrent_mixing == CellInputForm::Mixing::DenseMatrix ? "Uc h" : "uc.h";
  if (cfg.cell_input.bias_present) z += "+bc";
  std::string out = gate(cfg.input_gate, 'i') + "  " + gate(cfg.forget_gate, 'f') + "  " +
                    gate(cfg.output_gate, 'o') + "  c=f.c+i.";
  out += cfg.outer_nonlinearity ? "g(" + z + ")  h=o.g(c)" : "(" + z + ")  h=g(c)";
  return out;
}

}  // namespace slimrnn
