// SPDX-License-Identifier: Apache-2.0
//
// One parametric engine for every cell in the catalog: forward recurrence
// and exact backpropagation through time.
//
//   z_t  = W_c x_t + (U_c h_{t-1} | u_c . h_{t-1}) [+ b_c]
//   c~_t = g(z_t)            (z_t itself for the no-outer-nonlinearity forms)
//   c_t  = f_t . c_{t-1} + i_t . c~_t
//   h_t  = o_t . g(c_t)      (g(c_t) for the no-outer-nonlinearity forms)
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "slimrnn/errors.hpp"
#include "slimrnn/numerics.hpp"
#include "slimrnn/rng.hpp"
#include "slimrnn/taxonomy.hpp"

namespace slimrnn {

struct GateParams {
  std::optional<Matrix> W;  // n x m
  std::optional<Matrix> U;  // n x n
  std::optional<Vector> u;  // n
  std::optional<Vector> b;  // n

  bool operator==(const GateParams&) const = default;
};

/// Trainable arrays of one configured cell. Only the arrays the CellConfig
/// demands are present.
struct Parameters {
  std::size_t n = 0;
  std::size_t m = 0;
  GateParams input;
  GateParams forget;
  GateParams output;
  Matrix W_c;
  std::optional<Matrix> U_c;
  std::optional<Vector> u_c;
  std::optional<Vector> b_c;

  bool operator==(const Parameters&) const = default;
};

/// Gradients mirror the parameter structure exactly.
using Gradients = Parameters;

struct CellState {
  Vector c;
  Vector h;

  static CellState zeros(std::size_t n) { return {Vector(n), Vector(n)}; }
  bool operator==(const CellState&) const = default;
};

/// A gate's output at one step. Constant gates stay a broadcast scalar.
struct GateSignal {
  bool constant = false;
  double scalar = 0.0;
  Vector pre;    // empty when constant
  Vector value;  // empty when constant

  double operator[](std::size_t k) const { return constant ? scalar : value[k]; }
};

struct StepCache {
  Vector x;
  Vector h_prev;
  Vector c_prev;
  GateSignal i;
  GateSignal f;
  GateSignal o;
  Vector z;          // cell-input pre-activation
  Vector candidate;  // g(z), or z itself for the no-outer-nonlinearity forms
  Vector c;
  Vector g_c;  // g(c)
  Vector h;
};

enum class InitScheme {
  Default,  // U(-s, s) with s = 1/sqrt(fan-in); biases zero, forget bias +1
  Zero,
  Uniform,  // every array, biases included, U(-s, s)
};

namespace detail {

template <class P, class F>
void visit_gate(P& g, std::string_view suffix, F& f) {
  const std::string s(suffix);
  if (g.W) f("W_" + s, *g.W);
  if (g.U) f("U_" + s, *g.U);
  if (g.u) f("u_" + s, *g.u);
  if (g.b) f("b_" + s, *g.b);
}

}  // namespace detail

/// Visits every array as (name, Matrix&|Vector&) in a fixed order:
/// input, forget, output gates, then the cell-input block.
template <class P, class F>
  requires std::is_same_v<std::remove_const_t<P>, Parameters>
void for_each_array(P& p, F&& f) {
  detail::visit_gate(p.input, "i", f);
  detail::visit_gate(p.forget, "f", f);
  detail::visit_gate(p.output, "o", f);
  f(std::string("W_c"), p.W_c);
  if (p.U_c) f(std::string("U_c"), *p.U_c);
  if (p.u_c) f(std::string("u_c"), *p.u_c);
  if (p.b_c) f(std::string("b_c"), *p.b_c);
}

/// Visits every array as (name, span of its scalars).
template <class P, class F>
  requires std::is_same_v<std::remove_const_t<P>, Parameters>
void for_each_group(P& p, F&& f) {
  for_each_array(p, [&](const std::string& name, auto& arr) { f(name, arr.values()); });
}

inline std::size_t scalar_count(const Parameters& p) {
  std::size_t total = 0;
  for_each_group(p, [&](const std::string&, std::span<const double> v) { total += v.size(); });
  return total;
}

/// All arrays demanded by `cfg`, zero-filled.
inline Parameters allocate_params(const CellConfig& cfg, std::size_t n, std::size_t m) {
  require(n >= 1 && m >= 1, "allocate_params: n and m must be positive");
  Parameters p;
  p.n = n;
  p.m = m;
  const auto gate = [&](const GateForm& form) {
    GateParams g;
    if (form.has_input_matrix()) g.W = Matrix(n, m);
    if (form.has_state_matrix()) g.U = Matrix(n, n);
    if (form.has_state_vector()) g.u = Vector(n);
    if (form.has_bias()) g.b = Vector(n);
    return g;
  };
  p.input = gate(cfg.input_gate);
  p.forget = gate(cfg.forget_gate);
  p.output = gate(cfg.output_gate);
  p.W_c = Matrix(n, m);
  if (cfg.cell_input.recurrent_mixing == CellInputForm::Mixing::DenseMatrix) {
    p.U_c = Matrix(n, n);
  } else {
    p.u_c = Vector(n);
  }
  if (cfg.cell_input.bias_present) p.b_c = Vector(n);
  return p;
}

inline Gradients zeros_like(const Parameters& p) {
  Gradients g = p;
  for_each_group(g, [](const std::string&, std::span<double> v) {
    std::fill(v.begin(), v.end(), 0.0);
  });
  return g;
}

inline Parameters init_params(const CellConfig& cfg, std::size_t n, std::size_t m,
                              std::uint64_t seed, InitScheme scheme = InitScheme::Default) {
  Parameters p = allocate_params(cfg, n, m);
  if (scheme == InitScheme::Zero) return p;
  CounterRng rng = CounterRng::derive(seed, SeedStream::Init);
  const double s_input = 1.0 / std::sqrt(static_cast<double>(m));
  const double s_state = 1.0 / std::sqrt(static_cast<double>(n));
  for_each_group(p, [&](const std::string& name, std::span<double> v) {
    const bool is_bias = name.front() == 'b';
    if (is_bias && scheme == InitScheme::Default) {
      const double fill = name == "b_f" ? 1.0 : 0.0;
      std::fill(v.begin(), v.end(), fill);
      return;
    }
    const double s = name.front() == 'W' ? s_input : s_state;
    for (double& x : v) x = rng.uniform(-s, s);
  });
  return p;
}

/// Standard-LSTM parameters with the three gate input matrices zeroed.
inline Parameters clone_with_zeroed_input_weights(const CellConfig& cfg, const Parameters& p) {
  const CellConfig standard = variant_config(VariantId::LSTM, cfg.alpha, cfg.activation);
  require(cfg == standard, "clone_with_zeroed_input_weights: config is not the standard LSTM");
  Parameters out = p;
  for (GateParams* g : {&out.input, &out.forget, &out.output}) {
    require(g->W.has_value(), "clone_with_zeroed_input_weights: missing gate input matrix");
    *g->W = Matrix(p.n, p.m);
  }
  return out;
}

namespace detail {

inline GateSignal eval_gate(const GateForm& form, const GateParams& g, const Vector& x,
                            const Vector& h_prev, std::size_t n) {
  GateSignal s;
  if (form.is_constant()) {
    s.constant = true;
    s.scalar = form.constant_value;
    return s;
  }
  std::vector<Vector> terms;
  terms.reserve(3);
  if (g.W) terms.push_back(matvec(*g.W, x));
  if (g.U) terms.push_back(matvec(*g.U, h_prev));
  if (g.u) terms.push_back(hadamard(*g.u, h_prev));
  if (g.b) terms.push_back(*g.b);
  s.pre = terms.empty() ? Vector(n) : axpy_sum(std::span<const Vector>(terms));
  s.value = logistic(s.pre);
  return s;
}

inline void check_shapes(const CellConfig& cfg, const Parameters& p) {
  const auto gate_ok = [&](const GateForm& form, const GateParams& g) {
    const auto mat_ok = [](const std::optional<Matrix>& a, bool want, std::size_t r,
                           std::size_t c) {
      return a.has_value() == want && (!want || (a->rows() == r && a->cols() == c));
    };
    const auto vec_ok = [](const std::optional<Vector>& a, bool want, std::size_t len) {
      return a.has_value() == want && (!want || a->size() == len);
    };
    return mat_ok(g.W, form.has_input_matrix(), p.n, p.m) &&
           mat_ok(g.U, form.has_state_matrix(), p.n, p.n) &&
           vec_ok(g.u, form.has_state_vector(), p.n) && vec_ok(g.b, form.has_bias(), p.n);
  };
  require(gate_ok(cfg.input_gate, p.input), "parameters do not match the input gate form");
  require(gate_ok(cfg.forget_gate, p.forget), "parameters do not match the forget gate form");
  require(gate_ok(cfg.output_gate, p.output), "parameters do not match the output gate form");
  require(p.W_c.rows() == p.n && p.W_c.cols() == p.m, "W_c shape mismatch");
  const bool dense = cfg.cell_input.recurrent_mixing == CellInputForm::Mixing::DenseMatrix;
  require(p.U_c.has_value() == dense && p.u_c.has_value() == !dense,
          "parameters do not match the cell-input mixing form");
  require(!p.U_c || (p.U_c->rows() == p.n && p.U_c->cols() == p.n), "U_c shape mismatch");
  require(!p.u_c || p.u_c->size() == p.n, "u_c shape mismatch");
  require(p.b_c.has_value() == cfg.cell_input.bias_present && (!p.b_c || p.b_c->size() == p.n),
          "parameters do not match the cell-input bias form");
}

}  // namespace detail

inline std::pair<CellState, StepCache> forward_step(const CellConfig& cfg, const Parameters& p,
                                                    const Vector& x, const CellState& state,
                                                    std::size_t timestep = 0) {
  detail::check_shapes(cfg, p);
  require(x.size() == p.m, "forward_step: input length != m");
  require(state.c.size() == p.n && state.h.size() == p.n, "forward_step: state length != n");
  const std::size_t n = p.n;

  StepCache k;
  k.x = x;
  k.h_prev = state.h;
  k.c_prev = state.c;
  k.i = detail::eval_gate(cfg.input_gate, p.input, x, state.h, n);
  k.f = detail::eval_gate(cfg.forget_gate, p.forget, x, state.h, n);
  k.o = detail::eval_gate(cfg.output_gate, p.output, x, state.h, n);

  std::vector<Vector> terms;
  terms.reserve(3);
  terms.push_back(matvec(p.W_c, x));
  terms.push_back(p.U_c ? matvec(*p.U_c, state.h) : hadamard(*p.u_c, state.h));
  if (p.b_c) terms.push_back(*p.b_c);
  k.z = axpy_sum(std::span<const Vector>(terms));
  k.candidate = cfg.outer_nonlinearity ? apply_activation(cfg.activation, k.z) : k.z;

  k.c = Vector(n);
  for (std::size_t j = 0; j < n; ++j) {
    k.c[j] = k.f[j] * state.c[j] + k.i[j] * k.candidate[j];
  }
  k.g_c = apply_activation(cfg.activation, k.c);
  if (cfg.outer_nonlinearity) {
    k.h = Vector(n);
    for (std::size_t j = 0; j < n; ++j) k.h[j] = k.o[j] * k.g_c[j];
  } else {
    k.h = k.g_c;
  }

  if (!all_finite(k.c.values()) || !all_finite(k.h.values())) {
    throw NumericFault("non-finite cell state", timestep);
  }
  CellState next{k.c, k.h};
  return {std::move(next), std::move(k)};
}

struct SequenceResult {
  std::vector<CellState> states;
  std::vector<StepCache> caches;
};

inline SequenceResult forward_sequence(const CellConfig& cfg, const Parameters& p,
                                       std::span<const Vector> inputs,
                                       const CellState& initial) {
  require(!inputs.empty(), "forward_sequence: empty input sequence");
  SequenceResult out;
  out.states.reserve(inputs.size());
  out.caches.reserve(inputs.size());
  CellState state = initial;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto [next, cache] = forward_step(cfg, p, inputs[t], state, t);
    state = next;
    out.states.push_back(std::move(next));
    out.caches.push_back(std::move(cache));
  }
  return out;
}

inline SequenceResult forward_sequence(const CellConfig& cfg, const Parameters& p,
                                       std::span<const Vector> inputs) {
  return forward_sequence(cfg, p, inputs, CellState::zeros(p.n));
}

struct BackwardResult {
  Gradients grads;
  std::vector<Vector> d_inputs;
  Vector d_initial_h;
  Vector d_initial_c;
};

namespace detail {

template <class M, class V>
struct AffineRef {
  M* W = nullptr;
  M* U = nullptr;
  V* u = nullptr;
  V* b = nullptr;
};

template <class G>
auto affine_ref(G& g) {
  using M = std::conditional_t<std::is_const_v<G>, const Matrix, Matrix>;
  using V = std::conditional_t<std::is_const_v<G>, const Vector, Vector>;
  const auto ptr = [](auto& opt) { return opt ? &*opt : nullptr; };
  return AffineRef<M, V>{ptr(g.W), ptr(g.U), ptr(g.u), ptr(g.b)};
}

/// Accumulates the parameter gradients of one affine block given the
/// gradient `da` of its pre-activation, and propagates into dx / dh_prev.
inline void affine_backward(const AffineRef<const Matrix, const Vector>& params,
                            const AffineRef<Matrix, Vector>& grads, const Vector& da,
                            const StepCache& k, Vector& dx, Vector& dh_prev) {
  if (params.W) {
    outer_acc(*grads.W, da, k.x);
    matvec_transposed_acc(*params.W, da, dx);
  }
  if (params.U) {
    outer_acc(*grads.U, da, k.h_prev);
    matvec_transposed_acc(*params.U, da, dh_prev);
  }
  if (params.u) {
    for (std::size_t j = 0; j < da.size(); ++j) {
      (*grads.u)[j] += da[j] * k.h_prev[j];
      dh_prev[j] += (*params.u)[j] * da[j];
    }
  }
  if (params.b) add_in_place(*grads.b, da);
}

}  // namespace detail

/// Reverse-mode gradients of a scalar loss whose direct sensitivities to
/// each h_t are `d_h`. Accumulates over t = T-1 ... 0.
inline BackwardResult backward_sequence(const CellConfig& cfg, const Parameters& p,
                                        std::span<const StepCache> caches,
                                        std::span<const Vector> d_h) {
  require(caches.size() == d_h.size(), "backward_sequence: caches and d_h lengths differ");
  require(!caches.empty(), "backward_sequence: empty sequence");
  detail::check_shapes(cfg, p);
  const std::size_t n = p.n;
  const std::size_t T = caches.size();

  BackwardResult out;
  out.grads = zeros_like(p);
  out.d_inputs.assign(T, Vector(p.m));

  const auto opt = [](auto& o) { return o ? &*o : nullptr; };
  const detail::AffineRef<const Matrix, const Vector> cell_params{&p.W_c, opt(p.U_c),
                                                                  opt(p.u_c), opt(p.b_c)};
  const detail::AffineRef<Matrix, Vector> cell_grads{&out.grads.W_c, opt(out.grads.U_c),
                                                     opt(out.grads.u_c), opt(out.grads.b_c)};

  Vector dh_next(n);
  Vector dc_next(n);
  const auto slope = [&](const Vector& in, const Vector& outv, std::size_t j) {
    return activation_slope(cfg.activation, in[j], outv[j]);
  };
  const auto sigmoid_slope = [](const GateSignal& s, std::size_t j) {
    return s.value[j] * (1.0 - s.value[j]);
  };

  for (std::size_t step = T; step-- > 0;) {
    const StepCache& k = caches[step];
    require(d_h[step].size() == n, "backward_sequence: d_h length != n");

    Vector dh(n), dc(n), d_o(n), d_i(n), d_f(n), dz(n);
    for (std::size_t j = 0; j < n; ++j) {
      dh[j] = d_h[step][j] + dh_next[j];
      const double gc_slope = slope(k.c, k.g_c, j);
      if (cfg.outer_nonlinearity) {
        d_o[j] = dh[j] * k.g_c[j];
        dc[j] = dc_next[j] + dh[j] * k.o[j] * gc_slope;
      } else {
        dc[j] = dc_next[j] + dh[j] * gc_slope;
      }
      d_i[j] = dc[j] * k.candidate[j];
      d_f[j] = dc[j] * k.c_prev[j];
      const double d_candidate = dc[j] * k.i[j];
      dz[j] = cfg.outer_nonlinearity ? d_candidate * slope(k.z, k.candidate, j) : d_candidate;
      dc_next[j] = dc[j] * k.f[j];
    }

    Vector& dx = out.d_inputs[step];
    Vector dh_prev(n);
    detail::affine_backward(cell_params, cell_grads, dz, k, dx, dh_prev);

    const auto gate_back = [&](const GateSignal& s, const GateParams& gp, GateParams& gg,
                               const Vector& d_value) {
      if (s.constant) return;
      Vector da(n);
      for (std::size_t j = 0; j < n; ++j) da[j] = d_value[j] * sigmoid_slope(s, j);
      detail::affine_backward(detail::affine_ref(gp), detail::affine_ref(gg), da, k, dx,
                              dh_prev);
    };
    gate_back(k.i, p.input, out.grads.input, d_i);
    gate_back(k.f, p.forget, out.grads.forget, d_f);
    if (cfg.outer_nonlinearity) gate_back(k.o, p.output, out.grads.output, d_o);

    dh_next = std::move(dh_prev);
  }

  out.d_initial_h = std::move(dh_next);
  out.d_initial_c = std::move(dc_next);
  return out;
}

}  // namespace slimrnn
