// SPDX-License-Identifier: Apache-2.0
//
// First-order optimizers over any parameter set that exposes
// for_each_group(P&, fn(name, span<double>)).
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slimrnn/errors.hpp"

namespace slimrnn {

enum class OptimizerKind { SGD, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip = 5.0;  // global gradient-norm clip; 0 disables

  bool operator==(const OptimizerConfig&) const = default;
};

/// Adam moments mirror the parameter set; SGD leaves them unused.
template <class P>
struct OptimizerState {
  OptimizerConfig config;
  P first;
  P second;
  std::uint64_t step = 0;
};

template <class P>
P zero_mirror(const P& params) {
  P out = params;
  for_each_group(out, [](const std::string&, std::span<double> v) {
    for (double& x : v) x = 0.0;
  });
  return out;
}

template <class P>
OptimizerState<P> make_optimizer_state(const OptimizerConfig& cfg, const P& params) {
  require(cfg.lr >= 0.0 && std::isfinite(cfg.lr), "optimizer: lr must be finite and >= 0");
  require(cfg.clip >= 0.0, "optimizer: clip must be >= 0");
  return {cfg, zero_mirror(params), zero_mirror(params), 0};
}

template <class P>
std::vector<std::span<double>> group_spans(P& p) {
  std::vector<std::span<double>> out;
  for_each_group(p, [&](const std::string&, std::span<double> v) { out.push_back(v); });
  return out;
}

template <class P>
std::vector<std::span<const double>> group_views(const P& p) {
  std::vector<std::span<const double>> out;
  for_each_group(p, [&](const std::string&, std::span<const double> v) { out.push_back(v); });
  return out;
}

template <class P>
double global_norm(const P& grads) {
  double sq = 0.0;
  for_each_group(grads, [&](const std::string&, std::span<const double> v) {
    for (double x : v) sq += x * x;
  });
  return std::sqrt(sq);
}

/// Scale factor that brings the gradient norm down to `clip` (1 if no clip).
template <class P>
double clip_scale(const P& grads, double clip) {
  if (clip <= 0.0) return 1.0;
  const double norm = global_norm(grads);
  return norm > clip ? clip / norm : 1.0;
}

template <class P>
void sgd_step(P& params, const P& grads, OptimizerState<P>& state) {
  const double scale = clip_scale(grads, state.config.clip);
  auto theta = group_spans(params);
  const auto g = group_views(grads);
  require(theta.size() == g.size(), "sgd_step: gradient structure mismatch");
  for (std::size_t k = 0; k < theta.size(); ++k) {
    require(theta[k].size() == g[k].size(), "sgd_step: gradient structure mismatch");
    for (std::size_t j = 0; j < theta[k].size(); ++j) {
      theta[k][j] -= state.config.lr * (scale * g[k][j]);
    }
  }
  ++state.step;
}

template <class P>
void adam_step(P& params, const P& grads, OptimizerState<P>& state) {
  const OptimizerConfig& c = state.config;
  const double scale = clip_scale(grads, c.clip);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  auto theta = group_spans(params);
  const auto g = group_views(grads);
  auto m1 = group_spans(state.first);
  auto m2 = group_spans(state.second);
  require(theta.size() == g.size() && theta.size() == m1.size(),
          "adam_step: gradient structure mismatch");
  for (std::size_t k = 0; k < theta.size(); ++k) {
    require(theta[k].size() == g[k].size() && theta[k].size() == m1[k].size(),
            "adam_step: gradient structure mismatch");
    for (std::size_t j = 0; j < theta[k].size(); ++j) {
      const double gj = scale * g[k][j];
      m1[k][j] = c.beta1 * m1[k][j] + (1.0 - c.beta1) * gj;
      m2[k][j] = c.beta2 * m2[k][j] + (1.0 - c.beta2) * gj * gj;
      const double m_hat = m1[k][j] / bias1;
      const double v_hat = m2[k][j] / bias2;
      theta[k][j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

template <class P>
void optimizer_step(P& params, const P& grads, OptimizerState<P>& state) {
  if (state.config.kind == OptimizerKind::SGD) {
    sgd_step(params, grads, state);
  } else {
    adam_step(params, grads, state);
  }
}

}  // namespace slimrnn
