// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "slimrnn/errors.hpp"
#include "slimrnn/numerics.hpp"

namespace slimrnn {

struct ScalarLoss {
  double value = 0.0;
  std::vector<double> grad;  // d value / d pred
};

/// Mean squared error over the entries selected by `mask`.
inline ScalarLoss mse_loss(std::span<const double> pred, std::span<const double> target,
                           const std::vector<bool>& mask) {
  require(pred.size() == target.size() && pred.size() == mask.size(),
          "mse_loss: shape mismatch");
  const auto count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  require(count > 0, "mse_loss: empty mask");
  ScalarLoss out;
  out.grad.assign(pred.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (!mask[k]) continue;
    const double r = pred[k] - target[k];
    out.value += r * r;
    out.grad[k] = 2.0 * r * inv;
  }
  out.value *= inv;
  return out;
}

struct SequenceLoss {
  double value = 0.0;
  std::vector<Vector> grad;  // d value / d logits, one per step
};

inline Vector softmax(const Vector& logits) {
  const double shift = *std::max_element(logits.begin(), logits.end());
  Vector p(logits.size());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - shift);
    z += p[k];
  }
  for (double& v : p) v /= z;
  return p;
}

/// Mean cross-entropy over masked steps, computed from shifted logits.
inline SequenceLoss softmax_xent_loss(std::span<const Vector> logits,
                                      std::span<const int> targets,
                                      const std::vector<bool>& mask) {
  require(logits.size() == targets.size() && logits.size() == mask.size(),
          "softmax_xent_loss: shape mismatch");
  const auto count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  require(count > 0, "softmax_xent_loss: empty mask");
  const double inv = 1.0 / static_cast<double>(count);
  SequenceLoss out;
  out.grad.reserve(logits.size());
  for (std::size_t t = 0; t < logits.size(); ++t) {
    const Vector& z = logits[t];
    if (!mask[t]) {
      out.grad.emplace_back(z.size());
      continue;
    }
    require(targets[t] >= 0 && static_cast<std::size_t>(targets[t]) < z.size(),
            "softmax_xent_loss: class index out of range");
    const double shift = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - shift);
    const double log_z = shift + std::log(sum);
    out.value += log_z - z[static_cast<std::size_t>(targets[t])];
    Vector g(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) g[k] = std::exp(z[k] - log_z) * inv;
    g[static_cast<std::size_t>(targets[t])] -= inv;
    out.grad.push_back(std::move(g));
  }
  out.value *= inv;
  return out;
}

}  // namespace slimrnn
