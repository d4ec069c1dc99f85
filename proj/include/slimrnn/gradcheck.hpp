// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference oracle for the cell gradients and a per-group
// comparison report.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "slimrnn/cell.hpp"
#include "slimrnn/errors.hpp"
#include "slimrnn/rng.hpp"

namespace slimrnn {

/// Scalar losses of an h-sequence that the oracle can replay.
struct LossSpec {
  enum class Kind {
    SumSquares,  // 0.5 * sum_t |h_t - y_t|^2
    SumFinalH,   // sum_j h_T[j]
  };
  Kind kind = Kind::SumSquares;
  std::vector<Vector> targets;  // SumSquares only, one per step

  static LossSpec sum_squares(std::vector<Vector> targets) {
    return {Kind::SumSquares, std::move(targets)};
  }
  static LossSpec sum_final_h() { return {Kind::SumFinalH, {}}; }
};

struct LossValue {
  double value = 0.0;
  std::vector<Vector> d_h;
};

inline LossValue evaluate_loss(const LossSpec& spec, std::span<const CellState> states) {
  LossValue out;
  out.d_h.assign(states.size(), Vector(states.empty() ? 0 : states.front().h.size()));
  if (spec.kind == LossSpec::Kind::SumSquares) {
    require(spec.targets.size() == states.size(), "evaluate_loss: one target per step required");
    for (std::size_t t = 0; t < states.size(); ++t) {
      const Vector& h = states[t].h;
      require(spec.targets[t].size() == h.size(), "evaluate_loss: target length != n");
      for (std::size_t j = 0; j < h.size(); ++j) {
        const double r = h[j] - spec.targets[t][j];
        out.value += 0.5 * r * r;
        out.d_h[t][j] = r;
      }
    }
  } else {
    const Vector& h = states.back().h;
    for (std::size_t j = 0; j < h.size(); ++j) {
      out.value += h[j];
      out.d_h.back()[j] = 1.0;
    }
  }
  return out;
}

inline double sequence_loss(const CellConfig& cfg, const Parameters& p,
                            std::span<const Vector> inputs, const LossSpec& spec) {
  const auto fwd = forward_sequence(cfg, p, inputs);
  const double l = evaluate_loss(spec, fwd.states).value;
  if (!std::isfinite(l)) throw NumericFault("non-finite loss", inputs.size() - 1);
  return l;
}

enum class OraclePrecision {
  Extended,  // independent transcription of the recurrence in long double
  Double,    // the production forward_sequence in double
};

namespace detail {

/// Straight-line transcription of the cell equations, evaluated in `Real`.
/// Shares nothing with forward_step beyond the parameter layout.
template <class Real>
class ReferenceCell {
 public:
  ReferenceCell(const CellConfig& cfg, const Parameters& p) : cfg_(cfg), n_(p.n), m_(p.m) {
    for_each_array(p, [&](const std::string& name, const auto& arr) {
      Array a;
      a.name = name;
      a.values.assign(arr.values().begin(), arr.values().end());
      arrays_.push_back(std::move(a));
    });
  }

  std::size_t group_count() const { return arrays_.size(); }
  std::size_t group_size(std::size_t g) const { return arrays_[g].values.size(); }
  Real& at(std::size_t g, std::size_t k) { return arrays_[g].values[k]; }

  Real loss(const std::vector<std::vector<Real>>& xs, const LossSpec& spec) const {
    const std::size_t n = n_;
    std::vector<Real> c(n, Real(0)), h(n, Real(0)), c_next(n), h_next(n);
    Real total = 0;
    for (std::size_t t = 0; t < xs.size(); ++t) {
      const auto& x = xs[t];
      for (std::size_t j = 0; j < n; ++j) {
        const Real i_t = gate(cfg_.input_gate, "i", j, x, h);
        const Real f_t = gate(cfg_.forget_gate, "f", j, x, h);
        const Real o_t = gate(cfg_.output_gate, "o", j, x, h);
        Real z = affine(find("W_c"), find("U_c"), find("u_c"), find("b_c"), j, x, h);
        const Real cand = cfg_.outer_nonlinearity ? act(z) : z;
        c_next[j] = f_t * c[j] + i_t * cand;
        h_next[j] = cfg_.outer_nonlinearity ? o_t * act(c_next[j]) : act(c_next[j]);
      }
      c.swap(c_next);
      h.swap(h_next);
      if (spec.kind == LossSpec::Kind::SumSquares) {
        for (std::size_t j = 0; j < n; ++j) {
          const Real r = h[j] - Real(spec.targets[t][j]);
          total += Real(0.5) * r * r;
        }
      }
    }
    if (spec.kind == LossSpec::Kind::SumFinalH) {
      for (std::size_t j = 0; j < n; ++j) total += h[j];
    }
    return total;
  }

 private:
  struct Array {
    std::string name;
    std::vector<Real> values;
  };

  const std::vector<Real>* find(const std::string& name) const {
    for (const auto& a : arrays_) {
      if (a.name == name) return &a.values;
    }
    return nullptr;
  }

  Real act(Real v) const {
    using std::exp;
    using std::tanh;
    switch (cfg_.activation) {
      case ActivationKind::Tanh: return tanh(v);
      case ActivationKind::Logistic: return Real(1) / (Real(1) + exp(-v));
      case ActivationKind::ReLU: return v > 0 ? v : Real(0);
    }
    return v;
  }

  Real affine(const std::vector<Real>* W, const std::vector<Real>* U,
              const std::vector<Real>* u, const std::vector<Real>* b, std::size_t j,
              const std::vector<Real>& x, const std::vector<Real>& h) const {
    Real s = 0;
    if (W) {
      for (std::size_t k = 0; k < m_; ++k) s += (*W)[j * m_ + k] * x[k];
    }
    if (U) {
      for (std::size_t k = 0; k < n_; ++k) s += (*U)[j * n_ + k] * h[k];
    }
    if (u) s += (*u)[j] * h[j];
    if (b) s += (*b)[j];
    return s;
  }

  Real gate(const GateForm& form, const char* suffix, std::size_t j, const std::vector<Real>& x,
            const std::vector<Real>& h) const {
    if (form.is_constant()) return Real(form.constant_value);
    const std::string s(suffix);
    const Real a = affine(find("W_" + s), find("U_" + s), find("u_" + s), find("b_" + s), j, x, h);
    using std::exp;
    return Real(1) / (Real(1) + exp(-a));
  }

  CellConfig cfg_;
  std::size_t n_;
  std::size_t m_;
  std::vector<Array> arrays_;
};

template <class Real>
std::vector<std::vector<Real>> widen(std::span<const Vector> inputs) {
  std::vector<std::vector<Real>> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) out.emplace_back(x.begin(), x.end());
  return out;
}

}  // namespace detail

/// (L(theta + eps) - L(theta - eps)) / (2 eps) for every scalar theta.
inline Gradients numeric_gradient(const CellConfig& cfg, const Parameters& p,
                                  std::span<const Vector> inputs, const LossSpec& spec,
                                  double eps,
                                  OraclePrecision precision = OraclePrecision::Extended) {
  require(eps > 0.0, "numeric_gradient: eps must be positive");
  Gradients out = zeros_like(p);
  std::vector<std::span<double>> out_groups;
  for_each_group(out, [&](const std::string&, std::span<double> v) { out_groups.push_back(v); });

  if (precision == OraclePrecision::Extended) {
    using Real = long double;
    detail::ReferenceCell<Real> ref(cfg, p);
    const auto xs = detail::widen<Real>(inputs);
    const Real step = eps;
    for (std::size_t g = 0; g < ref.group_count(); ++g) {
      for (std::size_t k = 0; k < ref.group_size(g); ++k) {
        Real& theta = ref.at(g, k);
        const Real saved = theta;
        theta = saved + step;
        const Real plus = ref.loss(xs, spec);
        theta = saved - step;
        const Real minus = ref.loss(xs, spec);
        theta = saved;
        const Real d = (plus - minus) / (2 * step);
        if (!std::isfinite(static_cast<double>(plus)) || !std::isfinite(static_cast<double>(minus))) {
          throw NumericFault("non-finite loss", inputs.size() - 1);
        }
        out_groups[g][k] = static_cast<double>(d);
      }
    }
    return out;
  }

  Parameters probe = p;
  std::size_t group = 0;
  for_each_group(probe, [&](const std::string&, std::span<double> v) {
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double saved = v[k];
      v[k] = saved + eps;
      const double plus = sequence_loss(cfg, probe, inputs, spec);
      v[k] = saved - eps;
      const double minus = sequence_loss(cfg, probe, inputs, spec);
      v[k] = saved;
      out_groups[group][k] = (plus - minus) / (2.0 * eps);
    }
    ++group;
  });
  return out;
}

/// Finite-difference gradient with respect to each input vector.
inline std::vector<Vector> numeric_input_gradient(
    const CellConfig& cfg, const Parameters& p, std::span<const Vector> inputs,
    const LossSpec& spec, double eps, OraclePrecision precision = OraclePrecision::Extended) {
  require(eps > 0.0, "numeric_input_gradient: eps must be positive");
  std::vector<Vector> out(inputs.size(), Vector(p.m));
  if (precision == OraclePrecision::Extended) {
    using Real = long double;
    const detail::ReferenceCell<Real> ref(cfg, p);
    auto xs = detail::widen<Real>(inputs);
    const Real step = eps;
    for (std::size_t t = 0; t < xs.size(); ++t) {
      for (std::size_t j = 0; j < p.m; ++j) {
        const Real saved = xs[t][j];
        xs[t][j] = saved + step;
        const Real plus = ref.loss(xs, spec);
        xs[t][j] = saved - step;
        const Real minus = ref.loss(xs, spec);
        xs[t][j] = saved;
        out[t][j] = static_cast<double>((plus - minus) / (2 * step));
      }
    }
    return out;
  }
  std::vector<Vector> probe(inputs.begin(), inputs.end());
  for (std::size_t t = 0; t < probe.size(); ++t) {
    for (std::size_t j = 0; j < p.m; ++j) {
      const double saved = probe[t][j];
      probe[t][j] = saved + eps;
      const double plus = sequence_loss(cfg, p, probe, spec);
      probe[t][j] = saved - eps;
      const double minus = sequence_loss(cfg, p, probe, spec);
      probe[t][j] = saved;
      out[t][j] = (plus - minus) / (2.0 * eps);
    }
  }
  return out;
}

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

struct GroupCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t argmax = 0;
  double analytic = 0.0;
  double numeric = 0.0;

  bool operator==(const GroupCheck&) const = default;
};

struct GradCheckReport {
  std::vector<GroupCheck> groups;
  bool pass = true;
  double eps = 0.0;
  double threshold = 0.0;

  bool operator==(const GradCheckReport&) const = default;
};

/// Debug hook: perturb one analytic entry before comparison.
struct GradientCorruption {
  std::string group;
  std::size_t index = 0;
  double delta = 0.1;
};

inline GroupCheck compare_group(std::string name, std::span<const double> analytic,
                                std::span<const double> numeric) {
  require(analytic.size() == numeric.size(), "compare_group: size mismatch");
  GroupCheck g;
  g.name = std::move(name);
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double e = relative_error(analytic[k], numeric[k]);
    if (k == 0 || e > g.max_rel_error) {
      g.max_rel_error = e;
      g.argmax = k;
      g.analytic = analytic[k];
      g.numeric = numeric[k];
    }
  }
  return g;
}

/// Builds a report from already computed gradients.
inline GradCheckReport compare_gradients(const Gradients& analytic, const Gradients& numeric,
                                         double eps, double threshold) {
  require(threshold > 0.0, "compare_gradients: threshold must be positive");
  GradCheckReport r;
  r.eps = eps;
  r.threshold = threshold;
  std::vector<std::span<const double>> num;
  for_each_group(numeric, [&](const std::string&, std::span<const double> v) { num.push_back(v); });
  std::size_t k = 0;
  for_each_group(analytic, [&](const std::string& name, std::span<const double> v) {
    r.groups.push_back(compare_group(name, v, num.at(k++)));
  });
  r.pass = std::all_of(r.groups.begin(), r.groups.end(),
                       [&](const GroupCheck& g) { return g.max_rel_error < threshold; });
  return r;
}

struct GradCheckProblem {
  Parameters params;
  std::vector<Vector> inputs;
  LossSpec loss;
};

/// Parameters, inputs in [-1, 1] and sum-of-squares targets in [-0.5, 0.5]
/// drawn from `seed`.
inline GradCheckProblem make_gradcheck_problem(const CellConfig& cfg, std::size_t n,
                                               std::size_t m, std::size_t T,
                                               std::uint64_t seed) {
  require(T >= 1, "make_gradcheck_problem: T must be positive");
  GradCheckProblem prob;
  prob.params = init_params(cfg, n, m, seed, InitScheme::Uniform);
  CounterRng rng = CounterRng::derive(seed, SeedStream::GradCheck);
  prob.inputs.assign(T, Vector(m));
  for (auto& x : prob.inputs) {
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
  }
  std::vector<Vector> targets(T, Vector(n));
  for (auto& y : targets) {
    for (double& v : y) v = rng.uniform(-0.5, 0.5);
  }
  prob.loss = LossSpec::sum_squares(std::move(targets));
  return prob;
}

inline GradCheckReport gradient_check(
    const CellConfig& cfg, std::size_t n, std::size_t m, std::size_t T, std::uint64_t seed,
    double eps = 1e-5, double threshold = 1e-5,
    const std::optional<GradientCorruption>& corrupt = {},
    OraclePrecision precision = OraclePrecision::Extended) {
  require(threshold > 0.0, "gradient_check: threshold must be positive");
  const std::string why = validate_config(cfg);
  require(why.empty(), "gradient_check: " + why);
  const GradCheckProblem prob = make_gradcheck_problem(cfg, n, m, T, seed);

  const auto fwd = forward_sequence(cfg, prob.params, prob.inputs);
  const auto loss = evaluate_loss(prob.loss, fwd.states);
  auto back = backward_sequence(cfg, prob.params, fwd.caches, loss.d_h);
  const Gradients numeric = numeric_gradient(cfg, prob.params, prob.inputs, prob.loss, eps, precision);

  if (corrupt) {
    bool hit = false;
    for_each_group(back.grads, [&](const std::string& name, std::span<double> v) {
      if (name == corrupt->group) {
        require(corrupt->index < v.size(), "gradient_check: corruption index out of range");
        v[corrupt->index] += corrupt->delta;
        hit = true;
      }
    });
    require(hit, "gradient_check: unknown corruption group " + corrupt->group);
  }

  GradCheckReport report = compare_gradients(back.grads, numeric, eps, threshold);

  std::vector<double> ax, nx;
  const auto num_x = numeric_input_gradient(cfg, prob.params, prob.inputs, prob.loss, eps, precision);
  for (std::size_t t = 0; t < T; ++t) {
    ax.insert(ax.end(), back.d_inputs[t].begin(), back.d_inputs[t].end());
    nx.insert(nx.end(), num_x[t].begin(), num_x[t].end());
  }
  report.groups.push_back(compare_group("x", ax, nx));
  report.pass = report.pass && report.groups.back().max_rel_error < threshold;
  return report;
}

inline std::string to_table(const GradCheckReport& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %14s %8s %22s %22s\n", "group", "max_rel_err", "argmax",
                "analytic", "numeric");
  out += line;
  for (const auto& g : r.groups) {
    std::snprintf(line, sizeof line, "%-6s %14.6e %8zu %22.15e %22.15e\n", g.name.c_str(),
                  g.max_rel_error, g.argmax, g.analytic, g.numeric);
    out += line;
  }
  std::snprintf(line, sizeof line, "eps %.1e threshold %.1e result %s\n", r.eps, r.threshold,
                r.pass ? "PASS" : "FAIL");
  out += line;
  return out;
}

inline nlohmann::json to_json(const GradCheckReport& r) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.groups) {
    groups.push_back({{"group", g.name},
                      {"max_rel_error", g.max_rel_error},
                      {"argmax", g.argmax},
                      {"analytic", g.analytic},
                      {"numeric", g.numeric}});
  }
  return {{"pass", r.pass}, {"eps", r.eps}, {"threshold", r.threshold}, {"groups", groups}};
}

}  // namespace slimrnn
