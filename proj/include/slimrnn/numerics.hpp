// SPDX-License-Identifier: Apache-2.0
//
// Dense vector/matrix kernels and element-wise activations. All reductions
// accumulate left to right in index order so results are bit-reproducible.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slimrnn/errors.hpp"

namespace slimrnn {

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n, double fill = 0.0) : data_(n, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& raw() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> data_;
};

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    require(data_.size() == rows_ * cols_, "Matrix: element count != rows*cols");
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      require(r.size() == cols_, "Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix diagonal(const Vector& d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class ActivationKind { Tanh, Logistic, ReLU };

inline std::string to_string(ActivationKind k) {
  switch (k) {
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::Logistic: return "logistic";
    case ActivationKind::ReLU: return "relu";
  }
  return "?";
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline Vector matvec(const Matrix& m, const Vector& v) {
  require(m.cols() == v.size(), "matvec: matrix cols != vector length");
  Vector out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) acc += m(i, j) * v[j];
    out[i] = acc;
  }
  return out;
}

/// out += Mᵀ v
inline void matvec_transposed_acc(const Matrix& m, const Vector& v, Vector& out) {
  require(m.rows() == v.size() && m.cols() == out.size(),
          "matvec_transposed_acc: shape mismatch");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double vi = v[i];
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += m(i, j) * vi;
  }
}

/// m += a bᵀ
inline void outer_acc(Matrix& m, const Vector& a, const Vector& b) {
  require(m.rows() == a.size() && m.cols() == b.size(), "outer_acc: shape mismatch");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double ai = a[i];
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) += ai * b[j];
  }
}

inline Vector hadamard(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), "hadamard: length mismatch");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

inline Vector scaled(const Vector& v, double s) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = s * v[i];
  return out;
}

/// a += b
inline void add_in_place(Vector& a, const Vector& b) {
  require(a.size() == b.size(), "add_in_place: length mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

inline Vector axpy_sum(std::span<const Vector> terms) {
  require(!terms.empty(), "axpy_sum: empty term list");
  Vector out = terms.front();
  for (std::size_t k = 1; k < terms.size(); ++k) {
    require(terms[k].size() == out.size(), "axpy_sum: length mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += terms[k][i];
  }
  return out;
}

inline Vector axpy_sum(std::initializer_list<Vector> terms) {
  return axpy_sum(std::span<const Vector>(terms.begin(), terms.size()));
}

inline double logistic(double x) {
  // exp only ever sees a non-positive argument
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Vector logistic(const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = logistic(v[i]);
  return out;
}

inline double activate(ActivationKind kind, double x) {
  switch (kind) {
    case ActivationKind::Tanh: return std::tanh(x);
    case ActivationKind::Logistic: return logistic(x);
    case ActivationKind::ReLU: return x > 0.0 ? x : 0.0;
  }
  return x;
}

/// Derivative expressed through the input `x` and the output `y = g(x)`.
inline double activation_slope(ActivationKind kind, double x, double y) {
  switch (kind) {
    case ActivationKind::Tanh: return 1.0 - y * y;
    case ActivationKind::Logistic: return y * (1.0 - y);
    case ActivationKind::ReLU: return x > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

inline Vector apply_activation(ActivationKind kind, const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = activate(kind, v[i]);
  return out;
}

/// Max absolute row sum (induced infinity norm).
inline double inf_norm(const Matrix& m) {
  double best = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) row += std::abs(m(i, j));
    best = std::max(best, row);
  }
  return best;
}

inline double inf_norm(const Vector& v) {
  double best = 0.0;
  for (double x : v) best = std::max(best, std::abs(x));
  return best;
}

}  // namespace slimrnn
