#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ebml/errors.hpp"

namespace ebml {

// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> d)
      : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != rows * cols) throw ShapeError("matrix data size mismatch");
  }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

// out = W x (out must have size W.rows, x size W.cols).
inline void matvec(const Matrix& w, std::span<const double> x, std::span<double> out) {
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double* row = w.data.data() + i * w.cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
}

// out += W^T y (out size W.cols, y size W.rows).
inline void matvec_transpose_add(const Matrix& w, std::span<const double> y,
                                 std::span<double> out) {
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double* row = w.data.data() + i * w.cols;
    const double yi = y[i];
    for (std::size_t j = 0; j < w.cols; ++j) out[j] += row[j] * yi;
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// Mutable and read-only views over a parameter tree flattened to a
// list of contiguous tensors. Optimizers and clipping work on these.
using FlatView = std::vector<std::span<double>>;
using FlatConstView = std::vector<std::span<const double>>;

inline FlatConstView const_view(const FlatView& v) {
  FlatConstView out;
  out.reserve(v.size());
  for (const auto& s : v) out.emplace_back(s.data(), s.size());
  return out;
}

inline double flat_norm(const FlatConstView& v) {
  double acc = 0.0;
  for (const auto& s : v) acc += dot(s, s);
  return std::sqrt(acc);
}

inline void flat_scale(const FlatView& v, double factor) {
  for (auto& s : v) {
    for (double& x : s) x *= factor;
  }
}

}  // namespace ebml
