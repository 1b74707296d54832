/*
 * Copyright (c) 2026 The tern authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cstddef>
#include <sstream>
#include <vector>

#include "tern/common.hpp"

namespace tern {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline void validate_shape(const Shape& s) {
  if (s.empty() || s.size() > 4)
    throw ShapeError("tensor rank must be 1..4, got " + shape_str(s));
  for (int d : s)
    if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str(s));
}

inline void validate_shape(const Shape& s, const std::string& ctx) {
  if (s.empty() || s.size() > 4)
    throw ShapeError(ctx + ": tensor rank must be 1..4, got " + shape_str(s));
  for (int d : s)
    if (d <= 0) throw ShapeError(ctx + ": tensor dims must be positive, got " + shape_str(s));
}

// Dense row-major tensor, rank 1..4. float in production paths, double in the
// gradient-check harness.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;

  explicit Tensor(Shape s) : shape(std::move(s)) {
    validate_shape(shape);
    data.assign(static_cast<std::size_t>(shape_numel(shape)), T(0));
  }

  // Construction from external values rejects non-finite inputs.
  static Tensor from_data(Shape s, std::vector<T> values) {
    validate_shape(s);
    if (static_cast<std::int64_t>(values.size()) != shape_numel(s))
      throw ShapeError("data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(s));
    for (const T& v : values)
      if (!std::isfinite(static_cast<double>(v)))
        throw DivergenceError("non-finite value in tensor data for shape " + shape_str(s));
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(values);
    return t;
  }

  static Tensor scalar(T v) { return from_data({1}, {v}); }

  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

  T& operator()(int i) { return data[static_cast<std::size_t>(i)]; }
  const T& operator()(int i) const { return data[static_cast<std::size_t>(i)]; }
  T& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
  const T& operator()(int i, int j) const {
    return data[static_cast<std::size_t>(i) * shape[1] + j];
  }
  T& operator()(int n, int c, int h, int w) {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  const T& operator()(int n, int c, int h, int w) const {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  Tensor reshaped(Shape s) const {
    validate_shape(s);
    if (shape_numel(s) != numel())
      throw ShapeError("cannot reshape " + shape_str(shape) + " to " + shape_str(s));
    Tensor out;
    out.shape = std::move(s);
    out.data = data;
    return out;
  }
};

template <typename T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const std::string& ctx) {
  if (!a.same_shape(b))
    throw ShapeError(ctx + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
}

// Debug builds verify op outputs stay finite; release builds skip the pass.
template <typename T>
inline void debug_check_finite(const Tensor<T>& t, const char* op) {
#ifndef NDEBUG
  if (!t.all_finite()) throw DivergenceError(std::string(op) + " produced a non-finite value");
#else
  (void)t;
  (void)op;
#endif
}

template <typename T>
inline Tensor<T> random_normal(Shape s, Rng& rng, double mean = 0.0, double stddev = 1.0) {
  Tensor<T> t(std::move(s));
  for (auto& v : t.data) v = static_cast<T>(rng.normal(mean, stddev));
  return t;
}

template <typename T>
inline Tensor<T> random_uniform(Shape s, Rng& rng, double lo, double hi) {
  Tensor<T> t(std::move(s));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

}  // namespace tern
