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

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tern/tensor.hpp"

namespace tern {

// Quantized view of one weight tensor: per-element codes in {-1, 0, +1} and a
// single positive scale shared by every surviving element.
struct TernaryTensor {
  Shape shape;
  std::vector<std::int8_t> codes;
  double alpha = 0.0;
  double beta = 0.0;      // threshold fraction this tensor was built with
  double delta_th = 0.0;  // absolute threshold actually applied

  std::int64_t numel() const { return static_cast<std::int64_t>(codes.size()); }

  std::int64_t nonzero_count() const {
    std::int64_t n = 0;
    for (std::int8_t c : codes) n += (c != 0);
    return n;
  }

  double density() const {
    return codes.empty() ? 0.0 : static_cast<double>(nonzero_count()) / codes.size();
  }
};

inline void validate_beta(double beta) {
  if (!(beta > 0.0 && beta < 1.0))
    throw ConfigError("threshold fraction must lie in (0,1), got " + std::to_string(beta));
}

// Threshold below which a weight is snapped to zero: a fixed fraction of the
// largest magnitude in the tensor.
template <typename T>
inline double compute_threshold(const Tensor<T>& w, double beta) {
  validate_beta(beta);
  if (w.data.empty()) throw ShapeError("compute_threshold: empty tensor");
  double mx = 0.0;
  for (const T& v : w.data) mx = std::max(mx, std::abs(static_cast<double>(v)));
  return beta * mx;
}

// Scale factor: mean magnitude of the weights that survive the threshold.
// The boundary is inclusive, matching the staircase that keeps |w| == delta_th.
template <typename T>
inline double compute_alpha(const Tensor<T>& w, double delta_th) {
  double sum = 0.0;
  std::int64_t n = 0;
  for (const T& v : w.data) {
    const double a = std::abs(static_cast<double>(v));
    if (a >= delta_th) {
      sum += a;
      ++n;
    }
  }
  if (n == 0) {
    warn("no weights at or above threshold " + std::to_string(delta_th) +
         "; scale falls back to 0");
    return 0.0;
  }
  return sum / static_cast<double>(n);
}

namespace detail {
template <typename T>
inline std::vector<std::int8_t> threshold_codes(const Tensor<T>& w, double delta_th) {
  std::vector<std::int8_t> codes(w.data.size(), 0);
  for (std::size_t i = 0; i < w.data.size(); ++i) {
    const double v = static_cast<double>(w.data[i]);
    if (std::abs(v) >= delta_th && v != 0.0) codes[i] = v > 0 ? 1 : -1;
  }
  return codes;
}
}  // namespace detail

// Full statistical quantization: threshold and scale are both recomputed from
// the tensor at hand.
template <typename T>
inline TernaryTensor ternarize(const Tensor<T>& w, double beta) {
  TernaryTensor t;
  t.shape = w.shape;
  t.beta = beta;
  t.delta_th = compute_threshold(w, beta);
  t.codes = detail::threshold_codes(w, t.delta_th);
  t.alpha = compute_alpha(w, t.delta_th);
  return t;
}

// Quantization against statistics frozen earlier: codes follow the current
// weights, but threshold and scale stay fixed.
template <typename T>
inline TernaryTensor ternarize_frozen(const Tensor<T>& w, double beta, double delta_th,
                                      double alpha) {
  validate_beta(beta);
  if (delta_th < 0) throw ConfigError("ternarize_frozen: threshold must be >= 0");
  if (alpha < 0) throw ConfigError("ternarize_frozen: scale must be >= 0");
  TernaryTensor t;
  t.shape = w.shape;
  t.beta = beta;
  t.delta_th = delta_th;
  t.codes = detail::threshold_codes(w, delta_th);
  t.alpha = alpha;
  return t;
}

template <typename T = float>
inline Tensor<T> dequantize(const TernaryTensor& t) {
  Tensor<T> w;
  w.shape = t.shape;
  w.data.resize(t.codes.size());
  for (std::size_t i = 0; i < t.codes.size(); ++i)
    w.data[i] = static_cast<T>(t.alpha * t.codes[i]);
  return w;
}

// Straight-through gradient: the quantizer is treated as identity wherever the
// full-precision weight sits inside the clip interval [-1, 1], boundary
// included, and blocks the gradient outside it.
template <typename T>
inline Tensor<T> ste_backward(const Tensor<T>& grad_quantized, const Tensor<T>& master) {
  require_same_shape(grad_quantized, master, "ste_backward");
  Tensor<T> g;
  g.shape = master.shape;
  g.data.resize(master.data.size());
  for (std::size_t i = 0; i < master.data.size(); ++i) {
    const double w = static_cast<double>(master.data[i]);
    g.data[i] = (w >= -1.0 && w <= 1.0) ? grad_quantized.data[i] : T(0);
  }
  return g;
}

}  // namespace tern
