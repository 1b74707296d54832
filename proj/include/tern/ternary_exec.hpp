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

#include <vector>
#include <type_traits>

#include "tern/counters.hpp"
#include "tern/kernels.hpp"
#include "tern/packed.hpp"
#include "tern/rel.hpp"
#include "tern/ternary.hpp"

namespace tern {

// Convolution against ternary codes: weights only steer additions and
// subtractions, the shared scale is applied once per output element (or
// skipped entirely when it has been folded into a following norm layer).
template <typename T>
inline Tensor<T> ternary_conv2d(const Tensor<T>& x, const TernaryTensor& w, const ConvGeom& g,
                                bool apply_alpha = true) {
  if (x.rank() != 4 || w.shape.size() != 4)
    throw ShapeError("ternary conv2d: need NCHW input and OIHW codes");
  if (x.dim(1) != w.shape[1])
    throw ShapeError("ternary conv2d: input channels mismatch, input " + shape_str(x.shape) +
                     " vs codes " + shape_str(w.shape));
  const int N = x.dim(0), O = w.shape[0], C = w.shape[1], kh = w.shape[2], kw = w.shape[3];
  const int oh = conv_out_dim(x.dim(2), kh, g.stride, g.pad);
  const int ow = conv_out_dim(x.dim(3), kw, g.stride, g.pad);
  if (oh < 1 || ow < 1)
    throw ShapeError("ternary conv2d: kernel does not fit input " + shape_str(x.shape));
  Tensor<T> y({N, O, oh, ow});
  const int K = C * kh * kw;
  const int S = oh * ow;
  std::vector<T> cols;
  std::uint64_t adds = 0;
  for (int n = 0; n < N; ++n) {
    detail::im2col(x, n, kh, kw, g, cols, oh, ow);
    for (int o = 0; o < O; ++o) {
      T* out = &y(n, o, 0, 0);
      const std::int8_t* code = w.codes.data() + static_cast<std::size_t>(o) * K;
      for (int k = 0; k < K; ++k) {
        if (code[k] == 0) continue;
        const T* col = cols.data() + static_cast<std::size_t>(k) * S;
        if (code[k] > 0)
          for (int s = 0; s < S; ++s) out[s] += col[s];
        else
          for (int s = 0; s < S; ++s) out[s] -= col[s];
        adds += static_cast<std::uint64_t>(S);
      }
    }
  }
  count_add_sub(adds);
  if (apply_alpha) {
    const T a = static_cast<T>(w.alpha);
    for (T& v : y.data) v *= a;
    count_alpha_mul(y.data.size());
  }
  debug_check_finite(y, "ternary conv2d");
  return y;
}

template <typename T>
inline Tensor<T> ternary_dense(const Tensor<T>& x, const TernaryTensor& w,
                               const Tensor<std::type_identity_t<T>>* bias,
                               bool apply_alpha = true) {
  if (x.rank() != 2 || w.shape.size() != 2)
    throw ShapeError("ternary dense: need NxF input and FxG codes");
  if (x.dim(1) != w.shape[0])
    throw ShapeError("ternary dense: inner dimension mismatch, input " + shape_str(x.shape) +
                     " vs codes " + shape_str(w.shape));
  const int N = x.dim(0), F = w.shape[0], G = w.shape[1];
  if (bias && (bias->rank() != 1 || bias->dim(0) != G))
    throw ShapeError("ternary dense: bias shape " + shape_str(bias->shape) +
                     " does not match output " + std::to_string(G));
  Tensor<T> y({N, G});
  std::uint64_t adds = 0;
  for (int n = 0; n < N; ++n) {
    T* out = &y(n, 0);
    const T* xn = &x(n, 0);
    for (int f = 0; f < F; ++f) {
      const std::int8_t* code = w.codes.data() + static_cast<std::size_t>(f) * G;
      const T xf = xn[f];
      for (int j = 0; j < G; ++j) {
        if (code[j] == 0) continue;
        if (code[j] > 0)
          out[j] += xf;
        else
          out[j] -= xf;
        ++adds;
      }
    }
  }
  count_add_sub(adds);
  if (apply_alpha) {
    const T a = static_cast<T>(w.alpha);
    for (T& v : y.data) v *= a;
    count_alpha_mul(y.data.size());
  }
  if (bias) {
    for (int n = 0; n < N; ++n) {
      T* out = &y(n, 0);
      for (int j = 0; j < G; ++j) out[j] += bias->data[static_cast<std::size_t>(j)];
    }
  }
  debug_check_finite(y, "ternary dense");
  return y;
}

// Sum of per-branch convolutions; every branch applies its own scale.
template <typename T>
inline Tensor<T> rel_conv2d(const Tensor<T>& x, const std::vector<TernaryTensor>& branches,
                            const ConvGeom& g) {
  if (branches.empty()) throw ConfigError("rel conv2d: empty branch list");
  Tensor<T> acc = ternary_conv2d(x, branches[0], g, true);
  for (std::size_t k = 1; k < branches.size(); ++k) {
    Tensor<T> yk = ternary_conv2d(x, branches[k], g, true);
    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += yk.data[i];
  }
  return acc;
}

template <typename T>
inline Tensor<T> rel_dense(const Tensor<T>& x, const std::vector<TernaryTensor>& branches,
                           const Tensor<std::type_identity_t<T>>* bias) {
  if (branches.empty()) throw ConfigError("rel dense: empty branch list");
  Tensor<T> acc = ternary_dense(x, branches[0], static_cast<const Tensor<T>*>(nullptr), true);
  for (std::size_t k = 1; k < branches.size(); ++k) {
    Tensor<T> yk = ternary_dense(x, branches[k], static_cast<const Tensor<T>*>(nullptr), true);
    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += yk.data[i];
  }
  if (bias) {
    const int N = acc.dim(0), G = acc.dim(1);
    for (int n = 0; n < N; ++n)
      for (int j = 0; j < G; ++j) acc(n, j) += bias->data[static_cast<std::size_t>(j)];
  }
  return acc;
}

// Absorbs the shared scale of a preceding ternary layer into a batch norm:
// the normalization output is invariant when the scale moves out of the
// activations and into (gamma, running mean). Gradient-free, eval-time only.
template <typename T>
inline void fold_alpha_into_bn(double alpha, BatchNormState<T>& bn) {
  if (!(alpha > 0.0))
    throw ConfigError("fold: scale must be positive to fold, got " + std::to_string(alpha));
  for (std::size_t i = 0; i < bn.gamma.data.size(); ++i)
    bn.gamma.data[i] = static_cast<T>(alpha * static_cast<double>(bn.gamma.data[i]));
  for (std::size_t i = 0; i < bn.running_mean.data.size(); ++i)
    bn.running_mean.data[i] =
        static_cast<T>(static_cast<double>(bn.running_mean.data[i]) / alpha);
}

}  // namespace tern
