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
#include <limits>
#include <optional>
#include <vector>
#include <type_traits>

#include "tern/counters.hpp"
#include "tern/tensor.hpp"

namespace tern {

struct ConvGeom {
  int stride = 1;
  int pad = 0;
};

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
inline void validate_conv_args(const Tensor<T>& x, const Tensor<T>& w, const ConvGeom& g) {
  if (x.rank() != 4 || w.rank() != 4)
    throw ShapeError("conv2d: need NCHW input and OIHW weight, got " + shape_str(x.shape) +
                     " and " + shape_str(w.shape));
  if (x.dim(1) != w.dim(1))
    throw ShapeError("conv2d: input channels mismatch, input " + shape_str(x.shape) +
                     " vs weight " + shape_str(w.shape));
  if (g.stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (g.pad < 0) throw ShapeError("conv2d: pad must be >= 0");
  if (conv_out_dim(x.dim(2), w.dim(2), g.stride, g.pad) < 1 ||
      conv_out_dim(x.dim(3), w.dim(3), g.stride, g.pad) < 1)
    throw ShapeError("conv2d: kernel " + shape_str(w.shape) + " does not fit input " +
                     shape_str(x.shape));
}

namespace detail {

// im2col for one sample: out[k][s], k over C*kh*kw, s over oh*ow.
template <typename T>
inline void im2col(const Tensor<T>& x, int n, int kh, int kw, const ConvGeom& g,
                   std::vector<T>& cols, int oh, int ow) {
  const int C = x.dim(1), H = x.dim(2), W = x.dim(3);
  cols.assign(static_cast<std::size_t>(C) * kh * kw * oh * ow, T(0));
  std::size_t k = 0;
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j, ++k) {
        T* dst = cols.data() + k * oh * ow;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride - g.pad + i;
          if (iy < 0 || iy >= H) continue;
          const T* src = &x(n, c, iy, 0);
          for (int z = 0; z < ow; ++z) {
            const int ix = z * g.stride - g.pad + j;
            if (ix >= 0 && ix < W) dst[y * ow + z] = src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
inline void col2im_accumulate(const std::vector<T>& cols, int n, int kh, int kw,
                              const ConvGeom& g, Tensor<T>& gx, int oh, int ow) {
  const int C = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
  std::size_t k = 0;
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j, ++k) {
        const T* src = cols.data() + k * oh * ow;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride - g.pad + i;
          if (iy < 0 || iy >= H) continue;
          T* dst = &gx(n, c, iy, 0);
          for (int z = 0; z < ow; ++z) {
            const int ix = z * g.stride - g.pad + j;
            if (ix >= 0 && ix < W) dst[ix] += src[y * ow + z];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
inline Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const ConvGeom& g) {
  validate_conv_args(x, w, g);
  const int N = x.dim(0), O = w.dim(0), C = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const int oh = conv_out_dim(x.dim(2), kh, g.stride, g.pad);
  const int ow = conv_out_dim(x.dim(3), kw, g.stride, g.pad);
  Tensor<T> y({N, O, oh, ow});
  const int K = C * kh * kw;
  const int S = oh * ow;
  std::vector<T> cols;
  for (int n = 0; n < N; ++n) {
    detail::im2col(x, n, kh, kw, g, cols, oh, ow);
    for (int o = 0; o < O; ++o) {
      T* out = &y(n, o, 0, 0);
      const T* wf = &w.data[static_cast<std::size_t>(o) * K];
      for (int k = 0; k < K; ++k) {
        const T wk = wf[k];
        const T* col = cols.data() + static_cast<std::size_t>(k) * S;
        for (int s = 0; s < S; ++s) out[s] += wk * col[s];
      }
    }
  }
  count_weight_mul(static_cast<std::uint64_t>(N) * O * K * S);
  debug_check_finite(y, "conv2d");
  return y;
}

template <typename T>
inline void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                            const ConvGeom& g, Tensor<T>* gx, Tensor<T>* gw) {
  const int N = x.dim(0), O = w.dim(0), C = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const int oh = gy.dim(2), ow = gy.dim(3);
  const int K = C * kh * kw;
  const int S = oh * ow;
  if (gx) *gx = Tensor<T>(x.shape);
  if (gw) *gw = Tensor<T>(w.shape);
  std::vector<T> cols, gcols;
  for (int n = 0; n < N; ++n) {
    if (gw || gx) detail::im2col(x, n, kh, kw, g, cols, oh, ow);
    if (gw) {
      for (int o = 0; o < O; ++o) {
        const T* gout = &gy(n, o, 0, 0);
        T* gwf = &gw->data[static_cast<std::size_t>(o) * K];
        for (int k = 0; k < K; ++k) {
          const T* col = cols.data() + static_cast<std::size_t>(k) * S;
          T acc = 0;
          for (int s = 0; s < S; ++s) acc += gout[s] * col[s];
          gwf[k] += acc;
        }
      }
    }
    if (gx) {
      gcols.assign(static_cast<std::size_t>(K) * S, T(0));
      for (int o = 0; o < O; ++o) {
        const T* gout = &gy(n, o, 0, 0);
        const T* wf = &w.data[static_cast<std::size_t>(o) * K];
        for (int k = 0; k < K; ++k) {
          const T wk = wf[k];
          T* gcol = gcols.data() + static_cast<std::size_t>(k) * S;
          for (int s = 0; s < S; ++s) gcol[s] += wk * gout[s];
        }
      }
      detail::col2im_accumulate(gcols, n, kh, kw, g, *gx, oh, ow);
    }
  }
}

template <typename T>
inline Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w,
                               const Tensor<std::type_identity_t<T>>* bias) {
  if (x.rank() != 2 || w.rank() != 2)
    throw ShapeError("dense: need NxF input and FxG weight, got " + shape_str(x.shape) +
                     " and " + shape_str(w.shape));
  if (x.dim(1) != w.dim(0))
    throw ShapeError("dense: inner dimension mismatch, input " + shape_str(x.shape) +
                     " vs weight " + shape_str(w.shape));
  const int N = x.dim(0), F = x.dim(1), G = w.dim(1);
  if (bias && (bias->rank() != 1 || bias->dim(0) != G))
    throw ShapeError("dense: bias shape " + shape_str(bias->shape) + " does not match output " +
                     std::to_string(G));
  Tensor<T> y({N, G});
  for (int n = 0; n < N; ++n) {
    T* out = &y(n, 0);
    if (bias)
      for (int j = 0; j < G; ++j) out[j] = bias->data[static_cast<std::size_t>(j)];
    const T* xn = &x(n, 0);
    for (int f = 0; f < F; ++f) {
      const T xf = xn[f];
      const T* wf = &w(f, 0);
      for (int j = 0; j < G; ++j) out[j] += xf * wf[j];
    }
  }
  count_weight_mul(static_cast<std::uint64_t>(N) * F * G);
  debug_check_finite(y, "dense");
  return y;
}

template <typename T>
inline void dense_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                           Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb) {
  const int N = x.dim(0), F = x.dim(1), G = w.dim(1);
  if (gx) *gx = Tensor<T>({N, F});
  if (gw) *gw = Tensor<T>({F, G});
  if (gb) *gb = Tensor<T>({G});
  for (int n = 0; n < N; ++n) {
    const T* gyn = &gy(n, 0);
    const T* xn = &x(n, 0);
    if (gb)
      for (int j = 0; j < G; ++j) gb->data[static_cast<std::size_t>(j)] += gyn[j];
    if (gw)
      for (int f = 0; f < F; ++f) {
        T* gwf = &(*gw)(f, 0);
        const T xf = xn[f];
        for (int j = 0; j < G; ++j) gwf[j] += xf * gyn[j];
      }
    if (gx)
      for (int f = 0; f < F; ++f) {
        const T* wf = &w(f, 0);
        T acc = 0;
        for (int j = 0; j < G; ++j) acc += wf[j] * gyn[j];
        (*gx)(n, f) = acc;
      }
  }
}

template <typename T>
inline Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y;
  y.shape = x.shape;
  y.data.resize(x.data.size());
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  return y;
}

template <typename T>
inline Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& gy) {
  Tensor<T> gx;
  gx.shape = x.shape;
  gx.data.resize(x.data.size());
  for (std::size_t i = 0; i < x.data.size(); ++i)
    gx.data[i] = x.data[i] > T(0) ? gy.data[i] : T(0);
  return gx;
}

// Per-channel batch norm state. Rank-4 inputs normalize over (N,H,W) per
// channel, rank-2 over N per feature.
template <typename T>
struct BatchNormState {
  Tensor<T> gamma, beta;          // affine
  Tensor<T> running_mean, running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  explicit BatchNormState(int channels = 1)
      : gamma({channels}), beta({channels}), running_mean({channels}), running_var({channels}) {
    gamma.fill(T(1));
    running_var.fill(T(1));
  }
};

template <typename T>
struct BatchNormCache {
  Tensor<T> xhat;
  std::vector<double> istd;  // per channel
};

namespace detail {
template <typename T>
inline void bn_dims(const Tensor<T>& x, int* channels, std::int64_t* per_channel) {
  if (x.rank() == 4) {
    *channels = x.dim(1);
    *per_channel = static_cast<std::int64_t>(x.dim(0)) * x.dim(2) * x.dim(3);
  } else if (x.rank() == 2) {
    *channels = x.dim(1);
    *per_channel = x.dim(0);
  } else {
    throw ShapeError("batchnorm: rank must be 2 or 4, got " + shape_str(x.shape));
  }
}

template <typename T, typename F>
inline void bn_for_each(Tensor<T>& x, int c, F&& f) {
  if (x.rank() == 4) {
    const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
    for (int n = 0; n < N; ++n) {
      T* p = &x(n, c, 0, 0);
      for (int i = 0; i < H * W; ++i) f(p[i]);
    }
  } else {
    const int N = x.dim(0);
    for (int n = 0; n < N; ++n) f(x(n, c));
  }
}

template <typename T, typename F>
inline void bn_for_each(const Tensor<T>& x, int c, F&& f) {
  bn_for_each(const_cast<Tensor<T>&>(x), c, [&](T& v) { f(static_cast<const T&>(v)); });
}
}  // namespace detail

template <typename T>
inline Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormState<T>& bn, bool training,
                                   BatchNormCache<std::type_identity_t<T>>* cache) {
  int C;
  std::int64_t m;
  detail::bn_dims(x, &C, &m);
  if (bn.gamma.dim(0) != C)
    throw ShapeError("batchnorm: channel count " + std::to_string(C) +
                     " does not match params " + shape_str(bn.gamma.shape));
  if (training && x.dim(0) < 2)
    throw ShapeError("batchnorm: train mode requires batch size >= 2, got " +
                     std::to_string(x.dim(0)));

  Tensor<T> y;
  y.shape = x.shape;
  y.data.resize(x.data.size());
  if (cache) {
    cache->xhat.shape = x.shape;
    cache->xhat.data.resize(x.data.size());
    cache->istd.assign(static_cast<std::size_t>(C), 0.0);
  }
  Tensor<T>& ycast = y;

  for (int c = 0; c < C; ++c) {
    double mean, var;
    if (training) {
      double sum = 0.0, sq = 0.0;
      detail::bn_for_each(x, c, [&](const T& v) {
        sum += static_cast<double>(v);
        sq += static_cast<double>(v) * static_cast<double>(v);
      });
      mean = sum / static_cast<double>(m);
      var = sq / static_cast<double>(m) - mean * mean;
      if (var < 0) var = 0;  // numeric guard
      const double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1)
                                    : var;
      bn.running_mean(c) = static_cast<T>((1.0 - bn.momentum) * bn.running_mean(c) +
                                          bn.momentum * mean);
      bn.running_var(c) = static_cast<T>((1.0 - bn.momentum) * bn.running_var(c) +
                                         bn.momentum * unbiased);
    } else {
      mean = static_cast<double>(bn.running_mean(c));
      var = static_cast<double>(bn.running_var(c));
    }
    const double istd = 1.0 / std::sqrt(var + bn.eps);
    const double g = static_cast<double>(bn.gamma(c));
    const double b = static_cast<double>(bn.beta(c));
    if (cache) cache->istd[static_cast<std::size_t>(c)] = istd;

    std::int64_t idx = 0;
    T* xhat = cache ? cache->xhat.data.data() : nullptr;
    // walk x and y in lockstep, per channel
    if (x.rank() == 4) {
      const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
      for (int n = 0; n < N; ++n) {
        const T* px = &x(n, c, 0, 0);
        T* py = &ycast(n, c, 0, 0);
        T* ph = xhat ? &cache->xhat(n, c, 0, 0) : nullptr;
        for (int i = 0; i < H * W; ++i) {
          const double h = (static_cast<double>(px[i]) - mean) * istd;
          if (ph) ph[i] = static_cast<T>(h);
          py[i] = static_cast<T>(g * h + b);
        }
      }
    } else {
      const int N = x.dim(0);
      for (int n = 0; n < N; ++n) {
        const double h = (static_cast<double>(x(n, c)) - mean) * istd;
        if (xhat) cache->xhat(n, c) = static_cast<T>(h);
        ycast(n, c) = static_cast<T>(g * h + b);
      }
    }
    (void)idx;
  }
  debug_check_finite(y, "batchnorm");
  return y;
}

// Backward through train-mode normalization (batch statistics).
template <typename T>
inline void batchnorm_backward(const Tensor<T>& gy, const BatchNormCache<T>& cache,
                               const BatchNormState<T>& bn, bool training, Tensor<T>* gx,
                               Tensor<T>* ggamma, Tensor<T>* gbeta) {
  int C;
  std::int64_t m;
  detail::bn_dims(gy, &C, &m);
  if (gx) *gx = Tensor<T>(gy.shape);
  if (ggamma) *ggamma = Tensor<T>({C});
  if (gbeta) *gbeta = Tensor<T>({C});

  for (int c = 0; c < C; ++c) {
    const double istd = cache.istd[static_cast<std::size_t>(c)];
    const double g = static_cast<double>(bn.gamma(c));
    double sum_gy = 0.0, sum_gy_xhat = 0.0;
    if (gy.rank() == 4) {
      const int N = gy.dim(0), H = gy.dim(2), W = gy.dim(3);
      for (int n = 0; n < N; ++n) {
        const T* pg = &gy(n, c, 0, 0);
        const T* ph = &cache.xhat(n, c, 0, 0);
        for (int i = 0; i < H * W; ++i) {
          sum_gy += static_cast<double>(pg[i]);
          sum_gy_xhat += static_cast<double>(pg[i]) * static_cast<double>(ph[i]);
        }
      }
    } else {
      const int N = gy.dim(0);
      for (int n = 0; n < N; ++n) {
        sum_gy += static_cast<double>(gy(n, c));
        sum_gy_xhat += static_cast<double>(gy(n, c)) * static_cast<double>(cache.xhat(n, c));
      }
    }
    if (ggamma) (*ggamma)(c) = static_cast<T>(sum_gy_xhat);
    if (gbeta) (*gbeta)(c) = static_cast<T>(sum_gy);
    if (!gx) continue;

    const double md = static_cast<double>(m);
    if (gy.rank() == 4) {
      const int N = gy.dim(0), H = gy.dim(2), W = gy.dim(3);
      for (int n = 0; n < N; ++n) {
        const T* pg = &gy(n, c, 0, 0);
        const T* ph = &cache.xhat(n, c, 0, 0);
        T* px = &(*gx)(n, c, 0, 0);
        for (int i = 0; i < H * W; ++i) {
          const double v = training
                               ? (g * istd / md) *
                                     (md * static_cast<double>(pg[i]) - sum_gy -
                                      static_cast<double>(ph[i]) * sum_gy_xhat)
                               : g * istd * static_cast<double>(pg[i]);
          px[i] = static_cast<T>(v);
        }
      }
    } else {
      const int N = gy.dim(0);
      for (int n = 0; n < N; ++n) {
        const double v = training
                             ? (g * istd / md) *
                                   (md * static_cast<double>(gy(n, c)) - sum_gy -
                                    static_cast<double>(cache.xhat(n, c)) * sum_gy_xhat)
                             : g * istd * static_cast<double>(gy(n, c));
        (*gx)(n, c) = static_cast<T>(v);
      }
    }
  }
}

enum class PoolKind { Max, Avg };

struct PoolGeom {
  int kh = 2, kw = 2;
  int stride = 2;
  int pad = 0;  // max pool only; avg pool here is unpadded
};

template <typename T>
inline Tensor<T> pool_forward(const Tensor<T>& x, PoolKind kind, const PoolGeom& g,
                              std::vector<std::int32_t>* argmax) {
  if (x.rank() != 4) throw ShapeError("pool: need NCHW input, got " + shape_str(x.shape));
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int oh = conv_out_dim(H, g.kh, g.stride, g.pad);
  const int ow = conv_out_dim(W, g.kw, g.stride, g.pad);
  if (oh < 1 || ow < 1) throw ShapeError("pool: window does not fit input " + shape_str(x.shape));
  Tensor<T> y({N, C, oh, ow});
  if (argmax) argmax->assign(y.data.size(), -1);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          if (kind == PoolKind::Max) {
            T best = -std::numeric_limits<T>::infinity();
            std::int32_t best_idx = -1;
            for (int a = 0; a < g.kh; ++a)
              for (int b = 0; b < g.kw; ++b) {
                const int iy = i * g.stride - g.pad + a;
                const int ix = j * g.stride - g.pad + b;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                const T v = x(n, c, iy, ix);
                if (v > best) {
                  best = v;
                  best_idx =
                      static_cast<std::int32_t>(((static_cast<std::int64_t>(n) * C + c) * H + iy) * W + ix);
                }
              }
            y(n, c, i, j) = best;
            if (argmax)
              (*argmax)[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * C + c) * oh + i) * ow + j)] =
                  best_idx;
          } else {
            double acc = 0.0;
            for (int a = 0; a < g.kh; ++a)
              for (int b = 0; b < g.kw; ++b) {
                const int iy = i * g.stride + a;
                const int ix = j * g.stride + b;
                acc += static_cast<double>(x(n, c, iy, ix));
              }
            y(n, c, i, j) = static_cast<T>(acc / (g.kh * g.kw));
          }
        }
  return y;
}

template <typename T>
inline Tensor<T> pool_backward(const Tensor<T>& x, const Tensor<T>& gy, PoolKind kind,
                               const PoolGeom& g, const std::vector<std::int32_t>* argmax) {
  Tensor<T> gx(x.shape);
  const int N = gy.dim(0), C = gy.dim(1), oh = gy.dim(2), ow = gy.dim(3);
  if (kind == PoolKind::Max) {
    for (std::size_t i = 0; i < gy.data.size(); ++i) {
      const std::int32_t idx = (*argmax)[i];
      if (idx >= 0) gx.data[static_cast<std::size_t>(idx)] += gy.data[i];
    }
  } else {
    const T inv = T(1) / static_cast<T>(g.kh * g.kw);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < oh; ++i)
          for (int j = 0; j < ow; ++j) {
            const T v = gy(n, c, i, j) * inv;
            for (int a = 0; a < g.kh; ++a)
              for (int b = 0; b < g.kw; ++b) gx(n, c, i * g.stride + a, j * g.stride + b) += v;
          }
  }
  return gx;
}

// Parameter-free type-A shortcut projection: stride-s spatial subsample plus
// zero padding of the channel dimension up to out_c.
template <typename T>
inline Tensor<T> subsample_pad_forward(const Tensor<T>& x, int stride, int out_c) {
  if (x.rank() != 4) throw ShapeError("subsample_pad: need NCHW input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (out_c < C) throw ShapeError("subsample_pad: out channels below input channels");
  const int oh = (H + stride - 1) / stride, ow = (W + stride - 1) / stride;
  Tensor<T> y({N, out_c, oh, ow});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) y(n, c, i, j) = x(n, c, i * stride, j * stride);
  return y;
}

template <typename T>
inline Tensor<T> subsample_pad_backward(const Tensor<T>& x, const Tensor<T>& gy, int stride) {
  Tensor<T> gx(x.shape);
  const int N = x.dim(0), C = x.dim(1);
  const int oh = gy.dim(2), ow = gy.dim(3);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) gx(n, c, i * stride, j * stride) = gy(n, c, i, j);
  return gx;
}

// Mean negative log-softmax of the target logits; max-subtraction keeps the
// exponentials in range. Returns the scalar loss and fills probs (N x K).
template <typename T>
inline double softmax_xent_forward(const Tensor<T>& logits, const std::vector<int>& targets,
                                   Tensor<std::type_identity_t<T>>* probs) {
  if (logits.rank() != 2)
    throw ShapeError("softmax_xent: need NxK logits, got " + shape_str(logits.shape));
  const int N = logits.dim(0), K = logits.dim(1);
  if (static_cast<int>(targets.size()) != N)
    throw ShapeError("softmax_xent: batch " + std::to_string(N) + " vs " +
                     std::to_string(targets.size()) + " targets");
  for (int t : targets)
    if (t < 0 || t >= K)
      throw ShapeError("softmax_xent: target index " + std::to_string(t) +
                       " out of range [0," + std::to_string(K) + ")");
  if (probs) *probs = Tensor<T>({N, K});
  double loss = 0.0;
  for (int n = 0; n < N; ++n) {
    const T* row = &logits(n, 0);
    double mx = static_cast<double>(row[0]);
    for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(row[k]));
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k]) - mx);
    const double logz = std::log(z) + mx;
    if (probs)
      for (int k = 0; k < K; ++k)
        (*probs)(n, k) = static_cast<T>(std::exp(static_cast<double>(row[k]) - logz));
    loss += logz - static_cast<double>(row[targets[static_cast<std::size_t>(n)]]);
  }
  return loss / N;
}

template <typename T>
inline Tensor<T> softmax_xent_backward(const Tensor<T>& probs, const std::vector<int>& targets,
                                       double upstream) {
  const int N = probs.dim(0), K = probs.dim(1);
  Tensor<T> g({N, K});
  const double scale = upstream / N;
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k) {
      double v = static_cast<double>(probs(n, k));
      if (k == targets[static_cast<std::size_t>(n)]) v -= 1.0;
      g(n, k) = static_cast<T>(v * scale);
    }
  return g;
}

}  // namespace tern
