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

#include <map>
#include <string>
#include <vector>

#include "tern/kernels.hpp"
#include "tern/tensor.hpp"

namespace tern {

enum class LayerKind { Conv, Dense, BatchNorm, Relu, MaxPool, AvgPool, Add, SubsamplePad, Flatten };

enum class PolicyKind { Fp, Tern, Rel };

// Quantization policy of one conv/dense layer. Tern carries one threshold
// fraction; Rel carries one per branch, strictly increasing.
struct QuantPolicy {
  PolicyKind kind = PolicyKind::Fp;
  std::vector<double> betas;
};

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::string name;
  std::vector<int> inputs;  // producer layer indices; -1 is the network input

  // conv
  int out_channels = 0, ksize = 0, stride = 1, pad = 0;
  // dense
  int out_features = 0;
  bool bias = false;
  // pools
  PoolGeom pool;
  // type-A shortcut projection
  int ss_stride = 1, ss_out_c = 0;

  QuantPolicy policy;  // conv and dense only
};

struct ModelGraph {
  std::string arch;
  Shape input_chw;  // {C, H, W}
  int num_classes = 0;
  std::vector<LayerSpec> layers;  // topological order, last layer emits logits
};

inline bool is_weight_layer(LayerKind k) { return k == LayerKind::Conv || k == LayerKind::Dense; }

inline void validate_graph(const ModelGraph& g) {
  if (g.input_chw.size() != 3) throw ConfigError("model: input shape must be C,H,W");
  if (g.num_classes < 2) throw ConfigError("model: need at least 2 classes");
  if (g.layers.empty()) throw ConfigError("model: no layers");
  std::map<std::string, int> seen;
  for (int i = 0; i < static_cast<int>(g.layers.size()); ++i) {
    const LayerSpec& l = g.layers[static_cast<std::size_t>(i)];
    if (l.name.empty()) throw ConfigError("model: unnamed layer at index " + std::to_string(i));
    if (!seen.emplace(l.name, i).second)
      throw ConfigError("model: duplicate layer name '" + l.name + "'");
    const std::size_t want = l.kind == LayerKind::Add ? 2 : 1;
    if (l.inputs.size() != want)
      throw ConfigError("model: layer '" + l.name + "' wants " + std::to_string(want) +
                        " inputs, has " + std::to_string(l.inputs.size()));
    for (int in : l.inputs)
      if (in < -1 || in >= i)
        throw ConfigError("model: layer '" + l.name + "' has input index " +
                          std::to_string(in) + " out of order");
    if (!is_weight_layer(l.kind) && l.policy.kind != PolicyKind::Fp)
      throw ConfigError("model: quantization policy on non-weight layer '" + l.name + "'");
  }
}

// Output shape of every layer for the given batch size. Throws on any
// dimension mismatch along the way.
inline std::vector<Shape> infer_shapes(const ModelGraph& g, int batch) {
  std::vector<Shape> out(g.layers.size());
  const Shape input = {batch, g.input_chw[0], g.input_chw[1], g.input_chw[2]};
  auto shape_of = [&](int idx) -> const Shape& {
    return idx < 0 ? input : out[static_cast<std::size_t>(idx)];
  };
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    const Shape& in = shape_of(l.inputs[0]);
    switch (l.kind) {
      case LayerKind::Conv: {
        if (in.size() != 4)
          throw ShapeError("model: conv '" + l.name + "' needs rank-4 input, got " +
                           shape_str(in));
        const int oh = conv_out_dim(in[2], l.ksize, l.stride, l.pad);
        const int ow = conv_out_dim(in[3], l.ksize, l.stride, l.pad);
        if (oh < 1 || ow < 1)
          throw ShapeError("model: conv '" + l.name + "' does not fit input " + shape_str(in));
        out[i] = {in[0], l.out_channels, oh, ow};
        break;
      }
      case LayerKind::Dense: {
        if (in.size() != 2)
          throw ShapeError("model: dense '" + l.name + "' needs rank-2 input, got " +
                           shape_str(in));
        out[i] = {in[0], l.out_features};
        break;
      }
      case LayerKind::BatchNorm:
      case LayerKind::Relu:
        out[i] = in;
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        const int oh = conv_out_dim(in[2], l.pool.kh, l.pool.stride, l.pool.pad);
        const int ow = conv_out_dim(in[3], l.pool.kw, l.pool.stride, l.pool.pad);
        if (oh < 1 || ow < 1)
          throw ShapeError("model: pool '" + l.name + "' does not fit input " + shape_str(in));
        out[i] = {in[0], in[1], oh, ow};
        break;
      }
      case LayerKind::Add: {
        const Shape& a = shape_of(l.inputs[0]);
        const Shape& b = shape_of(l.inputs[1]);
        if (a != b)
          throw ShapeError("model: add '" + l.name + "' joins mismatched shapes " +
                           shape_str(a) + " and " + shape_str(b));
        out[i] = a;
        break;
      }
      case LayerKind::SubsamplePad: {
        const int oh = (in[2] + l.ss_stride - 1) / l.ss_stride;
        const int ow = (in[3] + l.ss_stride - 1) / l.ss_stride;
        out[i] = {in[0], l.ss_out_c, oh, ow};
        break;
      }
      case LayerKind::Flatten: {
        std::int64_t f = 1;
        for (std::size_t d = 1; d < in.size(); ++d) f *= in[d];
        out[i] = {in[0], static_cast<int>(f)};
        break;
      }
    }
  }
  return out;
}

// Shapes of the learnable tensors, in graph order. Conv weights are OIHW,
// dense weights are in_features x out_features.
struct ParamInfo {
  enum Kind { ConvW, DenseW, Bias, BnGamma, BnBeta, BnMean, BnVar };
  std::string name;
  Shape shape;
  Kind kind;
  int layer;  // graph index
};

inline std::vector<ParamInfo> enumerate_params(const ModelGraph& g) {
  std::vector<ParamInfo> out;
  const std::vector<Shape> shapes = infer_shapes(g, 1);
  auto in_shape = [&](int layer) -> Shape {
    const int idx = g.layers[static_cast<std::size_t>(layer)].inputs[0];
    if (idx < 0) return {1, g.input_chw[0], g.input_chw[1], g.input_chw[2]};
    return shapes[static_cast<std::size_t>(idx)];
  };
  for (int i = 0; i < static_cast<int>(g.layers.size()); ++i) {
    const LayerSpec& l = g.layers[static_cast<std::size_t>(i)];
    if (l.kind == LayerKind::Conv) {
      out.push_back({l.name + ".w",
                     Shape{l.out_channels, in_shape(i)[1], l.ksize, l.ksize},
                     ParamInfo::ConvW, i});
    } else if (l.kind == LayerKind::Dense) {
      out.push_back({l.name + ".w", Shape{in_shape(i)[1], l.out_features}, ParamInfo::DenseW, i});
      if (l.bias) out.push_back({l.name + ".b", Shape{l.out_features}, ParamInfo::Bias, i});
    } else if (l.kind == LayerKind::BatchNorm) {
      const int c = in_shape(i)[1];
      out.push_back({l.name + ".gamma", Shape{c}, ParamInfo::BnGamma, i});
      out.push_back({l.name + ".beta", Shape{c}, ParamInfo::BnBeta, i});
      out.push_back({l.name + ".mean", Shape{c}, ParamInfo::BnMean, i});
      out.push_back({l.name + ".var", Shape{c}, ParamInfo::BnVar, i});
    }
  }
  return out;
}

namespace detail {

class GraphBuilder {
 public:
  GraphBuilder(std::string arch, Shape input_chw, int num_classes) {
    g_.arch = std::move(arch);
    g_.input_chw = std::move(input_chw);
    g_.num_classes = num_classes;
  }

  int conv(const std::string& name, int in, int out_c, int k, int stride, int pad) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.name = name;
    l.inputs = {in};
    l.out_channels = out_c;
    l.ksize = k;
    l.stride = stride;
    l.pad = pad;
    return push(l);
  }

  int dense(const std::string& name, int in, int out_f, bool bias) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.name = name;
    l.inputs = {in};
    l.out_features = out_f;
    l.bias = bias;
    return push(l);
  }

  int bn(const std::string& name, int in) {
    LayerSpec l;
    l.kind = LayerKind::BatchNorm;
    l.name = name;
    l.inputs = {in};
    return push(l);
  }

  int relu(const std::string& name, int in) {
    LayerSpec l;
    l.kind = LayerKind::Relu;
    l.name = name;
    l.inputs = {in};
    return push(l);
  }

  int max_pool(const std::string& name, int in, int k, int stride, int pad) {
    LayerSpec l;
    l.kind = LayerKind::MaxPool;
    l.name = name;
    l.inputs = {in};
    l.pool = {k, k, stride, pad};
    return push(l);
  }

  int avg_pool(const std::string& name, int in, int k) {
    LayerSpec l;
    l.kind = LayerKind::AvgPool;
    l.name = name;
    l.inputs = {in};
    l.pool = {k, k, k, 0};
    return push(l);
  }

  int add(const std::string& name, int a, int b) {
    LayerSpec l;
    l.kind = LayerKind::Add;
    l.name = name;
    l.inputs = {a, b};
    return push(l);
  }

  int subsample_pad(const std::string& name, int in, int stride, int out_c) {
    LayerSpec l;
    l.kind = LayerKind::SubsamplePad;
    l.name = name;
    l.inputs = {in};
    l.ss_stride = stride;
    l.ss_out_c = out_c;
    return push(l);
  }

  int flatten(const std::string& name, int in) {
    LayerSpec l;
    l.kind = LayerKind::Flatten;
    l.name = name;
    l.inputs = {in};
    return push(l);
  }

  // conv -> bn -> relu, returns the relu index
  int cbr(const std::string& prefix, int in, int out_c, int k, int stride, int pad) {
    int c = conv(prefix + ".conv", in, out_c, k, stride, pad);
    int b = bn(prefix + ".bn", c);
    return relu(prefix + ".relu", b);
  }

  ModelGraph take() {
    validate_graph(g_);
    return std::move(g_);
  }

 private:
  int push(LayerSpec l) {
    g_.layers.push_back(std::move(l));
    return static_cast<int>(g_.layers.size() - 1);
  }
  ModelGraph g_;
};

inline ModelGraph build_lenet(int num_classes, Shape input_chw) {
  GraphBuilder b("lenet", std::move(input_chw), num_classes);
  int x = b.cbr("c1", -1, 20, 5, 1, 0);
  x = b.max_pool("p1", x, 2, 2, 0);
  x = b.cbr("c2", x, 50, 5, 1, 0);
  x = b.max_pool("p2", x, 2, 2, 0);
  x = b.flatten("flat", x);
  int d = b.dense("f1", x, 500, false);
  d = b.bn("f1.bn", d);
  d = b.relu("f1.relu", d);
  b.dense("head", d, num_classes, true);
  return b.take();
}

// Small two-conv network sized for 8x8 inputs; exercises every layer kind the
// big nets use while staying cheap enough to train on one core.
inline ModelGraph build_cnn8(int num_classes, Shape input_chw) {
  GraphBuilder b("cnn8", std::move(input_chw), num_classes);
  int x = b.cbr("c1", -1, 8, 3, 1, 1);
  x = b.max_pool("p1", x, 2, 2, 0);
  x = b.cbr("c2", x, 16, 3, 1, 1);
  x = b.max_pool("p2", x, 2, 2, 0);
  x = b.flatten("flat", x);
  int d = b.dense("f1", x, 48, false);
  d = b.bn("f1.bn", d);
  d = b.relu("f1.relu", d);
  b.dense("head", d, num_classes, true);
  return b.take();
}

// Stacked residual net for 32x32 inputs with parameter-free shortcuts:
// downsampling joins a stride-2 subsample of the shortcut path, zero-padded
// to the wider channel count.
inline ModelGraph build_resnet_cifar(int depth, int num_classes, Shape input_chw) {
  if ((depth - 2) % 6 != 0)
    throw ConfigError("resnet depth must be 6n+2, got " + std::to_string(depth));
  const int per_stage = (depth - 2) / 6;
  GraphBuilder b("resnet" + std::to_string(depth), std::move(input_chw), num_classes);
  int x = b.cbr("stem", -1, 16, 3, 1, 1);
  const int widths[3] = {16, 32, 64};
  for (int s = 0; s < 3; ++s) {
    for (int k = 0; k < per_stage; ++k) {
      const std::string p = "s" + std::to_string(s + 1) + "b" + std::to_string(k);
      const bool down = s > 0 && k == 0;
      const int stride = down ? 2 : 1;
      int main = b.conv(p + ".conv1", x, widths[s], 3, stride, 1);
      main = b.bn(p + ".bn1", main);
      main = b.relu(p + ".relu1", main);
      main = b.conv(p + ".conv2", main, widths[s], 3, 1, 1);
      main = b.bn(p + ".bn2", main);
      int shortcut = x;
      if (down) shortcut = b.subsample_pad(p + ".proj", x, 2, widths[s]);
      int sum = b.add(p + ".add", main, shortcut);
      x = b.relu(p + ".relu2", sum);
    }
  }
  x = b.avg_pool("gap", x, 8);
  x = b.flatten("flat", x);
  b.dense("head", x, num_classes, true);
  return b.take();
}

// 18-layer residual net for 224x224 inputs with convolutional projection
// shortcuts at each downsampling stage.
inline ModelGraph build_resnet18(int num_classes, Shape input_chw) {
  GraphBuilder b("resnet18", std::move(input_chw), num_classes);
  int x = b.cbr("stem", -1, 64, 7, 2, 3);
  x = b.max_pool("stem.pool", x, 3, 2, 1);
  const int widths[4] = {64, 128, 256, 512};
  for (int s = 0; s < 4; ++s) {
    for (int k = 0; k < 2; ++k) {
      const std::string p = "s" + std::to_string(s + 1) + "b" + std::to_string(k);
      const bool down = s > 0 && k == 0;
      const int stride = down ? 2 : 1;
      int main = b.conv(p + ".conv1", x, widths[s], 3, stride, 1);
      main = b.bn(p + ".bn1", main);
      main = b.relu(p + ".relu1", main);
      main = b.conv(p + ".conv2", main, widths[s], 3, 1, 1);
      main = b.bn(p + ".bn2", main);
      int shortcut = x;
      if (down) {
        shortcut = b.conv(p + ".proj.conv", x, widths[s], 1, 2, 0);
        shortcut = b.bn(p + ".proj.bn", shortcut);
      }
      int sum = b.add(p + ".add", main, shortcut);
      x = b.relu(p + ".relu2", sum);
    }
  }
  x = b.avg_pool("gap", x, 7);
  x = b.flatten("flat", x);
  b.dense("head", x, num_classes, true);
  return b.take();
}

}  // namespace detail

inline ModelGraph build_model(const std::string& arch, int num_classes, Shape input_chw = {}) {
  auto pick = [&](Shape fallback) { return input_chw.empty() ? fallback : input_chw; };
  if (arch == "lenet") return detail::build_lenet(num_classes, pick({1, 28, 28}));
  if (arch == "cnn8") return detail::build_cnn8(num_classes, pick({1, 8, 8}));
  if (arch == "resnet20") return detail::build_resnet_cifar(20, num_classes, pick({3, 32, 32}));
  if (arch == "resnet32") return detail::build_resnet_cifar(32, num_classes, pick({3, 32, 32}));
  if (arch == "resnet44") return detail::build_resnet_cifar(44, num_classes, pick({3, 32, 32}));
  if (arch == "resnet56") return detail::build_resnet_cifar(56, num_classes, pick({3, 32, 32}));
  if (arch == "resnet18") return detail::build_resnet18(num_classes, pick({3, 224, 224}));
  throw ConfigError("unknown architecture '" + arch + "'");
}

// Marks conv/dense layers with the requested quantization. When
// first_last_fp is set, the first conv (or first weight layer) and the final
// dense stay full precision.
inline void set_policy(ModelGraph& g, PolicyKind kind, const std::vector<double>& betas,
                       bool first_last_fp) {
  int first = -1, last = -1;
  for (int i = 0; i < static_cast<int>(g.layers.size()); ++i) {
    if (is_weight_layer(g.layers[static_cast<std::size_t>(i)].kind)) {
      if (first < 0) first = i;
      last = i;
    }
  }
  for (int i = 0; i < static_cast<int>(g.layers.size()); ++i) {
    LayerSpec& l = g.layers[static_cast<std::size_t>(i)];
    if (!is_weight_layer(l.kind)) continue;
    if (first_last_fp && (i == first || i == last)) {
      l.policy = {PolicyKind::Fp, {}};
      continue;
    }
    l.policy.kind = kind;
    l.policy.betas = betas;
  }
}

// Master-precision model state: full precision weights plus batch norm
// statistics. Quantized views are derived from this, never stored in it.
struct Network {
  ModelGraph graph;
  std::map<std::string, Tensor<float>> params;
  std::map<std::string, BatchNormState<float>> bn;
};

inline Network make_network(ModelGraph graph) {
  Network net;
  net.graph = std::move(graph);
  const std::vector<Shape> shapes = infer_shapes(net.graph, 1);
  for (const ParamInfo& p : enumerate_params(net.graph)) {
    if (p.kind == ParamInfo::ConvW || p.kind == ParamInfo::DenseW || p.kind == ParamInfo::Bias) {
      net.params.emplace(p.name, Tensor<float>(p.shape));
    } else if (p.kind == ParamInfo::BnGamma) {
      const std::string bn_name = net.graph.layers[static_cast<std::size_t>(p.layer)].name;
      net.bn.emplace(bn_name, BatchNormState<float>(p.shape[0]));
    }
  }
  (void)shapes;
  return net;
}

// Scaled normal init: conv and dense draw from N(0, 2/fan_in); biases start
// at zero. Iteration order is the graph order, so one seed gives one model.
inline void init_weights(Network& net, Rng& rng) {
  for (const ParamInfo& p : enumerate_params(net.graph)) {
    if (p.kind == ParamInfo::ConvW) {
      Tensor<float>& w = net.params.at(p.name);
      const double fan_in = static_cast<double>(p.shape[1]) * p.shape[2] * p.shape[3];
      const double std = std::sqrt(2.0 / fan_in);
      for (float& v : w.data) v = static_cast<float>(rng.normal() * std);
    } else if (p.kind == ParamInfo::DenseW) {
      Tensor<float>& w = net.params.at(p.name);
      const double std = std::sqrt(2.0 / static_cast<double>(p.shape[0]));
      for (float& v : w.data) v = static_cast<float>(rng.normal() * std);
    } else if (p.kind == ParamInfo::Bias) {
      net.params.at(p.name).fill(0.0f);
    }
  }
}

}  // namespace tern
