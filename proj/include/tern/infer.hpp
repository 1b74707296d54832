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

#include "tern/model.hpp"
#include "tern/ternary_exec.hpp"

namespace tern {

// Quantized views of the weight layers, keyed by layer name. A plain ternary
// layer holds one branch; an expanded layer holds one per threshold fraction.
// Layers absent from the map run at full precision.
struct QuantizedWeights {
  std::map<std::string, std::vector<TernaryTensor>> branches;
  std::map<std::string, bool> alpha_folded;

  bool folded(const std::string& name) const {
    auto it = alpha_folded.find(name);
    return it != alpha_folded.end() && it->second;
  }
};

// Fresh statistics: threshold and scale recomputed from the current weights
// of every layer whose policy asks for quantization.
inline QuantizedWeights quantize_network(const Network& net) {
  QuantizedWeights q;
  for (const LayerSpec& l : net.graph.layers) {
    if (!is_weight_layer(l.kind) || l.policy.kind == PolicyKind::Fp) continue;
    const Tensor<float>& w = net.params.at(l.name + ".w");
    if (l.policy.kind == PolicyKind::Tern) {
      q.branches[l.name] = {ternarize(w, l.policy.betas.at(0))};
    } else {
      q.branches[l.name] = rel_expand(w, l.policy.betas).branches;
    }
  }
  return q;
}

// Same code layout, but thresholds and scales carried over from an earlier
// quantization.
inline QuantizedWeights quantize_network_frozen(const Network& net,
                                                const QuantizedWeights& frozen) {
  QuantizedWeights q;
  for (const LayerSpec& l : net.graph.layers) {
    if (!is_weight_layer(l.kind) || l.policy.kind == PolicyKind::Fp) continue;
    const Tensor<float>& w = net.params.at(l.name + ".w");
    auto it = frozen.branches.find(l.name);
    if (it == frozen.branches.end())
      throw Error(ErrorCategory::Internal, "frozen statistics missing for layer '" + l.name + "'");
    std::vector<TernaryTensor> out;
    out.reserve(it->second.size());
    for (const TernaryTensor& b : it->second)
      out.push_back(ternarize_frozen(w, b.beta, b.delta_th, b.alpha));
    q.branches[l.name] = std::move(out);
  }
  return q;
}

namespace detail {
// Last layer index that reads each producer, for releasing activations early.
inline std::vector<int> last_use(const ModelGraph& g) {
  std::vector<int> lu(g.layers.size(), -1);
  for (int i = 0; i < static_cast<int>(g.layers.size()); ++i)
    for (int in : g.layers[static_cast<std::size_t>(i)].inputs)
      if (in >= 0) lu[static_cast<std::size_t>(in)] = i;
  return lu;
}
}  // namespace detail

// Inference pass shared by every evaluation path: master weights for layers
// without codes, addition-only kernels for layers with them. Batch norm uses
// running statistics and leaves them untouched.
inline Tensor<float> forward_eval(const Network& net, const QuantizedWeights* quant,
                                  const Tensor<float>& x) {
  const ModelGraph& g = net.graph;
  if (x.rank() != 4 || x.dim(1) != g.input_chw[0] || x.dim(2) != g.input_chw[1] ||
      x.dim(3) != g.input_chw[2])
    throw ShapeError("eval: input " + shape_str(x.shape) + " does not match model input C,H,W " +
                     shape_str(g.input_chw));
  std::vector<Tensor<float>> acts(g.layers.size());
  const std::vector<int> lu = detail::last_use(g);
  auto input_of = [&](int idx) -> const Tensor<float>& {
    return idx < 0 ? x : acts[static_cast<std::size_t>(idx)];
  };
  auto find_codes = [&](const std::string& name) -> const std::vector<TernaryTensor>* {
    if (!quant) return nullptr;
    auto it = quant->branches.find(name);
    return it == quant->branches.end() ? nullptr : &it->second;
  };

  for (int i = 0; i < static_cast<int>(g.layers.size()); ++i) {
    const LayerSpec& l = g.layers[static_cast<std::size_t>(i)];
    const Tensor<float>& in = input_of(l.inputs[0]);
    Tensor<float>& out = acts[static_cast<std::size_t>(i)];
    switch (l.kind) {
      case LayerKind::Conv: {
        const ConvGeom geom{l.stride, l.pad};
        if (const auto* codes = find_codes(l.name)) {
          if (codes->size() == 1)
            out = ternary_conv2d(in, (*codes)[0], geom, !quant->folded(l.name));
          else
            out = rel_conv2d(in, *codes, geom);
        } else {
          out = conv2d_forward(in, net.params.at(l.name + ".w"), geom);
        }
        break;
      }
      case LayerKind::Dense: {
        const Tensor<float>* bias = l.bias ? &net.params.at(l.name + ".b") : nullptr;
        if (const auto* codes = find_codes(l.name)) {
          if (codes->size() == 1)
            out = ternary_dense(in, (*codes)[0], bias, !quant->folded(l.name));
          else
            out = rel_dense(in, *codes, bias);
        } else {
          out = dense_forward(in, net.params.at(l.name + ".w"), bias);
        }
        break;
      }
      case LayerKind::BatchNorm: {
        // eval mode reads the state and never writes it
        auto& bn = const_cast<BatchNormState<float>&>(net.bn.at(l.name));
        out = batchnorm_forward(in, bn, false, static_cast<BatchNormCache<float>*>(nullptr));
        break;
      }
      case LayerKind::Relu:
        out = relu_forward(in);
        break;
      case LayerKind::MaxPool:
        out = pool_forward(in, PoolKind::Max, l.pool, nullptr);
        break;
      case LayerKind::AvgPool:
        out = pool_forward(in, PoolKind::Avg, l.pool, nullptr);
        break;
      case LayerKind::Add: {
        const Tensor<float>& a = input_of(l.inputs[0]);
        const Tensor<float>& b = input_of(l.inputs[1]);
        require_same_shape(a, b, "eval add '" + l.name + "'");
        out.shape = a.shape;
        out.data.resize(a.data.size());
        for (std::size_t j = 0; j < a.data.size(); ++j) out.data[j] = a.data[j] + b.data[j];
        break;
      }
      case LayerKind::SubsamplePad:
        out = subsample_pad_forward(in, l.ss_stride, l.ss_out_c);
        break;
      case LayerKind::Flatten: {
        out.shape = {in.dim(0), static_cast<int>(shape_numel(in.shape) / in.dim(0))};
        out.data = in.data;
        break;
      }
    }
    for (int idx : l.inputs)
      if (idx >= 0 && lu[static_cast<std::size_t>(idx)] == i)
        acts[static_cast<std::size_t>(idx)] = Tensor<float>();
  }
  return std::move(acts.back());
}

inline std::vector<int> argmax_rows(const Tensor<float>& logits) {
  const int N = logits.dim(0), K = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) {
    int best = 0;
    for (int k = 1; k < K; ++k)
      if (logits(n, k) > logits(n, best)) best = k;
    out[static_cast<std::size_t>(n)] = best;
  }
  return out;
}

// Folds each single-branch scale into the batch norm that directly consumes
// the layer's output, when that norm is the only consumer. Returns how many
// layers were folded; expanded stacks and bare layers are left alone.
inline int fold_scales(Network& net, QuantizedWeights& quant) {
  const ModelGraph& g = net.graph;
  // map producer index -> consumer indices
  std::vector<std::vector<int>> consumers(g.layers.size());
  for (int i = 0; i < static_cast<int>(g.layers.size()); ++i)
    for (int in : g.layers[static_cast<std::size_t>(i)].inputs)
      if (in >= 0) consumers[static_cast<std::size_t>(in)].push_back(i);
  int folded = 0;
  for (int i = 0; i < static_cast<int>(g.layers.size()); ++i) {
    const LayerSpec& l = g.layers[static_cast<std::size_t>(i)];
    if (!is_weight_layer(l.kind)) continue;
    auto it = quant.branches.find(l.name);
    if (it == quant.branches.end() || it->second.size() != 1) continue;
    if (quant.folded(l.name)) continue;
    const auto& cons = consumers[static_cast<std::size_t>(i)];
    if (cons.size() != 1 ||
        g.layers[static_cast<std::size_t>(cons[0])].kind != LayerKind::BatchNorm) {
      warn("layer '" + l.name + "' has no dedicated following norm layer; scale not folded");
      continue;
    }
    const std::string& bn_name = g.layers[static_cast<std::size_t>(cons[0])].name;
    fold_alpha_into_bn(it->second[0].alpha, net.bn.at(bn_name));
    quant.alpha_folded[l.name] = true;
    ++folded;
  }
  return folded;
}

}  // namespace tern
