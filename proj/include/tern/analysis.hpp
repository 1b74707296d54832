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

#include <cstdint>
#include <string>
#include <vector>

#include "tern/infer.hpp"
#include "tern/model.hpp"
#include "tern/model_io.hpp"

namespace tern {

// ---- Density ----

struct DensityRow {
  std::string name;  // layer name, with branch suffix for expanded layers
  std::int64_t params = 0;
  std::int64_t nonzero = 0;
  double density = 0.0;
};

struct DensityReport {
  std::vector<DensityRow> rows;
  double average = 0.0;  // weighted by parameter count
};

inline DensityReport density_report(const QuantizedWeights& quant) {
  DensityReport rep;
  std::int64_t total = 0, nonzero = 0;
  for (const auto& [layer, branches] : quant.branches) {
    for (std::size_t k = 0; k < branches.size(); ++k) {
      const TernaryTensor& b = branches[k];
      DensityRow row;
      row.name = branches.size() == 1 ? layer : layer + "[" + std::to_string(k) + "]";
      row.params = b.numel();
      row.nonzero = b.nonzero_count();
      row.density = b.density();
      total += row.params;
      nonzero += row.nonzero;
      rep.rows.push_back(std::move(row));
    }
  }
  rep.average = total == 0 ? 0.0 : static_cast<double>(nonzero) / static_cast<double>(total);
  return rep;
}

// ---- Compression ----

struct CompressionReport {
  std::size_t fp_weight_bytes = 0;     // conv/dense weights only, fp serialization
  std::size_t quant_weight_bytes = 0;  // same tensors, quantized layers packed
  std::size_t fp_full_bytes = 0;       // entire checkpoint (norm stats, biases too)
  std::size_t quant_full_bytes = 0;
  double weight_rate = 1.0;
  double full_rate = 1.0;
  double theoretical_rate = 1.0;  // bit ratio, headers ignored
};

namespace detail {
inline ModelFile weights_only(const ModelFile& mf) {
  ModelFile out;
  out.version = mf.version;
  for (const ModelEntry& e : mf.entries)
    if (e.name.size() > 2 && e.name.substr(e.name.size() - 2) == ".w")
      out.entries.push_back(e);
  return out;
}
}  // namespace detail

inline CompressionReport compression_report(const Network& net, const QuantizedWeights& quant) {
  CompressionReport rep;
  const ModelFile fp_file = snapshot_fp(net);
  const ModelFile q_file = snapshot_quantized(net, quant);
  rep.fp_full_bytes = serialize_model(fp_file).size();
  rep.quant_full_bytes = serialize_model(q_file).size();
  rep.fp_weight_bytes = serialize_model(detail::weights_only(fp_file)).size();
  rep.quant_weight_bytes = serialize_model(detail::weights_only(q_file)).size();
  rep.weight_rate = static_cast<double>(rep.fp_weight_bytes) /
                    static_cast<double>(rep.quant_weight_bytes);
  rep.full_rate =
      static_cast<double>(rep.fp_full_bytes) / static_cast<double>(rep.quant_full_bytes);

  // theoretical: 32 bits per fp weight vs 2 bits per code per branch
  double fp_bits = 0.0, q_bits = 0.0;
  for (const LayerSpec& l : net.graph.layers) {
    if (!is_weight_layer(l.kind)) continue;
    const auto numel =
        static_cast<double>(shape_numel(net.params.at(l.name + ".w").shape));
    fp_bits += numel * 32.0;
    auto it = quant.branches.find(l.name);
    if (it == quant.branches.end())
      q_bits += numel * 32.0;
    else
      q_bits += numel * 2.0 * static_cast<double>(it->second.size());
  }
  rep.theoretical_rate = q_bits == 0.0 ? 1.0 : fp_bits / q_bits;
  return rep;
}

// ---- Operation counts ----

struct LayerOps {
  std::string name;
  std::int64_t macs = 0;       // per batch: output elements x fan-in
  std::int64_t out_elems = 0;  // per batch
  double density = 1.0;        // code-weighted; 1.0 for fp layers
  int branches = 0;            // 0 for fp layers
  // fp path: one multiply and one add per mac
  std::int64_t fp_mul = 0, fp_add = 0;
  // ternary path: adds proportional to density, multiplies only for scales
  double tern_addsub = 0.0;
  std::int64_t tern_mul = 0;
};

struct CostReport {
  std::vector<LayerOps> layers;
  std::int64_t fp_mul = 0, fp_add = 0;
  double tern_addsub = 0.0;
  std::int64_t tern_mul = 0;
};

inline CostReport op_count_report(const Network& net, const QuantizedWeights* quant, int batch) {
  CostReport rep;
  const std::vector<Shape> shapes = infer_shapes(net.graph, batch);
  for (int i = 0; i < static_cast<int>(net.graph.layers.size()); ++i) {
    const LayerSpec& l = net.graph.layers[static_cast<std::size_t>(i)];
    if (!is_weight_layer(l.kind)) continue;
    const Shape& out = shapes[static_cast<std::size_t>(i)];
    const Tensor<float>& w = net.params.at(l.name + ".w");
    const std::int64_t fan_in = l.kind == LayerKind::Conv
                                    ? static_cast<std::int64_t>(w.shape[1]) * w.shape[2] * w.shape[3]
                                    : w.shape[0];
    LayerOps ops;
    ops.name = l.name;
    ops.out_elems = shape_numel(out);
    ops.macs = ops.out_elems * fan_in;
    ops.fp_mul = ops.macs;
    ops.fp_add = ops.macs;
    const std::vector<TernaryTensor>* branches = nullptr;
    if (quant) {
      auto it = quant->branches.find(l.name);
      if (it != quant->branches.end()) branches = &it->second;
    }
    if (branches) {
      ops.branches = static_cast<int>(branches->size());
      double dsum = 0.0;
      for (const TernaryTensor& b : *branches) {
        dsum += b.density();
        ops.tern_addsub += b.density() * static_cast<double>(ops.macs);
      }
      ops.density = dsum / static_cast<double>(branches->size());
      ops.tern_mul = ops.out_elems * ops.branches;  // one scale multiply per branch output
    } else {
      // layer stays fp on the ternary path too
      ops.tern_addsub = static_cast<double>(ops.macs);
      ops.tern_mul = ops.macs;
    }
    rep.fp_mul += ops.fp_mul;
    rep.fp_add += ops.fp_add;
    rep.tern_addsub += ops.tern_addsub;
    rep.tern_mul += ops.tern_mul;
    rep.layers.push_back(std::move(ops));
  }
  return rep;
}

// ---- Hardware cost ----

// LUT/DSP prices of one MAC lane. Defaults follow the published Kintex-7
// figures: a floating-point adder costs 261 LUT slices, a multiplier 235 LUT
// slices plus 2 DSP48E blocks. The ternary lane keeps only the adder.
struct FpgaCostModel {
  std::int64_t adder_lut = 261;
  std::int64_t mult_lut = 235;
  std::int64_t mult_dsp = 2;
  std::int64_t available_lut = 74650;
  std::int64_t available_dsp = 1920;
};

struct FpgaCost {
  std::int64_t fp_macs = 0, tern_macs = 0;
  std::int64_t fp_lut = 0, fp_dsp = 0;
  std::int64_t tern_lut = 0, tern_dsp = 0;
  std::int64_t available_lut = 0, available_dsp = 0;
};

inline FpgaCost fpga_cost(std::int64_t fp_macs, std::int64_t tern_macs,
                          const FpgaCostModel& model = {}) {
  if (fp_macs < 0 || tern_macs < 0) throw ConfigError("fpga cost: mac counts must be >= 0");
  FpgaCost c;
  c.fp_macs = fp_macs;
  c.tern_macs = tern_macs;
  c.fp_lut = fp_macs * (model.adder_lut + model.mult_lut);
  c.fp_dsp = fp_macs * model.mult_dsp;
  c.tern_lut = tern_macs * model.adder_lut;
  c.tern_dsp = 0;
  c.available_lut = model.available_lut;
  c.available_dsp = model.available_dsp;
  return c;
}

}  // namespace tern
