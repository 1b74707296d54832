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
#include <string>
#include <vector>

#include "tern/ternary.hpp"

namespace tern {

// One weight tensor expanded into several ternary branches, each thresholded
// at its own fraction. Branch outputs are summed, so the stack behaves like a
// single quantizer with more levels while every branch stays ternary.
struct ExpansionStack {
  Shape shape;
  std::vector<TernaryTensor> branches;

  int t_ex() const { return static_cast<int>(branches.size()); }
};

inline void validate_expansion_betas(const std::vector<double>& betas) {
  if (betas.empty()) throw ConfigError("expansion: need at least one threshold fraction");
  double prev = 0.0;
  for (double b : betas) {
    validate_beta(b);
    if (b <= prev)
      throw ConfigError("expansion: threshold fractions must be strictly increasing");
    prev = b;
  }
}

// Evenly spaced defaults: 0.05, 0.10, 0.15, ... one per branch.
inline std::vector<double> default_expansion_betas(int t_ex) {
  if (t_ex < 1) throw ConfigError("expansion: branch count must be >= 1");
  if (t_ex > 19) throw ConfigError("expansion: branch count too large for 0.05 spacing");
  std::vector<double> betas(static_cast<std::size_t>(t_ex));
  for (int k = 0; k < t_ex; ++k) betas[static_cast<std::size_t>(k)] = 0.05 * (k + 1);
  return betas;
}

template <typename T>
inline ExpansionStack rel_expand(const Tensor<T>& w, const std::vector<double>& betas) {
  validate_expansion_betas(betas);
  ExpansionStack st;
  st.shape = w.shape;
  st.branches.reserve(betas.size());
  for (double b : betas) st.branches.push_back(ternarize(w, b));
  return st;
}

// Frozen-statistics variant: thresholds and scales come from a previously
// built stack, only the codes track the current weights.
template <typename T>
inline ExpansionStack rel_expand_frozen(const Tensor<T>& w, const ExpansionStack& frozen) {
  ExpansionStack st;
  st.shape = w.shape;
  st.branches.reserve(frozen.branches.size());
  for (const TernaryTensor& b : frozen.branches)
    st.branches.push_back(ternarize_frozen(w, b.beta, b.delta_th, b.alpha));
  return st;
}

// The single tensor the whole stack is equivalent to: the sum of the branch
// dequantizations. With T_ex branches it takes at most 2*T_ex + 1 distinct
// values per tensor.
template <typename T = double>
inline Tensor<T> effective_quantizer(const ExpansionStack& st) {
  if (st.branches.empty()) throw ConfigError("expansion: empty stack");
  Tensor<T> out;
  out.shape = st.shape;
  out.data.assign(static_cast<std::size_t>(shape_numel(st.shape)), T(0));
  for (const TernaryTensor& b : st.branches)
    for (std::size_t i = 0; i < b.codes.size(); ++i)
      out.data[i] += static_cast<T>(b.alpha * b.codes[i]);
  return out;
}

}  // namespace tern
