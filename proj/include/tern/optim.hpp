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
#include <string>
#include <utility>
#include <vector>

#include "tern/tensor.hpp"

namespace tern {

// Piecewise-constant learning rate: the base rate multiplied by the factor of
// every milestone whose epoch has been reached.
class MilestoneSchedule {
 public:
  MilestoneSchedule() = default;
  MilestoneSchedule(double base_lr, std::vector<std::pair<int, double>> milestones)
      : base_(base_lr), milestones_(std::move(milestones)) {
    if (base_ <= 0) throw ConfigError("schedule: base learning rate must be positive");
    int prev = -1;
    for (const auto& [epoch, factor] : milestones_) {
      if (epoch <= prev)
        throw ConfigError("schedule: milestone epochs must be strictly increasing");
      if (factor <= 0) throw ConfigError("schedule: milestone factors must be positive");
      prev = epoch;
    }
  }

  double lr(int epoch) const {
    double v = base_;
    for (const auto& [e, factor] : milestones_)
      if (epoch >= e) v *= factor;
    return v;
  }

  double base() const { return base_; }

 private:
  double base_ = 0.1;
  std::vector<std::pair<int, double>> milestones_;
};

namespace detail {
template <typename T>
inline void check_grad_finite(const Tensor<T>& g, const std::string& name) {
  for (const T& v : g.data)
    if (!std::isfinite(static_cast<double>(v)))
      throw DivergenceError("non-finite gradient in parameter '" + name + "'");
}
}  // namespace detail

// Momentum SGD with decoupled-from-nothing classic L2: the decay term joins
// the gradient before it enters the velocity.
template <typename T>
struct SgdState {
  Tensor<T> velocity;
};

template <typename T>
inline void sgd_step(Tensor<T>& w, const Tensor<T>& g, SgdState<T>& st, double lr,
                     double momentum, double weight_decay, const std::string& name) {
  require_same_shape(w, g, "sgd_step '" + name + "'");
  detail::check_grad_finite(g, name);
  if (st.velocity.data.empty()) st.velocity = Tensor<T>(w.shape);
  for (std::size_t i = 0; i < w.data.size(); ++i) {
    const double gi = static_cast<double>(g.data[i]) +
                      weight_decay * static_cast<double>(w.data[i]);
    const double v = momentum * static_cast<double>(st.velocity.data[i]) + gi;
    st.velocity.data[i] = static_cast<T>(v);
    w.data[i] = static_cast<T>(static_cast<double>(w.data[i]) - lr * v);
  }
}

template <typename T>
struct AdamState {
  Tensor<T> m, v;
  long step = 0;
};

template <typename T>
inline void adam_step(Tensor<T>& w, const Tensor<T>& g, AdamState<T>& st, double lr,
                      double beta1, double beta2, double eps, double weight_decay,
                      const std::string& name) {
  require_same_shape(w, g, "adam_step '" + name + "'");
  detail::check_grad_finite(g, name);
  if (st.m.data.empty()) {
    st.m = Tensor<T>(w.shape);
    st.v = Tensor<T>(w.shape);
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < w.data.size(); ++i) {
    const double gi = static_cast<double>(g.data[i]) +
                      weight_decay * static_cast<double>(w.data[i]);
    const double m = beta1 * static_cast<double>(st.m.data[i]) + (1.0 - beta1) * gi;
    const double v = beta2 * static_cast<double>(st.v.data[i]) + (1.0 - beta2) * gi * gi;
    st.m.data[i] = static_cast<T>(m);
    st.v.data[i] = static_cast<T>(v);
    const double mhat = m / c1;
    const double vhat = v / c2;
    w.data[i] = static_cast<T>(static_cast<double>(w.data[i]) -
                               lr * mhat / (std::sqrt(vhat) + eps));
  }
}

}  // namespace tern
