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

#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "tern/kernels.hpp"
#include "tern/tensor.hpp"

namespace tern {

// Define-by-run reverse-mode tape. Ops append nodes in topological order;
// backward() sweeps once from the loss node toward the leaves, then frees
// every intermediate value. Leaf values and leaf gradients survive the sweep,
// everything else is released. A tape runs backward at most once.
template <typename T>
class Tape {
 public:
  using Id = int;

  Id leaf(Tensor<T> v) {
    Node node;
    node.value = std::move(v);
    node.is_leaf = true;
    return push(std::move(node));
  }

  const Tensor<T>& value(Id id) const {
    const Node& n = at(id);
    if (n.value.data.empty() && !n.is_leaf)
      throw Error(ErrorCategory::Internal, "tape: value already released by backward()");
    return n.value;
  }

  // Gradient at a leaf (zeros if the loss does not depend on it).
  const Tensor<T>& grad(Id id) {
    Node& n = at(id);
    if (!ran_backward_) throw Error(ErrorCategory::Internal, "tape: grad before backward()");
    if (n.grad.data.empty()) {
      n.grad = Tensor<T>(n.value.shape.empty() ? Shape{1} : n.value.shape);
    }
    return n.grad;
  }

  void backward(Id root) {
    if (ran_backward_)
      throw Error(ErrorCategory::Internal, "tape: backward() ran twice on one tape");
    ran_backward_ = true;
    Node& r = at(root);
    if (shape_numel(r.value.shape) != 1)
      throw Error(ErrorCategory::Internal,
                  "tape: backward() root must be scalar, got " + shape_str(r.value.shape));
    r.grad = Tensor<T>(r.value.shape);
    r.grad.fill(T(1));
    for (Id i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.grad.data.empty() && n.backward) n.backward(*this);
      n.backward = nullptr;
      if (!n.is_leaf) {
        n.value = Tensor<T>();
        n.grad = Tensor<T>();
      }
    }
  }

  Id conv2d(Id x, Id w, ConvGeom g) {
    Tensor<T> y = conv2d_forward(value(x), value(w), g);
    Node node;
    node.value = std::move(y);
    node.backward = [x, w, g, self = next_id()](Tape& t) {
      Tensor<T> gx, gw;
      conv2d_backward(t.value(x), t.value(w), t.at(self).grad, g, &gx, &gw);
      t.accumulate(x, gx);
      t.accumulate(w, gw);
    };
    return push(std::move(node));
  }

  Id dense(Id x, Id w, std::optional<Id> bias) {
    const Tensor<T>* b = bias ? &value(*bias) : nullptr;
    Tensor<T> y = dense_forward(value(x), value(w), b);
    Node node;
    node.value = std::move(y);
    node.backward = [x, w, bias, self = next_id()](Tape& t) {
      Tensor<T> gx, gw, gb;
      dense_backward(t.value(x), t.value(w), t.at(self).grad, &gx, &gw,
                     bias ? &gb : nullptr);
      t.accumulate(x, gx);
      t.accumulate(w, gw);
      if (bias) t.accumulate(*bias, gb);
    };
    return push(std::move(node));
  }

  // Normalizes x with the state's statistics machinery; gamma/beta node values
  // are copied into the state so their current tape values drive the forward.
  Id batchnorm(Id x, Id gamma, Id beta, BatchNormState<T>& bn, bool training) {
    bn.gamma = value(gamma);
    bn.beta = value(beta);
    auto cache = std::make_shared<BatchNormCache<T>>();
    Tensor<T> y = batchnorm_forward(value(x), bn, training, cache.get());
    Node node;
    node.value = std::move(y);
    node.backward = [x, gamma, beta, cache, &bn, training, self = next_id()](Tape& t) {
      Tensor<T> gx, gg, gb;
      batchnorm_backward(t.at(self).grad, *cache, bn, training, &gx, &gg, &gb);
      t.accumulate(x, gx);
      t.accumulate(gamma, gg);
      t.accumulate(beta, gb);
    };
    return push(std::move(node));
  }

  Id relu(Id x) {
    Tensor<T> y = relu_forward(value(x));
    Node node;
    node.value = std::move(y);
    node.backward = [x, self = next_id()](Tape& t) {
      t.accumulate(x, relu_backward(t.value(x), t.at(self).grad));
    };
    return push(std::move(node));
  }

  Id max_pool(Id x, PoolGeom g) {
    auto argmax = std::make_shared<std::vector<std::int32_t>>();
    Tensor<T> y = pool_forward(value(x), PoolKind::Max, g, argmax.get());
    Node node;
    node.value = std::move(y);
    node.backward = [x, g, argmax, self = next_id()](Tape& t) {
      t.accumulate(x, pool_backward(t.value(x), t.at(self).grad, PoolKind::Max, g, argmax.get()));
    };
    return push(std::move(node));
  }

  Id avg_pool(Id x, PoolGeom g) {
    Tensor<T> y = pool_forward(value(x), PoolKind::Avg, g, nullptr);
    Node node;
    node.value = std::move(y);
    node.backward = [x, g, self = next_id()](Tape& t) {
      t.accumulate(x, pool_backward(t.value(x), t.at(self).grad, PoolKind::Avg, g, nullptr));
    };
    return push(std::move(node));
  }

  Id subsample_pad(Id x, int stride, int out_c) {
    Tensor<T> y = subsample_pad_forward(value(x), stride, out_c);
    Node node;
    node.value = std::move(y);
    node.backward = [x, stride, self = next_id()](Tape& t) {
      t.accumulate(x, subsample_pad_backward(t.value(x), t.at(self).grad, stride));
    };
    return push(std::move(node));
  }

  Id add(Id a, Id b) {
    require_same_shape(value(a), value(b), "add");
    Tensor<T> y;
    y.shape = value(a).shape;
    y.data.resize(value(a).data.size());
    for (std::size_t i = 0; i < y.data.size(); ++i)
      y.data[i] = value(a).data[i] + value(b).data[i];
    Node node;
    node.value = std::move(y);
    node.backward = [a, b, self = next_id()](Tape& t) {
      t.accumulate(a, t.at(self).grad);
      t.accumulate(b, t.at(self).grad);
    };
    return push(std::move(node));
  }

  Id mul(Id a, Id b) {
    require_same_shape(value(a), value(b), "mul");
    Tensor<T> y;
    y.shape = value(a).shape;
    y.data.resize(value(a).data.size());
    for (std::size_t i = 0; i < y.data.size(); ++i)
      y.data[i] = value(a).data[i] * value(b).data[i];
    Node node;
    node.value = std::move(y);
    node.backward = [a, b, self = next_id()](Tape& t) {
      const Tensor<T>& g = t.at(self).grad;
      Tensor<T> ga, gb;
      ga.shape = g.shape;
      gb.shape = g.shape;
      ga.data.resize(g.data.size());
      gb.data.resize(g.data.size());
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        ga.data[i] = g.data[i] * t.value(b).data[i];
        gb.data[i] = g.data[i] * t.value(a).data[i];
      }
      t.accumulate(a, ga);
      t.accumulate(b, gb);
    };
    return push(std::move(node));
  }

  Id scale(Id a, T c) {
    Tensor<T> y;
    y.shape = value(a).shape;
    y.data.resize(value(a).data.size());
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = value(a).data[i] * c;
    Node node;
    node.value = std::move(y);
    node.backward = [a, c, self = next_id()](Tape& t) {
      Tensor<T> ga;
      ga.shape = t.at(self).grad.shape;
      ga.data.resize(t.at(self).grad.data.size());
      for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] = t.at(self).grad.data[i] * c;
      t.accumulate(a, ga);
    };
    return push(std::move(node));
  }

  Id sum(Id a) {
    double acc = 0.0;
    for (const T& v : value(a).data) acc += static_cast<double>(v);
    Node node;
    node.value = Tensor<T>::scalar(static_cast<T>(acc));
    node.backward = [a, self = next_id()](Tape& t) {
      Tensor<T> ga(t.value(a).shape);
      ga.fill(t.at(self).grad.data[0]);
      t.accumulate(a, ga);
    };
    return push(std::move(node));
  }

  // Reshape NCHW activations to NxF for the dense head.
  Id flatten(Id x) {
    const Tensor<T>& v = value(x);
    if (v.rank() < 2) throw ShapeError("flatten: need rank >= 2, got " + shape_str(v.shape));
    const int n = v.dim(0);
    const int f = static_cast<int>(shape_numel(v.shape) / n);
    Tensor<T> y;
    y.shape = {n, f};
    y.data = v.data;
    Node node;
    node.value = std::move(y);
    node.backward = [x, self = next_id()](Tape& t) {
      Tensor<T> gx;
      gx.shape = t.value(x).shape;
      gx.data = t.at(self).grad.data;
      t.accumulate(x, gx);
    };
    return push(std::move(node));
  }

  // Terminal loss node: scalar mean cross entropy over the batch.
  Id softmax_xent(Id logits, std::vector<int> targets) {
    auto probs = std::make_shared<Tensor<T>>();
    double loss = softmax_xent_forward(value(logits), targets, probs.get());
    Node node;
    node.value = Tensor<T>::scalar(static_cast<T>(loss));
    node.backward = [logits, targets = std::move(targets), probs, self = next_id()](Tape& t) {
      const double up = static_cast<double>(t.at(self).grad.data[0]);
      t.accumulate(logits, softmax_xent_backward(*probs, targets, up));
    };
    return push(std::move(node));
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(Tape&)> backward;
    bool is_leaf = false;
  };

  Node& at(Id id) {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw Error(ErrorCategory::Internal, "tape: node id out of range");
    return nodes_[static_cast<std::size_t>(id)];
  }
  const Node& at(Id id) const { return const_cast<Tape*>(this)->at(id); }

  void accumulate(Id id, const Tensor<T>& g) {
    Node& n = at(id);
    if (n.grad.data.empty()) {
      n.grad = g;
      return;
    }
    require_same_shape(n.grad, g, "tape gradient accumulate");
    for (std::size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
  }

  Id next_id() const { return static_cast<Id>(nodes_.size()); }

  Id push(Node node) {
    nodes_.push_back(std::move(node));
    return static_cast<Id>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

}  // namespace tern
