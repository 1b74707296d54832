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

#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tern/autodiff.hpp"
#include "tern/dataset.hpp"
#include "tern/infer.hpp"
#include "tern/model.hpp"
#include "tern/optim.hpp"

namespace tern {

// Training regimes. Everything except Fp trains ternary forward passes
// against full-precision master weights; the suffixes select whether scaling
// statistics refresh every step (ics), whether training starts from a
// pretrained model (ft), and whether layers expand into several branches
// (rel).
enum class AblationMode { Fp, Tw, TwIcs, TwFt, TwIcsFt, TwIcsFtRel };

inline AblationMode parse_mode(const std::string& s) {
  if (s == "fp") return AblationMode::Fp;
  if (s == "tw") return AblationMode::Tw;
  if (s == "tw-ics") return AblationMode::TwIcs;
  if (s == "tw-ft") return AblationMode::TwFt;
  if (s == "tw-ics-ft") return AblationMode::TwIcsFt;
  if (s == "tw-ics-ft-rel") return AblationMode::TwIcsFtRel;
  throw ConfigError("unknown mode '" + s + "'");
}

inline std::string mode_name(AblationMode m) {
  switch (m) {
    case AblationMode::Fp: return "fp";
    case AblationMode::Tw: return "tw";
    case AblationMode::TwIcs: return "tw-ics";
    case AblationMode::TwFt: return "tw-ft";
    case AblationMode::TwIcsFt: return "tw-ics-ft";
    case AblationMode::TwIcsFtRel: return "tw-ics-ft-rel";
  }
  return "fp";
}

inline bool mode_quantizes(AblationMode m) { return m != AblationMode::Fp; }
inline bool mode_uses_ics(AblationMode m) {
  return m == AblationMode::TwIcs || m == AblationMode::TwIcsFt || m == AblationMode::TwIcsFtRel;
}
inline bool mode_wants_pretrained(AblationMode m) {
  return m == AblationMode::TwFt || m == AblationMode::TwIcsFt || m == AblationMode::TwIcsFtRel;
}

// Stamps the quantization policy the mode implies onto the graph's weight
// layers.
inline void apply_mode_policy(ModelGraph& g, AblationMode mode, std::vector<double> betas,
                              int t_ex, bool first_last_fp) {
  if (!mode_quantizes(mode)) return;
  if (mode == AblationMode::TwIcsFtRel) {
    if (betas.empty()) betas = default_expansion_betas(t_ex);
    if (static_cast<int>(betas.size()) != t_ex)
      throw ConfigError("expansion wants " + std::to_string(t_ex) + " threshold fractions, got " +
                        std::to_string(betas.size()));
    validate_expansion_betas(betas);
    set_policy(g, PolicyKind::Rel, betas, first_last_fp);
  } else {
    if (betas.empty()) betas = {0.05};
    if (betas.size() != 1)
      throw ConfigError("plain ternary mode takes one threshold fraction, got " +
                        std::to_string(betas.size()));
    validate_beta(betas[0]);
    set_policy(g, PolicyKind::Tern, betas, first_last_fp);
  }
}

struct TrainConfig {
  AblationMode mode = AblationMode::Fp;
  std::string optimizer = "sgd";  // sgd | adam
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  std::vector<std::pair<int, double>> milestones;
  int epochs = 10;
  int batch_size = 32;
  std::uint64_t seed = 1;
  bool augment = false;
  int crop_pad = 4;
  bool bn_stats_update = true;  // keep refreshing running stats while fine-tuning
  int eval_batch = 256;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;  // percent
  double val_acc = 0.0;    // percent
};

inline void write_history_csv(const std::string& path, const std::vector<EpochStats>& hist) {
  std::ostringstream os;
  os << "epoch,lr,train_loss,train_acc,val_acc\n";
  for (const EpochStats& e : hist) {
    os << e.epoch << ',' << std::setprecision(10) << e.lr << ',' << std::fixed
       << std::setprecision(6) << e.train_loss << ',' << std::setprecision(4) << e.train_acc
       << ',' << std::setprecision(4) << e.val_acc << '\n';
    os.unsetf(std::ios_base::fixed);
  }
  const std::string s = os.str();
  write_file_bytes(path, reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

// Batched inference accuracy; top-5 alongside top-1 when asked.
inline double evaluate_model(const Network& net, const QuantizedWeights* quant,
                             const Dataset& ds, int batch, double* top5_out = nullptr) {
  if (ds.size() == 0) throw ConfigError("evaluate: empty dataset");
  std::int64_t hits1 = 0, hits5 = 0;
  const int k5 = std::min(5, net.graph.num_classes);
  for (int start = 0; start < ds.size(); start += batch) {
    const int stop = std::min(ds.size(), start + batch);
    std::vector<int> idx(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    auto [x, y] = make_batch(ds, idx, BatchOptions{}, nullptr);
    const Tensor<float> logits = forward_eval(net, quant, x);
    for (int n = 0; n < logits.dim(0); ++n) {
      const int target = y[static_cast<std::size_t>(n)];
      const float target_score = logits(n, target);
      int better = 0;
      for (int k = 0; k < logits.dim(1); ++k)
        if (logits(n, k) > target_score) ++better;
      if (better == 0) ++hits1;
      if (better < k5) ++hits5;
    }
  }
  if (top5_out) *top5_out = 100.0 * static_cast<double>(hits5) / ds.size();
  return 100.0 * static_cast<double>(hits1) / ds.size();
}

class Trainer {
 public:
  Trainer(Network net, TrainConfig cfg) : net_(std::move(net)), cfg_(std::move(cfg)) {
    if (cfg_.batch_size < 2) throw ConfigError("batch size must be >= 2 for batch norm");
    if (cfg_.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (cfg_.optimizer != "sgd" && cfg_.optimizer != "adam")
      throw ConfigError("unknown optimizer '" + cfg_.optimizer + "'");
    schedule_ = MilestoneSchedule(cfg_.lr, cfg_.milestones);
    if (mode_quantizes(cfg_.mode) && !mode_uses_ics(cfg_.mode))
      frozen_ = quantize_network(net_);
  }

  Network& network() { return net_; }
  const Network& network() const { return net_; }
  const TrainConfig& config() const { return cfg_; }
  long steps_taken() const { return step_; }

  // Quantized views exactly as inference will run them: fresh statistics in
  // ics modes, the frozen statistics otherwise.
  QuantizedWeights quantized_view() const {
    if (!mode_quantizes(cfg_.mode))
      throw ConfigError("mode '" + mode_name(cfg_.mode) + "' has no quantized view");
    return mode_uses_ics(cfg_.mode) ? quantize_network(net_)
                                    : quantize_network_frozen(net_, frozen_);
  }

  // One optimizer update from one batch. Returns the batch loss and, if
  // asked, the batch top-1 accuracy in percent.
  double train_step(const Tensor<float>& x, const std::vector<int>& y, double lr,
                    double* batch_acc = nullptr) {
    ++step_;
    const bool quantized = mode_quantizes(cfg_.mode);
    QuantizedWeights q;
    if (quantized) q = quantized_view();

    // running stats are restored after the pass when updates are disabled
    std::map<std::string, std::pair<Tensor<float>, Tensor<float>>> stats_backup;
    if (!cfg_.bn_stats_update)
      for (const auto& [name, bn] : net_.bn)
        stats_backup.emplace(name, std::make_pair(bn.running_mean, bn.running_var));

    Tape<float> tape;
    const auto x_id = tape.leaf(x);
    std::map<std::string, Tape<float>::Id> leaves;
    std::map<std::string, std::vector<Tape<float>::Id>> branch_leaves;
    const Tape<float>::Id logits_id = forward_train(tape, x_id, q, leaves, branch_leaves);
    const Tape<float>::Id loss_id = tape.softmax_xent(logits_id, y);
    const double loss = static_cast<double>(tape.value(loss_id).data[0]);
    if (!std::isfinite(loss))
      throw DivergenceError("loss is not finite at step " + std::to_string(step_));
    if (batch_acc) {
      const std::vector<int> pred = argmax_rows(tape.value(logits_id));
      int hit = 0;
      for (std::size_t i = 0; i < y.size(); ++i) hit += (pred[i] == y[i]);
      *batch_acc = 100.0 * hit / static_cast<double>(y.size());
    }

    tape.backward(loss_id);

    for (const auto& [name, id] : leaves) apply_grad(name, tape.grad(id), lr);
    for (const auto& [layer, ids] : branch_leaves) {
      const std::string wname = layer + ".w";
      Tensor<float>& master = net_.params.at(wname);
      Tensor<float> gsum = tape.grad(ids[0]);
      for (std::size_t k = 1; k < ids.size(); ++k) {
        const Tensor<float>& gk = tape.grad(ids[k]);
        for (std::size_t i = 0; i < gsum.data.size(); ++i) gsum.data[i] += gk.data[i];
      }
      // branch gradients flow straight through wherever |w| stays clipped
      apply_grad(wname, ste_backward(gsum, master), lr);
    }

    if (!cfg_.bn_stats_update)
      for (auto& [name, bn] : net_.bn) {
        bn.running_mean = stats_backup.at(name).first;
        bn.running_var = stats_backup.at(name).second;
      }
    return loss;
  }

  // Full training run. History has one row per epoch; the network ends at the
  // weights of the best validation epoch.
  std::vector<EpochStats> fit(const Dataset& train, const Dataset& val) {
    if (train.size() < cfg_.batch_size)
      throw ConfigError("training split smaller than one batch");
    Rng rng(cfg_.seed);
    std::vector<EpochStats> history;
    double best_val = -1.0;
    Network best_net = net_;
    QuantizedWeights best_frozen = frozen_;

    std::vector<int> order(static_cast<std::size_t>(train.size()));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      const double lr = schedule_.lr(epoch);
      Rng erng = rng.fork(static_cast<std::uint64_t>(epoch) + 1);
      erng.shuffle(order.begin(), order.end());
      double loss_sum = 0.0, acc_sum = 0.0;
      std::int64_t seen = 0;
      BatchOptions opt;
      opt.augment = cfg_.augment;
      opt.crop_pad = cfg_.crop_pad;
      for (int start = 0; start + 1 < train.size(); start += cfg_.batch_size) {
        const int stop = std::min(train.size(), start + cfg_.batch_size);
        if (stop - start < 2) break;  // batch norm needs at least two samples
        std::vector<int> idx(order.begin() + start, order.begin() + stop);
        auto [x, y] = make_batch(train, idx, opt, &erng);
        double bacc = 0.0;
        const double bloss = train_step(x, y, lr, &bacc);
        loss_sum += bloss * (stop - start);
        acc_sum += bacc * (stop - start);
        seen += stop - start;
      }
      EpochStats row;
      row.epoch = epoch;
      row.lr = lr;
      row.train_loss = loss_sum / static_cast<double>(seen);
      row.train_acc = acc_sum / static_cast<double>(seen);
      row.val_acc = evaluate(val, mode_quantizes(cfg_.mode));
      history.push_back(row);
      if (row.val_acc > best_val) {
        best_val = row.val_acc;
        best_net = net_;
        best_frozen = frozen_;
      }
    }
    net_ = std::move(best_net);
    frozen_ = std::move(best_frozen);
    return history;
  }

  // Accuracy under either weight view. Ternary mode runs the exact inference
  // path (codes + scales); fp mode runs the master weights.
  double evaluate(const Dataset& ds, bool ternary_mode, double* top5 = nullptr) {
    if (!ternary_mode) return evaluate_model(net_, nullptr, ds, cfg_.eval_batch, top5);
    const QuantizedWeights q = quantized_view();
    return evaluate_model(net_, &q, ds, cfg_.eval_batch, top5);
  }

 private:
  // Builds the training-mode graph on the tape. Quantized layers enter as
  // one leaf per branch holding the dequantized weights of this step.
  Tape<float>::Id forward_train(Tape<float>& tape, Tape<float>::Id x_id,
                                const QuantizedWeights& q,
                                std::map<std::string, Tape<float>::Id>& leaves,
                                std::map<std::string, std::vector<Tape<float>::Id>>& branch_leaves) {
    const ModelGraph& g = net_.graph;
    std::vector<Tape<float>::Id> out(g.layers.size());
    auto id_of = [&](int idx) { return idx < 0 ? x_id : out[static_cast<std::size_t>(idx)]; };
    for (int i = 0; i < static_cast<int>(g.layers.size()); ++i) {
      const LayerSpec& l = g.layers[static_cast<std::size_t>(i)];
      const Tape<float>::Id in = id_of(l.inputs[0]);
      switch (l.kind) {
        case LayerKind::Conv: {
          const ConvGeom geom{l.stride, l.pad};
          auto qit = q.branches.find(l.name);
          if (qit != q.branches.end()) {
            std::vector<Tape<float>::Id>& ids = branch_leaves[l.name];
            Tape<float>::Id acc = -1;
            for (const TernaryTensor& b : qit->second) {
              const Tape<float>::Id w_id = tape.leaf(dequantize<float>(b));
              ids.push_back(w_id);
              const Tape<float>::Id y = tape.conv2d(in, w_id, geom);
              acc = acc < 0 ? y : tape.add(acc, y);
            }
            out[static_cast<std::size_t>(i)] = acc;
          } else {
            const std::string wname = l.name + ".w";
            const Tape<float>::Id w_id = tape.leaf(net_.params.at(wname));
            leaves[wname] = w_id;
            out[static_cast<std::size_t>(i)] = tape.conv2d(in, w_id, geom);
          }
          break;
        }
        case LayerKind::Dense: {
          std::optional<Tape<float>::Id> b_id;
          if (l.bias) {
            const std::string bname = l.name + ".b";
            b_id = tape.leaf(net_.params.at(bname));
            leaves[bname] = *b_id;
          }
          auto qit = q.branches.find(l.name);
          if (qit != q.branches.end()) {
            std::vector<Tape<float>::Id>& ids = branch_leaves[l.name];
            Tape<float>::Id acc = -1;
            for (std::size_t k = 0; k < qit->second.size(); ++k) {
              const Tape<float>::Id w_id = tape.leaf(dequantize<float>(qit->second[k]));
              ids.push_back(w_id);
              // bias joins through the first branch only
              const Tape<float>::Id y =
                  tape.dense(in, w_id, k == 0 ? b_id : std::optional<Tape<float>::Id>());
              acc = acc < 0 ? y : tape.add(acc, y);
            }
            out[static_cast<std::size_t>(i)] = acc;
          } else {
            const std::string wname = l.name + ".w";
            const Tape<float>::Id w_id = tape.leaf(net_.params.at(wname));
            leaves[wname] = w_id;
            out[static_cast<std::size_t>(i)] = tape.dense(in, w_id, b_id);
          }
          break;
        }
        case LayerKind::BatchNorm: {
          BatchNormState<float>& bn = net_.bn.at(l.name);
          const Tape<float>::Id g_id = tape.leaf(bn.gamma);
          const Tape<float>::Id b_id = tape.leaf(bn.beta);
          leaves[l.name + ".gamma"] = g_id;
          leaves[l.name + ".beta"] = b_id;
          out[static_cast<std::size_t>(i)] = tape.batchnorm(in, g_id, b_id, bn, true);
          break;
        }
        case LayerKind::Relu:
          out[static_cast<std::size_t>(i)] = tape.relu(in);
          break;
        case LayerKind::MaxPool:
          out[static_cast<std::size_t>(i)] = tape.max_pool(in, l.pool);
          break;
        case LayerKind::AvgPool:
          out[static_cast<std::size_t>(i)] = tape.avg_pool(in, l.pool);
          break;
        case LayerKind::Add:
          out[static_cast<std::size_t>(i)] = tape.add(id_of(l.inputs[0]), id_of(l.inputs[1]));
          break;
        case LayerKind::SubsamplePad:
          out[static_cast<std::size_t>(i)] = tape.subsample_pad(in, l.ss_stride, l.ss_out_c);
          break;
        case LayerKind::Flatten:
          out[static_cast<std::size_t>(i)] = tape.flatten(in);
          break;
      }
    }
    return out.back();
  }

  // One optimizer update for one named parameter. Weight decay touches conv
  // and dense weights only.
  void apply_grad(const std::string& name, const Tensor<float>& g, double lr) {
    Tensor<float>* target = nullptr;
    auto pit = net_.params.find(name);
    if (pit != net_.params.end()) {
      target = &pit->second;
    } else {
      // batch norm parameter: "<layer>.gamma" or "<layer>.beta"
      const std::size_t dot = name.rfind('.');
      const std::string layer = name.substr(0, dot);
      const std::string field = name.substr(dot + 1);
      BatchNormState<float>& bn = net_.bn.at(layer);
      target = field == "gamma" ? &bn.gamma : &bn.beta;
    }
    const bool is_weight = name.size() > 2 && name.substr(name.size() - 2) == ".w";
    const double wd = is_weight ? cfg_.weight_decay : 0.0;
    if (cfg_.optimizer == "sgd") {
      sgd_step(*target, g, sgd_[name], lr, cfg_.momentum, wd, name);
    } else {
      adam_step(*target, g, adam_[name], lr, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps, wd,
                name);
    }
  }

  Network net_;
  TrainConfig cfg_;
  MilestoneSchedule schedule_;
  QuantizedWeights frozen_;  // statistics for non-ics modes
  std::map<std::string, SgdState<float>> sgd_;
  std::map<std::string, AdamState<float>> adam_;
  long step_ = 0;
};

}  // namespace tern
