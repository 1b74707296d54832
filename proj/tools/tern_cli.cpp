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

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tern/tern.hpp"

namespace {

using tern::Config;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string arch, mode, beta, first_last, out, init, model;
  std::optional<int> tex;
};

// Flags beat config-file keys; both end up in the config object.
Config resolve_config(const CommonArgs& a) {
  Config cfg;
  if (!a.config_path.empty()) cfg = Config::from_file(a.config_path);
  for (const std::string& ov : a.overrides) {
    auto [k, v] = Config::split_override(ov);
    cfg.set(k, v);
  }
  if (!a.arch.empty()) cfg.set("arch", a.arch);
  if (!a.mode.empty()) cfg.set("mode", a.mode);
  if (!a.beta.empty()) cfg.set("beta", a.beta);
  if (a.tex) cfg.set("tex", std::to_string(*a.tex));
  if (!a.first_last.empty()) cfg.set("first_last", a.first_last);
  if (!a.init.empty()) cfg.set("init", a.init);
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& a, bool seed_required) {
  cmd->add_option("--config", a.config_path, "key=value config file");
  auto* seed_opt = cmd->add_option(
      "--seed", [&a](const std::vector<std::string>& v) {
        a.seed = std::stoull(v.at(0));
        return true;
      },
      "rng seed (decides init, shuffles, augmentation)");
  if (seed_required) seed_opt->required();
  cmd->add_option("--arch", a.arch, "model architecture")
      ->check(CLI::IsMember(
          {"lenet", "cnn8", "resnet20", "resnet32", "resnet44", "resnet56", "resnet18"}));
  cmd->add_option("--mode", a.mode, "training/quantization regime")
      ->check(CLI::IsMember({"fp", "tw", "tw-ics", "tw-ft", "tw-ics-ft", "tw-ics-ft-rel"}));
  cmd->add_option("--beta", a.beta, "threshold fraction(s), comma separated");
  cmd->add_option("--tex", a.tex, "expansion branch count");
  cmd->add_option("--first-last", a.first_last, "keep first/last layer fp or ternarize them")
      ->check(CLI::IsMember({"fp", "tern"}));
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--init", a.init, "checkpoint to initialize from");
  cmd->add_option("overrides", a.overrides, "config overrides as key=value");
}

struct LoadedData {
  tern::Dataset train, val, test;
};

LoadedData load_data(const Config& cfg) {
  const std::string kind = cfg.get_str("dataset", "synthetic");
  tern::Dataset train, test;
  if (kind == "synthetic") {
    tern::SyntheticSpec sp;
    sp.classes = static_cast<int>(cfg.get_int("synth.classes", sp.classes));
    sp.channels = static_cast<int>(cfg.get_int("synth.channels", sp.channels));
    sp.height = static_cast<int>(cfg.get_int("synth.height", sp.height));
    sp.width = static_cast<int>(cfg.get_int("synth.width", sp.width));
    sp.components = static_cast<int>(cfg.get_int("synth.components", sp.components));
    sp.train_per_class = static_cast<int>(cfg.get_int("synth.train_per_class", sp.train_per_class));
    sp.test_per_class = static_cast<int>(cfg.get_int("synth.test_per_class", sp.test_per_class));
    sp.separation = cfg.get_double("synth.separation", sp.separation);
    sp.noise = cfg.get_double("synth.noise", sp.noise);
    sp.seed = static_cast<std::uint64_t>(cfg.get_int("synth.seed", static_cast<long>(sp.seed)));
    auto [tr, te] = tern::make_synthetic(sp);
    train = std::move(tr);
    test = std::move(te);
  } else if (kind == "cifar10") {
    const std::string dir = cfg.require_str("data_dir");
    train = tern::load_cifar10(dir, true);
    test = tern::load_cifar10(dir, false);
  } else if (kind == "mnist") {
    const std::string dir = cfg.require_str("data_dir");
    train = tern::load_mnist(dir, true);
    test = tern::load_mnist(dir, false);
  } else {
    throw tern::ConfigError("unknown dataset kind '" + kind + "'");
  }
  LoadedData out;
  const double val_fraction = cfg.get_double("val_fraction", 0.1);
  if (val_fraction < 0.0 || val_fraction > 0.5)
    throw tern::ConfigError("val_fraction must lie in [0, 0.5]");
  const int val_n = static_cast<int>(val_fraction * train.size());
  if (val_n > 0) {
    out.val = tern::slice(train, 0, val_n);
    out.train = tern::slice(train, val_n, train.size());
  } else {
    // no held-out split: validate on the test split
    out.val = test;
    out.train = std::move(train);
  }
  out.test = std::move(test);
  return out;
}

// Input geometry and class count implied by the dataset settings, without
// touching any data files. Lets export and analyze share the config files the
// training flows use.
tern::Dataset dataset_meta(const Config& cfg) {
  tern::Dataset meta;
  const std::string kind = cfg.get_str("dataset", "synthetic");
  if (kind == "synthetic") {
    tern::SyntheticSpec sp;
    meta.num_classes = static_cast<int>(cfg.get_int("synth.classes", sp.classes));
    meta.chw = {static_cast<int>(cfg.get_int("synth.channels", sp.channels)),
                static_cast<int>(cfg.get_int("synth.height", sp.height)),
                static_cast<int>(cfg.get_int("synth.width", sp.width))};
  } else if (kind == "cifar10") {
    meta.num_classes = 10;
    meta.chw = {3, 32, 32};
  } else if (kind == "mnist") {
    meta.num_classes = 10;
    meta.chw = {1, 28, 28};
  } else {
    throw tern::ConfigError("unknown dataset kind '" + kind + "'");
  }
  // flows that skip data loading still accept the full data section
  cfg.get_str("data_dir", "");
  cfg.get_double("val_fraction", 0.1);
  for (const char* k :
       {"synth.components", "synth.train_per_class", "synth.test_per_class", "synth.seed"})
    cfg.get_int(k, 0);
  for (const char* k : {"synth.separation", "synth.noise"}) cfg.get_double(k, 0.0);
  return meta;
}

tern::ModelGraph graph_from_config(const Config& cfg, const tern::Dataset& ds,
                                   bool apply_quant_policy) {
  const std::string arch = cfg.get_str("arch", "cnn8");
  const int classes = static_cast<int>(cfg.get_int("num_classes", ds.num_classes));
  tern::ModelGraph g = tern::build_model(arch, classes, ds.chw);
  if (apply_quant_policy) {
    const tern::AblationMode mode = tern::parse_mode(cfg.get_str("mode", "fp"));
    const std::vector<double> betas = cfg.get_double_list("beta");
    const int tex = static_cast<int>(cfg.get_int("tex", 2));
    const bool first_last_fp = cfg.get_str("first_last", "tern") == "fp";
    tern::apply_mode_policy(g, mode, betas, tex, first_last_fp);
  }
  return g;
}

tern::TrainConfig train_config_from(const Config& cfg, std::uint64_t seed) {
  tern::TrainConfig tc;
  tc.mode = tern::parse_mode(cfg.get_str("mode", "fp"));
  tc.optimizer = cfg.get_str("optimizer", "sgd");
  tc.lr = cfg.get_double("lr", 0.1);
  tc.momentum = cfg.get_double("momentum", 0.9);
  tc.weight_decay = cfg.get_double("weight_decay", 1e-4);
  tc.adam_beta1 = cfg.get_double("adam_beta1", 0.9);
  tc.adam_beta2 = cfg.get_double("adam_beta2", 0.999);
  tc.adam_eps = cfg.get_double("adam_eps", 1e-8);
  tc.milestones = cfg.get_milestones("milestones");
  tc.epochs = static_cast<int>(cfg.get_int("epochs", 10));
  tc.batch_size = static_cast<int>(cfg.get_int("batch_size", 32));
  tc.seed = seed;
  tc.augment = cfg.get_bool("augment", false);
  tc.crop_pad = static_cast<int>(cfg.get_int("crop_pad", 4));
  tc.bn_stats_update = cfg.get_bool("bn_stats_update", true);
  tc.eval_batch = static_cast<int>(cfg.get_int("eval_batch", 256));
  return tc;
}

void ensure_out_dir(const std::string& out) {
  if (out.empty()) throw tern::ConfigError("--out directory is required");
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw tern::IoError("cannot create output directory '" + out + "': " + ec.message());
}

std::string fmt_acc(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

// Keys that only some flows read; touching them here keeps reject_unknown
// focused on genuinely unknown keys. One config file drives every
// subcommand, so eval must not stumble over training-only settings.
void touch_shared_keys(const Config& cfg) {
  cfg.get_str("mode", "");
  cfg.get_double_list("beta");
  cfg.get_int("tex", 2);
  cfg.get_str("first_last", "");
  cfg.get_str("init", "");
  cfg.get_str("rel_init", "fp");  // documented switch: expansion fine-tune starts
                                  // from the checkpoint named by `init` either way
  for (const char* k : {"optimizer", "milestones"}) cfg.get_str(k, "");
  for (const char* k : {"lr", "momentum", "weight_decay", "adam_beta1", "adam_beta2", "adam_eps"})
    cfg.get_double(k, 0.0);
  for (const char* k : {"epochs", "batch_size", "crop_pad", "eval_batch"}) cfg.get_int(k, 0);
  for (const char* k : {"augment", "bn_stats_update"}) cfg.get_bool(k, false);
}

int cmd_train(const CommonArgs& args) {
  Config cfg = resolve_config(args);
  if (cfg.get_str("mode", "fp") != "fp")
    throw tern::ConfigError("train runs full precision; use ternarize for quantized modes");
  LoadedData data = load_data(cfg);
  tern::ModelGraph graph = graph_from_config(cfg, data.train, false);
  tern::Network net = tern::make_network(std::move(graph));

  const std::string init = cfg.get_str("init", "");
  tern::Rng rng(*args.seed);
  if (init.empty()) {
    tern::init_weights(net, rng);
  } else {
    tern::bind_model_file(net, tern::load_model_file(init), nullptr);
  }

  tern::TrainConfig tc = train_config_from(cfg, *args.seed);
  tc.mode = tern::AblationMode::Fp;
  ensure_out_dir(args.out);
  touch_shared_keys(cfg);
  cfg.reject_unknown();

  tern::Trainer trainer(std::move(net), tc);
  const std::vector<tern::EpochStats> history = trainer.fit(data.train, data.val);
  tern::write_history_csv(args.out + "/history.csv", history);
  tern::save_model_file(args.out + "/model_fp.tern", tern::snapshot_fp(trainer.network()));

  double top5 = 0.0;
  const double top1 = trainer.evaluate(data.test, false, &top5);
  std::cout << "test top1 " << fmt_acc(top1) << "\n";
  std::cout << "test top5 " << fmt_acc(top5) << "\n";
  return 0;
}

int cmd_ternarize(const CommonArgs& args) {
  Config cfg = resolve_config(args);
  const tern::AblationMode mode = tern::parse_mode(cfg.get_str("mode", ""));
  if (!tern::mode_quantizes(mode))
    throw tern::ConfigError("ternarize needs a quantized mode (tw, tw-ics, tw-ft, tw-ics-ft, "
                            "tw-ics-ft-rel)");
  LoadedData data = load_data(cfg);
  tern::ModelGraph graph = graph_from_config(cfg, data.train, true);
  tern::Network net = tern::make_network(std::move(graph));

  const std::string init = cfg.get_str("init", "");
  if (tern::mode_wants_pretrained(mode) && init.empty())
    throw tern::ConfigError("mode '" + tern::mode_name(mode) +
                            "' fine-tunes a pretrained model; pass --init");
  tern::Rng rng(*args.seed);
  if (init.empty()) {
    tern::init_weights(net, rng);
  } else {
    tern::bind_model_file(net, tern::load_model_file(init), nullptr);
  }

  tern::TrainConfig tc = train_config_from(cfg, *args.seed);
  tc.mode = mode;
  ensure_out_dir(args.out);
  touch_shared_keys(cfg);
  cfg.reject_unknown();

  tern::Trainer trainer(std::move(net), tc);
  const std::vector<tern::EpochStats> history = trainer.fit(data.train, data.val);
  tern::write_history_csv(args.out + "/history.csv", history);
  tern::save_model_file(args.out + "/model_master.tern", tern::snapshot_fp(trainer.network()));
  const tern::QuantizedWeights quant = trainer.quantized_view();
  tern::save_model_file(args.out + "/model_ternary.tern",
                        tern::snapshot_quantized(trainer.network(), quant));

  double top5 = 0.0;
  const double top1 = trainer.evaluate(data.test, true, &top5);
  std::cout << "test top1 " << fmt_acc(top1) << "\n";
  std::cout << "test top5 " << fmt_acc(top5) << "\n";
  return 0;
}

// Returns the network bound to the file plus quantized views when the file
// carries codes (or when the flags ask for requantization of a master file).
struct BoundCheckpoint {
  tern::Network net;
  tern::QuantizedWeights quant;
  bool quantized = false;
};

BoundCheckpoint bind_checkpoint(const Config& cfg, const tern::Dataset& ds,
                                const std::string& model_path, const std::string& weights_mode) {
  const tern::ModelFile mf = tern::load_model_file(model_path);
  bool has_packed = false;
  for (const auto& e : mf.entries) has_packed |= e.tag != tern::ModelEntry::Fp;

  BoundCheckpoint out;
  const bool want_ternary = weights_mode == "ternary" || (weights_mode == "auto" && has_packed);
  tern::ModelGraph graph = graph_from_config(cfg, ds, want_ternary && !has_packed);
  out.net = tern::make_network(std::move(graph));
  if (has_packed) {
    tern::bind_model_file(out.net, mf, &out.quant);
    if (weights_mode == "fp")
      throw tern::ConfigError("'" + model_path +
                              "' holds packed codes; full-precision weights are not in it");
    out.quantized = true;
  } else {
    tern::bind_model_file(out.net, mf, nullptr);
    if (want_ternary) {
      // fresh statistics from the master weights, exactly like export
      out.quant = tern::quantize_network(out.net);
      out.quantized = true;
    }
  }
  return out;
}

int cmd_eval(const CommonArgs& args, const std::string& weights_mode, bool fold) {
  Config cfg = resolve_config(args);
  if (args.model.empty()) throw tern::ConfigError("--model is required");
  LoadedData data = load_data(cfg);
  BoundCheckpoint bc = bind_checkpoint(cfg, data.test, args.model, weights_mode);
  touch_shared_keys(cfg);
  cfg.reject_unknown();
  if (fold && bc.quantized) {
    const int folded = tern::fold_scales(bc.net, bc.quant);
    std::cerr << "tern: folded " << folded << " layer scale(s) into norm layers\n";
  }
  double top5 = 0.0;
  const double top1 = tern::evaluate_model(bc.net, bc.quantized ? &bc.quant : nullptr, data.test,
                                           static_cast<int>(cfg.get_int("eval_batch", 256)),
                                           &top5);
  std::cout << "test top1 " << fmt_acc(top1) << "\n";
  std::cout << "test top5 " << fmt_acc(top5) << "\n";
  return 0;
}

int cmd_export(const CommonArgs& args) {
  Config cfg = resolve_config(args);
  if (args.model.empty()) throw tern::ConfigError("--model is required");
  const tern::ModelFile mf = tern::load_model_file(args.model);
  for (const auto& e : mf.entries)
    if (e.tag != tern::ModelEntry::Fp)
      throw tern::ConfigError("'" + args.model + "' already holds packed codes");
  if (cfg.get_str("mode", "") == "")
    cfg.set("mode", "tw-ics-ft");  // plain ternary policy unless the caller says otherwise

  // repacking weights needs no data files; the dataset section still names
  // the input geometry and class count
  const std::string arch = cfg.get_str("arch", "cnn8");
  const tern::AblationMode mode = tern::parse_mode(cfg.get_str("mode", ""));
  if (!tern::mode_quantizes(mode))
    throw tern::ConfigError("export needs a quantized mode to pick the code layout");
  const tern::Dataset meta = dataset_meta(cfg);
  tern::ModelGraph graph = tern::build_model(
      arch, static_cast<int>(cfg.get_int("num_classes", meta.num_classes)),
      {static_cast<int>(cfg.get_int("input_c", meta.chw[0])),
       static_cast<int>(cfg.get_int("input_h", meta.chw[1])),
       static_cast<int>(cfg.get_int("input_w", meta.chw[2]))});
  tern::apply_mode_policy(graph, mode, cfg.get_double_list("beta"),
                          static_cast<int>(cfg.get_int("tex", 2)),
                          cfg.get_str("first_last", "tern") == "fp");
  tern::Network net = tern::make_network(std::move(graph));
  tern::bind_model_file(net, mf, nullptr);
  touch_shared_keys(cfg);
  cfg.reject_unknown();

  const tern::QuantizedWeights quant = tern::quantize_network(net);
  ensure_out_dir(args.out);
  const std::string path = args.out + "/model_ternary.tern";
  tern::save_model_file(path, tern::snapshot_quantized(net, quant));
  std::cout << "wrote " << path << "\n";
  return 0;
}

long parse_named_count(const std::vector<std::string>& kvs, const std::string& want) {
  for (const std::string& kv : kvs) {
    auto [k, v] = Config::split_override(kv);
    if (k == want) {
      try {
        std::size_t used = 0;
        const long n = std::stol(v, &used);
        if (used != v.size() || n < 0) throw std::invalid_argument(v);
        return n;
      } catch (const std::exception&) {
        throw tern::ConfigError("--fpga " + want + ": expected a count >= 0, got '" + v + "'");
      }
    }
  }
  throw tern::ConfigError("--fpga needs " + want + "=<count>");
}

int cmd_analyze(const CommonArgs& args, const std::vector<std::string>& fpga_kvs) {
  Config cfg = resolve_config(args);

  if (!fpga_kvs.empty()) {
    const long fp_macs = parse_named_count(fpga_kvs, "fp_macs");
    const long tern_macs = parse_named_count(fpga_kvs, "tern_macs");
    tern::FpgaCostModel model;
    model.adder_lut = cfg.get_int("fpga.adder_lut", model.adder_lut);
    model.mult_lut = cfg.get_int("fpga.mult_lut", model.mult_lut);
    model.mult_dsp = cfg.get_int("fpga.mult_dsp", model.mult_dsp);
    model.available_lut = cfg.get_int("fpga.available_lut", model.available_lut);
    model.available_dsp = cfg.get_int("fpga.available_dsp", model.available_dsp);
    touch_shared_keys(cfg);
    cfg.reject_unknown();
    const tern::FpgaCost c = tern::fpga_cost(fp_macs, tern_macs, model);
    std::cout << "weight_type mul_macs add_macs lut_required lut_available dsp_required"
                 " dsp_available\n";
    std::cout << "fp " << c.fp_macs << " " << c.fp_macs << " " << c.fp_lut << " "
              << c.available_lut << " " << c.fp_dsp << " " << c.available_dsp << "\n";
    std::cout << "ternary 0 " << c.tern_macs << " " << c.tern_lut << " " << c.available_lut
              << " " << c.tern_dsp << " " << c.available_dsp << "\n";
    if (!args.out.empty()) {
      ensure_out_dir(args.out);
      std::ostringstream os;
      os << "weight_type,mul_macs,add_macs,lut_required,lut_available,dsp_required,"
            "dsp_available\n";
      os << "fp," << c.fp_macs << ',' << c.fp_macs << ',' << c.fp_lut << ',' << c.available_lut
         << ',' << c.fp_dsp << ',' << c.available_dsp << '\n';
      os << "ternary,0," << c.tern_macs << ',' << c.tern_lut << ',' << c.available_lut << ",0,"
         << c.available_dsp << '\n';
      const std::string s = os.str();
      tern::write_file_bytes(args.out + "/fpga.csv",
                             reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
    }
    return 0;
  }

  if (args.model.empty())
    throw tern::ConfigError("analyze needs --model (or --fpga fp_macs=... tern_macs=...)");
  // model reports run on the input geometry the dataset section implies
  tern::Dataset shaped = dataset_meta(cfg);
  BoundCheckpoint bc = bind_checkpoint(cfg, shaped, args.model, "auto");
  touch_shared_keys(cfg);
  cfg.reject_unknown();
  if (!bc.quantized)
    throw tern::ConfigError("'" + args.model +
                            "' holds no codes and no quantized mode was given; pass --mode/--beta"
                            " to quantize the master weights for analysis");

  const tern::DensityReport dens = tern::density_report(bc.quant);
  const tern::CompressionReport comp = tern::compression_report(bc.net, bc.quant);
  const tern::CostReport ops = tern::op_count_report(bc.net, &bc.quant, 1);

  std::cout << std::fixed << std::setprecision(6);
  std::cout << "average density " << dens.average << "\n";
  std::cout << std::setprecision(4);
  std::cout << "compression weights_only " << comp.weight_rate << "x\n";
  std::cout << "compression full_checkpoint " << comp.full_rate << "x\n";
  std::cout << "compression theoretical " << comp.theoretical_rate << "x\n";
  std::cout << "fp_ops mul " << ops.fp_mul << " add " << ops.fp_add << "\n";
  std::cout << "tern_ops addsub " << std::setprecision(1) << ops.tern_addsub << " mul "
            << ops.tern_mul << "\n";

  if (!args.out.empty()) {
    ensure_out_dir(args.out);
    {
      std::ostringstream os;
      os << "layer,params,nonzero,density\n";
      os << std::fixed << std::setprecision(6);
      for (const auto& row : dens.rows)
        os << row.name << ',' << row.params << ',' << row.nonzero << ',' << row.density << '\n';
      os << "average,,," << dens.average << '\n';
      const std::string s = os.str();
      tern::write_file_bytes(args.out + "/density.csv",
                             reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
    }
    {
      std::ostringstream os;
      os << "layer,macs,out_elems,branches,density,fp_mul,fp_add,tern_addsub,tern_mul\n";
      os << std::fixed << std::setprecision(6);
      for (const auto& l : ops.layers)
        os << l.name << ',' << l.macs << ',' << l.out_elems << ',' << l.branches << ','
           << l.density << ',' << l.fp_mul << ',' << l.fp_add << ',' << std::setprecision(1)
           << l.tern_addsub << std::setprecision(6) << ',' << l.tern_mul << '\n';
      const std::string s = os.str();
      tern::write_file_bytes(args.out + "/ops.csv",
                             reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
    }
    {
      std::ostringstream os;
      os << "fp_weight_bytes,quant_weight_bytes,weight_rate,fp_full_bytes,quant_full_bytes,"
            "full_rate,theoretical_rate\n";
      os << comp.fp_weight_bytes << ',' << comp.quant_weight_bytes << ',' << std::fixed
         << std::setprecision(4) << comp.weight_rate << ',' << comp.fp_full_bytes << ','
         << comp.quant_full_bytes << ',' << comp.full_rate << ',' << comp.theoretical_rate
         << '\n';
      const std::string s = os.str();
      tern::write_file_bytes(args.out + "/compression.csv",
                             reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ternary weight network toolkit"};
  app.require_subcommand(1);

  CommonArgs train_args, tern_args, eval_args, analyze_args, export_args;
  std::string eval_weights = "auto";
  bool eval_fold = false;
  std::vector<std::string> fpga_kvs;

  CLI::App* train_cmd = app.add_subcommand("train", "full-precision training");
  add_common(train_cmd, train_args, true);

  CLI::App* tern_cmd = app.add_subcommand("ternarize", "quantized training / fine-tuning");
  add_common(tern_cmd, tern_args, true);

  CLI::App* eval_cmd = app.add_subcommand("eval", "accuracy of a saved model");
  add_common(eval_cmd, eval_args, false);
  eval_cmd->add_option("--model", eval_args.model, "model file")->required();
  eval_cmd->add_option("--weights", eval_weights, "fp, ternary, or auto (follow the file)")
      ->check(CLI::IsMember({"fp", "ternary", "auto"}));
  eval_cmd->add_flag("--fold", eval_fold, "fold layer scales into following norm layers");

  CLI::App* analyze_cmd = app.add_subcommand("analyze", "density/compression/cost reports");
  add_common(analyze_cmd, analyze_args, false);
  analyze_cmd->add_option("--model", analyze_args.model, "model file");
  analyze_cmd->add_option("--fpga", fpga_kvs, "hardware table: fp_macs=<n> tern_macs=<n>")
      ->expected(2);

  CLI::App* export_cmd = app.add_subcommand("export", "pack a master checkpoint into codes");
  add_common(export_cmd, export_args, false);
  export_cmd->add_option("--model", export_args.model, "master (full-precision) checkpoint")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return static_cast<int>(tern::ErrorCategory::Config);
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (tern_cmd->parsed()) return cmd_ternarize(tern_args);
    if (eval_cmd->parsed()) return cmd_eval(eval_args, eval_weights, eval_fold);
    if (analyze_cmd->parsed()) return cmd_analyze(analyze_args, fpga_kvs);
    if (export_cmd->parsed()) return cmd_export(export_args);
  } catch (const tern::Error& e) {
    std::cerr << "tern: error [" << tern::error_category_name(e.category()) << "]: " << e.what()
              << "\n";
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::cerr << "tern: error [internal]: " << e.what() << "\n";
    return static_cast<int>(tern::ErrorCategory::Internal);
  }
  return 0;
}
