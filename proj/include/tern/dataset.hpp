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
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "tern/tensor.hpp"

namespace tern {

// Labeled images held as already-normalized floats in NCHW order.
struct Dataset {
  Shape chw;
  int num_classes = 0;
  std::vector<float> values;
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
  std::int64_t sample_numel() const {
    return static_cast<std::int64_t>(chw[0]) * chw[1] * chw[2];
  }
  const float* sample(int i) const {
    return values.data() + static_cast<std::size_t>(i) * sample_numel();
  }
};

struct Normalization {
  std::vector<float> mean, stdev;  // one entry per channel
};

// Keeps samples [begin, end) in their current order.
inline Dataset slice(const Dataset& ds, int begin, int end) {
  if (begin < 0 || end > ds.size() || begin > end)
    throw ConfigError("dataset slice [" + std::to_string(begin) + "," + std::to_string(end) +
                      ") out of range for " + std::to_string(ds.size()) + " samples");
  Dataset out;
  out.chw = ds.chw;
  out.num_classes = ds.num_classes;
  const std::int64_t per = ds.sample_numel();
  out.values.assign(ds.values.begin() + begin * per, ds.values.begin() + end * per);
  out.labels.assign(ds.labels.begin() + begin, ds.labels.begin() + end);
  return out;
}

struct BatchOptions {
  bool augment = false;
  int crop_pad = 4;   // zero padding on each side before the random crop
  bool hflip = true;  // random horizontal flip
};

// Assembles one NCHW batch. Augmentation (train split only by contract of the
// caller) pads each side with zeros, crops back to the native size at a random
// offset, and mirrors horizontally with probability one half.
inline std::pair<Tensor<float>, std::vector<int>> make_batch(const Dataset& ds,
                                                             const std::vector<int>& indices,
                                                             const BatchOptions& opt,
                                                             Rng* rng) {
  if (indices.empty()) throw ConfigError("make_batch: empty index list");
  if (opt.augment && !rng) throw ConfigError("make_batch: augmentation needs an rng");
  const int C = ds.chw[0], H = ds.chw[1], W = ds.chw[2];
  Tensor<float> x({static_cast<int>(indices.size()), C, H, W});
  std::vector<int> y(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const int i = indices[b];
    if (i < 0 || i >= ds.size())
      throw ConfigError("make_batch: index " + std::to_string(i) + " out of range");
    y[b] = ds.labels[static_cast<std::size_t>(i)];
    const float* src = ds.sample(i);
    float* dst = &x(static_cast<int>(b), 0, 0, 0);
    if (!opt.augment) {
      std::copy(src, src + ds.sample_numel(), dst);
      continue;
    }
    const int p = opt.crop_pad;
    const int dy = static_cast<int>(rng->uniform_int(static_cast<std::uint64_t>(2 * p + 1))) - p;
    const int dx = static_cast<int>(rng->uniform_int(static_cast<std::uint64_t>(2 * p + 1))) - p;
    const bool flip = opt.hflip && rng->uniform() < 0.5;
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          const int sh = h + dy;
          const int sw = flip ? W - 1 - (w + dx) : w + dx;
          float v = 0.0f;
          if (sh >= 0 && sh < H && sw >= 0 && sw < W)
            v = src[(static_cast<std::int64_t>(c) * H + sh) * W + sw];
          dst[(static_cast<std::int64_t>(c) * H + h) * W + w] = v;
        }
  }
  return {std::move(x), std::move(y)};
}

// ---- CIFAR-10 binary ----
// Five train files / one test file of 10000 records each; a record is one
// label byte followed by 3x32x32 pixels.

inline Normalization cifar10_normalization() {
  return {{0.4914f, 0.4822f, 0.4465f}, {0.2470f, 0.2435f, 0.2616f}};
}

namespace detail {
inline void append_cifar_file(Dataset& ds, const std::string& path, const Normalization& nz) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
  if (bytes.size() % kRecord != 0)
    throw ParseError("'" + path + "': size " + std::to_string(bytes.size()) +
                     " is not a whole number of 3073-byte records (stray bytes at offset " +
                     std::to_string(bytes.size() - bytes.size() % kRecord) + ")");
  const std::size_t records = bytes.size() / kRecord;
  if (records == 0) throw ParseError("'" + path + "': no records");
  for (std::size_t r = 0; r < records; ++r) {
    const std::size_t off = r * kRecord;
    const std::uint8_t label = bytes[off];
    if (label > 9)
      throw ParseError("'" + path + "': label " + std::to_string(label) + " at offset " +
                       std::to_string(off) + " outside [0,9]");
    ds.labels.push_back(label);
    for (int c = 0; c < 3; ++c) {
      const float m = nz.mean[static_cast<std::size_t>(c)];
      const float s = nz.stdev[static_cast<std::size_t>(c)];
      const std::uint8_t* px = bytes.data() + off + 1 + static_cast<std::size_t>(c) * 1024;
      for (int i = 0; i < 1024; ++i)
        ds.values.push_back((static_cast<float>(px[i]) / 255.0f - m) / s);
    }
  }
}
}  // namespace detail

inline Dataset load_cifar10(const std::string& dir, bool train,
                            const Normalization& nz = cifar10_normalization()) {
  Dataset ds;
  ds.chw = {3, 32, 32};
  ds.num_classes = 10;
  if (train) {
    for (int i = 1; i <= 5; ++i)
      detail::append_cifar_file(ds, dir + "/data_batch_" + std::to_string(i) + ".bin", nz);
  } else {
    detail::append_cifar_file(ds, dir + "/test_batch.bin", nz);
  }
  return ds;
}

// ---- MNIST IDX ----
// Big-endian headers as published: images carry magic 0x00000803 and three
// dimension words, labels carry 0x00000801 and one.

namespace detail {
inline std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off,
                          const std::string& path) {
  if (off + 4 > b.size())
    throw ParseError("'" + path + "': truncated header at offset " + std::to_string(off));
  return (static_cast<std::uint32_t>(b[off]) << 24) | (static_cast<std::uint32_t>(b[off + 1]) << 16) |
         (static_cast<std::uint32_t>(b[off + 2]) << 8) | static_cast<std::uint32_t>(b[off + 3]);
}
}  // namespace detail

inline Normalization mnist_normalization() { return {{0.1307f}, {0.3081f}}; }

inline Dataset load_mnist(const std::string& dir, bool train,
                          const Normalization& nz = mnist_normalization()) {
  const std::string img_path = dir + (train ? "/train-images-idx3-ubyte" : "/t10k-images-idx3-ubyte");
  const std::string lbl_path = dir + (train ? "/train-labels-idx1-ubyte" : "/t10k-labels-idx1-ubyte");
  const std::vector<std::uint8_t> img = read_file_bytes(img_path);
  const std::vector<std::uint8_t> lbl = read_file_bytes(lbl_path);

  if (detail::be32(img, 0, img_path) != 0x00000803u)
    throw ParseError("'" + img_path + "': bad magic at offset 0, want 0x00000803");
  if (detail::be32(lbl, 0, lbl_path) != 0x00000801u)
    throw ParseError("'" + lbl_path + "': bad magic at offset 0, want 0x00000801");
  const std::uint32_t n = detail::be32(img, 4, img_path);
  const std::uint32_t rows = detail::be32(img, 8, img_path);
  const std::uint32_t cols = detail::be32(img, 12, img_path);
  const std::uint32_t n_lbl = detail::be32(lbl, 4, lbl_path);
  if (n != n_lbl)
    throw ParseError("image count " + std::to_string(n) + " vs label count " +
                     std::to_string(n_lbl) + " (offset 4)");
  if (img.size() != 16 + static_cast<std::size_t>(n) * rows * cols)
    throw ParseError("'" + img_path + "': payload size " + std::to_string(img.size() - 16) +
                     " does not match header claim at offset 16");
  if (lbl.size() != 8 + static_cast<std::size_t>(n))
    throw ParseError("'" + lbl_path + "': payload size " + std::to_string(lbl.size() - 8) +
                     " does not match header claim at offset 8");

  Dataset ds;
  ds.chw = {1, static_cast<int>(rows), static_cast<int>(cols)};
  ds.num_classes = 10;
  ds.values.reserve(static_cast<std::size_t>(n) * rows * cols);
  ds.labels.reserve(n);
  const float m = nz.mean[0], s = nz.stdev[0];
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint8_t label = lbl[8 + i];
    if (label > 9)
      throw ParseError("'" + lbl_path + "': label " + std::to_string(label) + " at offset " +
                       std::to_string(8 + i) + " outside [0,9]");
    ds.labels.push_back(label);
  }
  for (std::size_t i = 0; i < static_cast<std::size_t>(n) * rows * cols; ++i)
    ds.values.push_back((static_cast<float>(img[16 + i]) / 255.0f - m) / s);
  return ds;
}

// ---- Seeded synthetic task ----
// Gaussian mixture in pixel space: every class owns a few component centers;
// samples are a chosen center plus isotropic noise. Fully determined by the
// seed, so two generations with one seed are identical.

struct SyntheticSpec {
  int classes = 10;
  int channels = 1, height = 8, width = 8;
  int components = 2;      // centers per class
  int train_per_class = 200;
  int test_per_class = 100;
  double separation = 1.0;  // center scale
  double noise = 0.35;      // sample scale around its center
  std::uint64_t seed = 7;
};

namespace detail {
inline Dataset synth_split(const SyntheticSpec& sp, const std::vector<std::vector<float>>& centers,
                           int per_class, Rng& rng) {
  Dataset ds;
  ds.chw = {sp.channels, sp.height, sp.width};
  ds.num_classes = sp.classes;
  const std::int64_t dim = ds.sample_numel();
  const int total = sp.classes * per_class;
  ds.values.resize(static_cast<std::size_t>(total) * dim);
  ds.labels.resize(static_cast<std::size_t>(total));
  for (int c = 0; c < sp.classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      const int row = c * per_class + i;
      const int comp = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(sp.components)));
      const std::vector<float>& center =
          centers[static_cast<std::size_t>(c * sp.components + comp)];
      float* dst = ds.values.data() + static_cast<std::size_t>(row) * dim;
      for (std::int64_t d = 0; d < dim; ++d)
        dst[d] = center[static_cast<std::size_t>(d)] +
                 static_cast<float>(sp.noise * rng.normal());
      ds.labels[static_cast<std::size_t>(row)] = c;
    }
  }
  // deterministic shuffle so class labels are interleaved
  std::vector<int> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  Dataset shuffled;
  shuffled.chw = ds.chw;
  shuffled.num_classes = ds.num_classes;
  shuffled.values.resize(ds.values.size());
  shuffled.labels.resize(ds.labels.size());
  for (int r = 0; r < total; ++r) {
    const int s = order[static_cast<std::size_t>(r)];
    std::copy(ds.sample(s), ds.sample(s) + dim,
              shuffled.values.data() + static_cast<std::size_t>(r) * dim);
    shuffled.labels[static_cast<std::size_t>(r)] = ds.labels[static_cast<std::size_t>(s)];
  }
  return shuffled;
}
}  // namespace detail

inline std::pair<Dataset, Dataset> make_synthetic(const SyntheticSpec& sp) {
  if (sp.classes < 2) throw ConfigError("synthetic: need at least 2 classes");
  if (sp.components < 1) throw ConfigError("synthetic: need at least 1 component per class");
  if (sp.channels < 1 || sp.height < 1 || sp.width < 1)
    throw ConfigError("synthetic: sample dimensions must be positive");
  Rng rng(sp.seed);
  const std::int64_t dim = static_cast<std::int64_t>(sp.channels) * sp.height * sp.width;
  std::vector<std::vector<float>> centers(
      static_cast<std::size_t>(sp.classes) * sp.components);
  for (auto& center : centers) {
    center.resize(static_cast<std::size_t>(dim));
    for (float& v : center) v = static_cast<float>(sp.separation * rng.normal());
  }
  Rng train_rng = rng.fork(1);
  Rng test_rng = rng.fork(2);
  Dataset train = detail::synth_split(sp, centers, sp.train_per_class, train_rng);
  Dataset test = detail::synth_split(sp, centers, sp.test_per_class, test_rng);
  return {std::move(train), std::move(test)};
}

}  // namespace tern
