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

#include <gtest/gtest.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "tern/common.hpp"
#include "tern/dataset.hpp"

namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    dir_ = fs::temp_directory_path() / ("tern_ds_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter_++));
    fs::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string dir() const { return dir_.string(); }

 private:
  fs::path dir_;
  static int counter_;
};
int TempDir::counter_ = 0;

void put_u32_be(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

// Tiny idx pair: `count` 2x3 images with pixel value = sample index, labels
// cycling 0..9.
void write_idx_pair(const TempDir& td, const std::string& img_name, const std::string& lbl_name,
                    int count) {
  std::vector<std::uint8_t> img;
  put_u32_be(img, 0x00000803);
  put_u32_be(img, static_cast<std::uint32_t>(count));
  put_u32_be(img, 2);
  put_u32_be(img, 3);
  for (int i = 0; i < count; ++i)
    for (int p = 0; p < 6; ++p) img.push_back(static_cast<std::uint8_t>(i % 251));
  tern::write_file_bytes(td.path(img_name), img);

  std::vector<std::uint8_t> lbl;
  put_u32_be(lbl, 0x00000801);
  put_u32_be(lbl, static_cast<std::uint32_t>(count));
  for (int i = 0; i < count; ++i) lbl.push_back(static_cast<std::uint8_t>(i % 10));
  tern::write_file_bytes(td.path(lbl_name), lbl);
}

TEST(Synthetic, DeterministicPerSeedAndShaped) {
  tern::SyntheticSpec sp;
  sp.classes = 4;
  sp.train_per_class = 30;
  sp.test_per_class = 10;
  auto [tr1, te1] = tern::make_synthetic(sp);
  auto [tr2, te2] = tern::make_synthetic(sp);
  EXPECT_EQ(tr1.values, tr2.values);
  EXPECT_EQ(tr1.labels, tr2.labels);
  EXPECT_EQ(te1.values, te2.values);
  EXPECT_EQ(tr1.size(), 120);
  EXPECT_EQ(te1.size(), 40);
  EXPECT_EQ(tr1.chw, (tern::Shape{1, 8, 8}));
  EXPECT_EQ(tr1.num_classes, 4);

  sp.seed = 1234;
  auto [tr3, te3] = tern::make_synthetic(sp);
  EXPECT_NE(tr1.values, tr3.values);
}

TEST(Synthetic, BalancedLabels) {
  tern::SyntheticSpec sp;
  sp.classes = 5;
  sp.train_per_class = 20;
  sp.test_per_class = 8;
  auto [tr, te] = tern::make_synthetic(sp);
  std::vector<int> count(5, 0);
  for (int l : tr.labels) count[static_cast<std::size_t>(l)]++;
  for (int c : count) EXPECT_EQ(c, 20);
  std::vector<int> tcount(5, 0);
  for (int l : te.labels) tcount[static_cast<std::size_t>(l)]++;
  for (int c : tcount) EXPECT_EQ(c, 8);
}

TEST(Synthetic, TrainAndTestDrawDistinctNoise) {
  tern::SyntheticSpec sp;
  sp.classes = 2;
  sp.train_per_class = 10;
  sp.test_per_class = 10;
  auto [tr, te] = tern::make_synthetic(sp);
  EXPECT_NE(tr.values, te.values);
}

TEST(Slice, SplitsWithoutCopyingWrongRows) {
  tern::SyntheticSpec sp;
  sp.classes = 3;
  sp.train_per_class = 10;
  sp.test_per_class = 2;
  auto [tr, te] = tern::make_synthetic(sp);
  auto head = tern::slice(tr, 0, 10);
  auto tail = tern::slice(tr, 10, tr.size());
  EXPECT_EQ(head.size(), 10);
  EXPECT_EQ(tail.size(), 20);
  EXPECT_EQ(head.labels[0], tr.labels[0]);
  EXPECT_EQ(tail.labels[0], tr.labels[10]);
  const std::size_t n = tr.sample_numel();
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_EQ(head.values[i], tr.values[i]);
    EXPECT_EQ(tail.values[i], tr.values[10 * n + i]);
  }
  EXPECT_THROW(tern::slice(tr, 5, 3), tern::ConfigError);
  EXPECT_THROW(tern::slice(tr, 0, 1000), tern::ConfigError);
}

TEST(Batch, GathersRowsAndLabels) {
  tern::SyntheticSpec sp;
  sp.classes = 3;
  sp.train_per_class = 5;
  sp.test_per_class = 2;
  auto [tr, te] = tern::make_synthetic(sp);
  tern::BatchOptions opt;
  auto [x, y] = tern::make_batch(tr, {3, 0, 7}, opt, nullptr);
  EXPECT_EQ(x.shape, (tern::Shape{3, 1, 8, 8}));
  ASSERT_EQ(y.size(), 3u);
  EXPECT_EQ(y[0], tr.labels[3]);
  EXPECT_EQ(y[1], tr.labels[0]);
  EXPECT_EQ(y[2], tr.labels[7]);
  const std::size_t n = tr.sample_numel();
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(x.data[i], tr.values[3 * n + i]);
}

TEST(Batch, AugmentationIsSeededAndBounded) {
  tern::SyntheticSpec sp;
  sp.train_per_class = 6;
  sp.test_per_class = 2;
  auto [tr, te] = tern::make_synthetic(sp);
  tern::BatchOptions opt;
  opt.augment = true;
  opt.crop_pad = 2;
  tern::Rng r1(77), r2(77), r3(78);
  auto [x1, y1] = tern::make_batch(tr, {0, 1, 2, 3}, opt, &r1);
  auto [x2, y2] = tern::make_batch(tr, {0, 1, 2, 3}, opt, &r2);
  auto [x3, y3] = tern::make_batch(tr, {0, 1, 2, 3}, opt, &r3);
  EXPECT_EQ(x1.data, x2.data);
  EXPECT_NE(x1.data, x3.data);
  for (float v : x1.data) EXPECT_TRUE(std::isfinite(v));
}

TEST(Mnist, LoadsIdxPairs) {
  TempDir td;
  write_idx_pair(td, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", 20);
  write_idx_pair(td, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", 10);
  tern::Dataset tr = tern::load_mnist(td.dir(), true);
  tern::Dataset te = tern::load_mnist(td.dir(), false);
  EXPECT_EQ(tr.size(), 20);
  EXPECT_EQ(te.size(), 10);
  EXPECT_EQ(tr.chw, (tern::Shape{1, 2, 3}));
  EXPECT_EQ(tr.num_classes, 10);
  EXPECT_EQ(tr.labels[7], 7);
  // pixel 9 of sample 9 normalizes to ((9/255)-mean)/std
  const tern::Normalization nz = tern::mnist_normalization();
  const float want = static_cast<float>(((9.0 / 255.0) - nz.mean[0]) / nz.stdev[0]);
  EXPECT_NEAR(tr.values[9 * 6 + 0], want, 1e-5);
}

TEST(Mnist, RejectsBadMagicAndTruncation) {
  TempDir td;
  write_idx_pair(td, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", 5);
  // corrupt the image magic
  auto bytes = tern::read_file_bytes(td.path("train-images-idx3-ubyte"));
  bytes[3] = 0x07;
  tern::write_file_bytes(td.path("train-images-idx3-ubyte"), bytes);
  EXPECT_THROW(tern::load_mnist(td.dir(), true), tern::ParseError);

  // rebuild, then truncate the payload
  write_idx_pair(td, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", 5);
  bytes = tern::read_file_bytes(td.path("train-images-idx3-ubyte"));
  bytes.resize(bytes.size() - 3);
  tern::write_file_bytes(td.path("train-images-idx3-ubyte"), bytes);
  EXPECT_THROW(tern::load_mnist(td.dir(), true), tern::ParseError);
}

TEST(Mnist, RejectsCountMismatchBetweenImagesAndLabels) {
  TempDir td;
  write_idx_pair(td, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", 5);
  std::vector<std::uint8_t> lbl;
  put_u32_be(lbl, 0x00000801);
  put_u32_be(lbl, 4);
  for (int i = 0; i < 4; ++i) lbl.push_back(0);
  tern::write_file_bytes(td.path("train-labels-idx1-ubyte"), lbl);
  EXPECT_THROW(tern::load_mnist(td.dir(), true), tern::ParseError);
}

TEST(Mnist, MissingFileIsAnIoError) {
  TempDir td;
  EXPECT_THROW(tern::load_mnist(td.dir(), true), tern::IoError);
}

// 3073-byte records: label byte then 3x32x32 pixels.
void write_cifar_batch(const std::string& path, int count, std::uint8_t label_base) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(static_cast<std::size_t>(count) * 3073);
  for (int i = 0; i < count; ++i) {
    bytes.push_back(static_cast<std::uint8_t>((label_base + i) % 10));
    for (int p = 0; p < 3072; ++p)
      bytes.push_back(static_cast<std::uint8_t>((i + p) % 256));
  }
  tern::write_file_bytes(path, bytes);
}

TEST(Cifar, LoadsAllFiveTrainingBatches) {
  TempDir td;
  for (int b = 1; b <= 5; ++b)
    write_cifar_batch(td.path("data_batch_" + std::to_string(b) + ".bin"), 4,
                      static_cast<std::uint8_t>(b));
  write_cifar_batch(td.path("test_batch.bin"), 6, 0);
  tern::Dataset tr = tern::load_cifar10(td.dir(), true);
  tern::Dataset te = tern::load_cifar10(td.dir(), false);
  EXPECT_EQ(tr.size(), 20);
  EXPECT_EQ(te.size(), 6);
  EXPECT_EQ(tr.chw, (tern::Shape{3, 32, 32}));
  EXPECT_EQ(tr.labels[0], 1);   // first record of batch 1
  EXPECT_EQ(tr.labels[4], 2);   // first record of batch 2
  EXPECT_EQ(te.labels[3], 3);
}

TEST(Cifar, RejectsPartialRecords) {
  TempDir td;
  for (int b = 1; b <= 5; ++b)
    write_cifar_batch(td.path("data_batch_" + std::to_string(b) + ".bin"), 2, 0);
  auto bytes = tern::read_file_bytes(td.path("data_batch_3.bin"));
  bytes.resize(bytes.size() - 100);
  tern::write_file_bytes(td.path("data_batch_3.bin"), bytes);
  EXPECT_THROW(tern::load_cifar10(td.dir(), true), tern::ParseError);
}

TEST(Cifar, RejectsLabelOutOfRange) {
  TempDir td;
  for (int b = 1; b <= 5; ++b)
    write_cifar_batch(td.path("data_batch_" + std::to_string(b) + ".bin"), 2, 0);
  auto bytes = tern::read_file_bytes(td.path("data_batch_2.bin"));
  bytes[0] = 11;
  tern::write_file_bytes(td.path("data_batch_2.bin"), bytes);
  try {
    tern::load_cifar10(td.dir(), true);
    FAIL() << "expected ParseError";
  } catch (const tern::ParseError& e) {
    // the report names the offending offset
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
}

}  // namespace
