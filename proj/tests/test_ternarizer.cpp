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

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "tern/common.hpp"
#include "tern/tensor.hpp"
#include "tern/ternary.hpp"

namespace {

// Frozen reference point, worked out by hand before the quantizer was
// implemented: peak 0.6, threshold 0.12, survivors {0.5, -0.2, -0.6},
// magnitude 1.3/3.
TEST(Ternarize, FrozenReference) {
  auto w = tern::Tensor<double>::from_data({4}, {0.5, -0.2, 0.05, -0.6});
  tern::TernaryTensor t = tern::ternarize(w, 0.2);
  EXPECT_NEAR(t.delta_th, 0.12, 1e-12);
  ASSERT_EQ(t.codes.size(), 4u);
  EXPECT_EQ(t.codes[0], 1);
  EXPECT_EQ(t.codes[1], -1);
  EXPECT_EQ(t.codes[2], 0);
  EXPECT_EQ(t.codes[3], -1);
  EXPECT_NEAR(t.alpha, 1.3 / 3.0, 1e-12);
  EXPECT_NEAR(t.beta, 0.2, 0.0);
}

TEST(Ternarize, BoundaryWeightSurvives) {
  // |w| exactly at the threshold keeps its sign instead of dropping to zero
  auto w = tern::Tensor<double>::from_data({3}, {1.0, 0.25, -0.25});
  tern::TernaryTensor t = tern::ternarize(w, 0.25);
  EXPECT_NEAR(t.delta_th, 0.25, 1e-12);
  EXPECT_EQ(t.codes[1], 1);
  EXPECT_EQ(t.codes[2], -1);
  EXPECT_NEAR(t.alpha, 1.5 / 3.0, 1e-12);
}

TEST(Ternarize, MatchesScalarOracleOnRandomTensors) {
  tern::Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(257));
    std::vector<double> vals(static_cast<std::size_t>(n));
    for (double& v : vals) v = rng.normal() * (0.1 + rng.uniform());
    if (trial % 7 == 0) vals[rng.uniform_int(static_cast<std::uint64_t>(n))] = 0.0;
    const double beta = 0.02 + 0.9 * rng.uniform();

    auto w = tern::Tensor<double>::from_data({n}, vals);
    tern::TernaryTensor got = tern::ternarize(w, beta);
    oracle::TernaryRef want = oracle::ternarize(vals, beta);

    ASSERT_EQ(got.codes.size(), want.codes.size());
    for (std::size_t i = 0; i < want.codes.size(); ++i)
      ASSERT_EQ(static_cast<int>(got.codes[i]), want.codes[i]) << "trial " << trial << " i " << i;
    ASSERT_LT(oracle::rel_err(got.delta_th, want.delta_th), 1e-12) << "trial " << trial;
    if (want.alpha == 0.0)
      ASSERT_EQ(got.alpha, 0.0);
    else
      ASSERT_LT(oracle::rel_err(got.alpha, want.alpha), 1e-12) << "trial " << trial;
  }
}

TEST(Ternarize, CodesAreAlwaysTernary) {
  tern::Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> vals(64);
    for (double& v : vals) v = rng.normal();
    tern::TernaryTensor t =
        tern::ternarize(tern::Tensor<double>::from_data({64}, vals), 0.05 + 0.9 * rng.uniform());
    for (auto c : t.codes) ASSERT_TRUE(c == -1 || c == 0 || c == 1);
  }
}

TEST(Ternarize, ZeroWeightsStayZeroEvenAtZeroThreshold) {
  auto w = tern::Tensor<double>::from_data({4}, {0.0, 0.5, 0.0, -0.5});
  tern::TernaryTensor t = tern::ternarize(w, 1e-9);
  EXPECT_EQ(t.codes[0], 0);
  EXPECT_EQ(t.codes[2], 0);
  EXPECT_EQ(t.codes[1], 1);
  EXPECT_EQ(t.codes[3], -1);
}

TEST(Ternarize, AllZeroTensorWarnsAndYieldsZeroAlpha) {
  auto w = tern::Tensor<double>::from_data({5}, {0, 0, 0, 0, 0});
  tern::TernaryTensor t = tern::ternarize(w, 0.3);
  EXPECT_EQ(t.alpha, 0.0);
  EXPECT_EQ(t.delta_th, 0.0);
  for (auto c : t.codes) EXPECT_EQ(c, 0);
  EXPECT_EQ(t.nonzero_count(), 0u);
}

TEST(Ternarize, AlphaNeverBelowThreshold) {
  // survivors all sit at or above the threshold, so their mean does too
  tern::Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> vals(32);
    for (double& v : vals) v = rng.normal();
    tern::TernaryTensor t =
        tern::ternarize(tern::Tensor<double>::from_data({32}, vals), 0.05 + 0.9 * rng.uniform());
    if (t.nonzero_count() > 0) ASSERT_GE(t.alpha, t.delta_th);
  }
}

TEST(Ternarize, MoreAggressiveBetaNestsZeros) {
  tern::Rng rng(13);
  std::vector<double> vals(128);
  for (double& v : vals) v = rng.normal();
  auto w = tern::Tensor<double>::from_data({128}, vals);
  tern::TernaryTensor lo = tern::ternarize(w, 0.1);
  tern::TernaryTensor hi = tern::ternarize(w, 0.4);
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (lo.codes[i] == 0) ASSERT_EQ(hi.codes[i], 0) << i;
    if (hi.codes[i] != 0) ASSERT_EQ(hi.codes[i], lo.codes[i]) << i;
  }
  EXPECT_LE(hi.nonzero_count(), lo.nonzero_count());
}

TEST(Ternarize, PositiveScaleEquivariance) {
  tern::Rng rng(17);
  std::vector<double> vals(64);
  for (double& v : vals) v = rng.normal();
  auto w = tern::Tensor<double>::from_data({64}, vals);
  std::vector<double> scaled = vals;
  for (double& v : scaled) v *= 4.0;  // power of two keeps the math exact
  auto w4 = tern::Tensor<double>::from_data({64}, scaled);

  tern::TernaryTensor a = tern::ternarize(w, 0.2);
  tern::TernaryTensor b = tern::ternarize(w4, 0.2);
  EXPECT_EQ(a.codes, b.codes);
  EXPECT_NEAR(b.alpha, 4.0 * a.alpha, 1e-12);
  EXPECT_NEAR(b.delta_th, 4.0 * a.delta_th, 1e-12);
}

TEST(Ternarize, BetaDomainIsOpenUnitInterval) {
  auto w = tern::Tensor<double>::from_data({2}, {1.0, -1.0});
  EXPECT_THROW(tern::ternarize(w, 0.0), tern::ConfigError);
  EXPECT_THROW(tern::ternarize(w, 1.0), tern::ConfigError);
  EXPECT_THROW(tern::ternarize(w, -0.2), tern::ConfigError);
  EXPECT_THROW(tern::ternarize(w, 1.7), tern::ConfigError);
  EXPECT_NO_THROW(tern::ternarize(w, 0.999));
  EXPECT_NO_THROW(tern::ternarize(w, 1e-6));
}

TEST(Ternarize, FrozenStatsReuse) {
  auto w = tern::Tensor<double>::from_data({4}, {0.5, -0.2, 0.05, -0.6});
  tern::TernaryTensor first = tern::ternarize(w, 0.2);
  // same codes when re-quantizing different weights against frozen stats
  auto w2 = tern::Tensor<double>::from_data({4}, {0.13, -0.11, 0.9, -0.125});
  tern::TernaryTensor again = tern::ternarize_frozen(w2, first.beta, first.delta_th, first.alpha);
  EXPECT_EQ(again.alpha, first.alpha);
  EXPECT_EQ(again.delta_th, first.delta_th);
  EXPECT_EQ(again.codes[0], 1);   // 0.13 >= 0.12
  EXPECT_EQ(again.codes[1], 0);   // 0.11 < 0.12
  EXPECT_EQ(again.codes[2], 1);
  EXPECT_EQ(again.codes[3], -1);  // 0.125 >= 0.12
}

TEST(Dequantize, ReconstructsAlphaTimesCodes) {
  auto w = tern::Tensor<double>::from_data({4}, {0.5, -0.2, 0.05, -0.6});
  tern::TernaryTensor t = tern::ternarize(w, 0.2);
  auto dq = tern::dequantize<double>(t);
  ASSERT_EQ(dq.numel(), 4u);
  EXPECT_NEAR(dq.data[0], t.alpha, 1e-12);
  EXPECT_NEAR(dq.data[1], -t.alpha, 1e-12);
  EXPECT_EQ(dq.data[2], 0.0);
  EXPECT_NEAR(dq.data[3], -t.alpha, 1e-12);
}

TEST(Ste, PassesInsideUnitIntervalInclusive) {
  auto g = tern::Tensor<double>::from_data({6}, {1, 1, 1, 1, 1, 1});
  auto w = tern::Tensor<double>::from_data(
      {6}, {-1.0, 1.0, 0.0, std::nextafter(1.0, 2.0), -1.0000001, 0.73});
  auto out = tern::ste_backward(g, w);
  EXPECT_EQ(out.data[0], 1.0);  // -1 passes
  EXPECT_EQ(out.data[1], 1.0);  // +1 passes
  EXPECT_EQ(out.data[2], 1.0);
  EXPECT_EQ(out.data[3], 0.0);  // just above 1 blocks
  EXPECT_EQ(out.data[4], 0.0);
  EXPECT_EQ(out.data[5], 1.0);
}

TEST(Ste, MatchesOracleAndIgnoresQuantizerStats) {
  tern::Rng rng(31);
  std::vector<double> gv(100), wv(100);
  for (auto& v : gv) v = rng.normal();
  for (auto& v : wv) v = rng.normal() * 0.8;
  wv[0] = 1.0;
  wv[1] = -1.0;
  wv[2] = 1.0 + 1e-12;
  auto g = tern::Tensor<double>::from_data({100}, gv);
  auto w = tern::Tensor<double>::from_data({100}, wv);
  auto got = tern::ste_backward(g, w);
  auto want = oracle::ste(gv, wv);
  for (std::size_t i = 0; i < want.size(); ++i) ASSERT_EQ(got.data[i], want[i]) << i;
  // the gate is a pure function of the master weights; there is no
  // quantizer-statistics argument to vary in the first place
}

TEST(Ste, ShapeMismatchThrows) {
  auto g = tern::Tensor<double>::from_data({2}, {1, 1});
  auto w = tern::Tensor<double>::from_data({3}, {0, 0, 0});
  EXPECT_THROW(tern::ste_backward(g, w), tern::ShapeError);
}

}  // namespace
