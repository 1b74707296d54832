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

// Gradient checks run in double precision with a central step of 1e-3 and a
// relative tolerance of 1e-4 (absolute floor 1e-6 for near-zero entries).

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "oracles.hpp"
#include "tern/autodiff.hpp"
#include "tern/common.hpp"
#include "tern/kernels.hpp"
#include "tern/tensor.hpp"

namespace {

using D = tern::Tensor<double>;

constexpr double kStep = 1e-3;
constexpr double kRelTol = 1e-4;
constexpr double kAbsFloor = 1e-6;

void expect_grads_close(const std::vector<double>& got, const std::vector<double>& want,
                        const char* what) {
  ASSERT_EQ(got.size(), want.size()) << what;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double denom = std::max(std::fabs(want[i]), kAbsFloor);
    ASSERT_LT(std::fabs(got[i] - want[i]) / denom, kRelTol) << what << " index " << i << " got "
                                                            << got[i] << " want " << want[i];
  }
}

std::vector<double> random_vec(tern::Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal() * scale;
  return v;
}

TEST(Autodiff, ConvForwardMatchesNaiveLoops) {
  tern::Rng rng(101);
  struct Geom {
    int n, c, h, w, o, k, stride, pad;
  };
  const Geom cases[] = {
      {1, 1, 5, 5, 1, 3, 1, 0}, {2, 3, 7, 6, 4, 3, 1, 1}, {1, 2, 8, 8, 3, 3, 2, 1},
      {2, 4, 9, 9, 2, 5, 2, 2}, {1, 1, 4, 4, 2, 1, 1, 0}, {3, 2, 6, 5, 5, 3, 3, 1},
  };
  for (const auto& g : cases) {
    auto xv = random_vec(rng, static_cast<std::size_t>(g.n) * g.c * g.h * g.w);
    auto kv = random_vec(rng, static_cast<std::size_t>(g.o) * g.c * g.k * g.k);
    auto x = D::from_data({g.n, g.c, g.h, g.w}, xv);
    auto w = D::from_data({g.o, g.c, g.k, g.k}, kv);
    auto y = tern::conv2d_forward(x, w, tern::ConvGeom{g.stride, g.pad});
    int oh = 0, ow = 0;
    auto want =
        oracle::conv2d(xv, g.n, g.c, g.h, g.w, kv, g.o, g.k, g.k, g.stride, g.pad, &oh, &ow);
    ASSERT_EQ(y.shape, (tern::Shape{g.n, g.o, oh, ow}));
    ASSERT_LT(oracle::max_rel_err(std::vector<double>(y.data.begin(), y.data.end()), want), 1e-10);
  }
}

TEST(Autodiff, DenseForwardMatchesNaiveLoops) {
  tern::Rng rng(102);
  auto xv = random_vec(rng, 3 * 7);
  auto wv = random_vec(rng, 7 * 5);
  auto bv = random_vec(rng, 5);
  auto y = tern::dense_forward(D::from_data({3, 7}, xv), D::from_data({7, 5}, wv), nullptr);
  auto want = oracle::dense(xv, 3, 7, wv, 5, nullptr);
  ASSERT_LT(oracle::max_rel_err(std::vector<double>(y.data.begin(), y.data.end()), want), 1e-12);

  auto b = D::from_data({5}, bv);
  auto yb = tern::dense_forward(D::from_data({3, 7}, xv), D::from_data({7, 5}, wv), &b);
  auto wantb = oracle::dense(xv, 3, 7, wv, 5, &bv);
  ASSERT_LT(oracle::max_rel_err(std::vector<double>(yb.data.begin(), yb.data.end()), wantb),
            1e-12);
}

// Builds loss = sum(projection .* op(inputs)) on a fresh tape, returns the
// loss and fills grads for the requested leaves.
struct TapeProbe {
  std::function<double(const std::vector<std::vector<double>>&, std::vector<std::vector<double>>*)>
      run;
};

void check_against_fd(const TapeProbe& probe, const std::vector<std::vector<double>>& at,
                      const char* what) {
  std::vector<std::vector<double>> grads;
  probe.run(at, &grads);
  ASSERT_EQ(grads.size(), at.size()) << what;
  for (std::size_t which = 0; which < at.size(); ++which) {
    auto f = [&](const std::vector<double>& v) {
      auto inputs = at;
      inputs[which] = v;
      return probe.run(inputs, nullptr);
    };
    auto fd = oracle::finite_diff(f, at[which], kStep);
    expect_grads_close(grads[which], fd, what);
  }
}

TEST(Autodiff, ConvBackward) {
  tern::Rng rng(103);
  const int n = 2, c = 2, h = 6, w = 5, o = 3, k = 3, stride = 2, pad = 1;
  auto xv = random_vec(rng, static_cast<std::size_t>(n) * c * h * w);
  auto wv = random_vec(rng, static_cast<std::size_t>(o) * c * k * k, 0.5);
  const int oh = tern::conv_out_dim(h, k, stride, pad);
  const int ow = tern::conv_out_dim(w, k, stride, pad);
  auto proj = random_vec(rng, static_cast<std::size_t>(n) * o * oh * ow);

  TapeProbe probe;
  probe.run = [&](const std::vector<std::vector<double>>& in,
                  std::vector<std::vector<double>>* grads) {
    tern::Tape<double> t;
    auto x = t.leaf(D::from_data({n, c, h, w}, in[0]));
    auto wt = t.leaf(D::from_data({o, c, k, k}, in[1]));
    auto p = t.leaf(D::from_data({n, o, oh, ow}, proj));
    auto loss = t.sum(t.mul(t.conv2d(x, wt, tern::ConvGeom{stride, pad}), p));
    const double lv = t.value(loss).data[0];
    if (grads) {
      t.backward(loss);
      *grads = {t.grad(x).data, t.grad(wt).data};
    }
    return lv;
  };
  check_against_fd(probe, {xv, wv}, "conv");
}

TEST(Autodiff, DenseBackwardWithBias) {
  tern::Rng rng(104);
  const int n = 3, g = 6, f = 4;
  auto xv = random_vec(rng, static_cast<std::size_t>(n) * g);
  auto wv = random_vec(rng, static_cast<std::size_t>(g) * f, 0.5);
  auto bv = random_vec(rng, f);
  auto proj = random_vec(rng, static_cast<std::size_t>(n) * f);

  TapeProbe probe;
  probe.run = [&](const std::vector<std::vector<double>>& in,
                  std::vector<std::vector<double>>* grads) {
    tern::Tape<double> t;
    auto x = t.leaf(D::from_data({n, g}, in[0]));
    auto wt = t.leaf(D::from_data({g, f}, in[1]));
    auto b = t.leaf(D::from_data({f}, in[2]));
    auto p = t.leaf(D::from_data({n, f}, proj));
    auto loss = t.sum(t.mul(t.dense(x, wt, b), p));
    const double lv = t.value(loss).data[0];
    if (grads) {
      t.backward(loss);
      *grads = {t.grad(x).data, t.grad(wt).data, t.grad(b).data};
    }
    return lv;
  };
  check_against_fd(probe, {xv, wv, bv}, "dense");
}

TEST(Autodiff, BatchNormBackwardRank4) {
  tern::Rng rng(105);
  const int n = 3, c = 2, h = 4, w = 4;
  auto xv = random_vec(rng, static_cast<std::size_t>(n) * c * h * w);
  std::vector<double> gv = {1.3, 0.7};
  std::vector<double> bv = {0.1, -0.2};
  auto proj = random_vec(rng, xv.size());

  TapeProbe probe;
  probe.run = [&](const std::vector<std::vector<double>>& in,
                  std::vector<std::vector<double>>* grads) {
    tern::Tape<double> t;
    tern::BatchNormState<double> bn(c);
    auto x = t.leaf(D::from_data({n, c, h, w}, in[0]));
    auto ga = t.leaf(D::from_data({c}, in[1]));
    auto be = t.leaf(D::from_data({c}, in[2]));
    auto p = t.leaf(D::from_data({n, c, h, w}, proj));
    auto loss = t.sum(t.mul(t.batchnorm(x, ga, be, bn, true), p));
    const double lv = t.value(loss).data[0];
    if (grads) {
      t.backward(loss);
      *grads = {t.grad(x).data, t.grad(ga).data, t.grad(be).data};
    }
    return lv;
  };
  check_against_fd(probe, {xv, gv, bv}, "batchnorm4");
}

TEST(Autodiff, BatchNormBackwardRank2) {
  tern::Rng rng(106);
  const int n = 5, f = 3;
  auto xv = random_vec(rng, static_cast<std::size_t>(n) * f);
  std::vector<double> gv = {0.9, 1.1, 1.4};
  std::vector<double> bv = {0.0, 0.3, -0.1};
  auto proj = random_vec(rng, xv.size());

  TapeProbe probe;
  probe.run = [&](const std::vector<std::vector<double>>& in,
                  std::vector<std::vector<double>>* grads) {
    tern::Tape<double> t;
    tern::BatchNormState<double> bn(f);
    auto x = t.leaf(D::from_data({n, f}, in[0]));
    auto ga = t.leaf(D::from_data({f}, in[1]));
    auto be = t.leaf(D::from_data({f}, in[2]));
    auto p = t.leaf(D::from_data({n, f}, proj));
    auto loss = t.sum(t.mul(t.batchnorm(x, ga, be, bn, true), p));
    const double lv = t.value(loss).data[0];
    if (grads) {
      t.backward(loss);
      *grads = {t.grad(x).data, t.grad(ga).data, t.grad(be).data};
    }
    return lv;
  };
  check_against_fd(probe, {xv, gv, bv}, "batchnorm2");
}

TEST(Autodiff, ReluAndPoolBackward) {
  tern::Rng rng(107);
  const int n = 2, c = 2, h = 6, w = 6;
  // keep values away from the relu kink and max-pool ties
  std::vector<double> xv(static_cast<std::size_t>(n) * c * h * w);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    double v = rng.normal();
    if (std::fabs(v) < 0.05) v = v < 0 ? v - 0.1 : v + 0.1;
    xv[i] = v;
  }
  const tern::PoolGeom pg{2, 2, 2, 0};
  auto proj = random_vec(rng, static_cast<std::size_t>(n) * c * (h / 2) * (w / 2));

  for (const bool use_max : {true, false}) {
    TapeProbe probe;
    probe.run = [&](const std::vector<std::vector<double>>& in,
                    std::vector<std::vector<double>>* grads) {
      tern::Tape<double> t;
      auto x = t.leaf(D::from_data({n, c, h, w}, in[0]));
      auto act = t.relu(x);
      auto pooled = use_max ? t.max_pool(act, pg) : t.avg_pool(act, pg);
      auto p = t.leaf(D::from_data({n, c, h / 2, w / 2}, proj));
      auto loss = t.sum(t.mul(pooled, p));
      const double lv = t.value(loss).data[0];
      if (grads) {
        t.backward(loss);
        *grads = {t.grad(x).data};
      }
      return lv;
    };
    check_against_fd(probe, {xv}, use_max ? "relu+maxpool" : "relu+avgpool");
  }
}

TEST(Autodiff, SubsamplePadBackward) {
  tern::Rng rng(108);
  const int n = 2, c = 3, h = 6, w = 6, out_c = 5, stride = 2;
  auto xv = random_vec(rng, static_cast<std::size_t>(n) * c * h * w);
  auto proj = random_vec(rng, static_cast<std::size_t>(n) * out_c * (h / 2) * (w / 2));

  TapeProbe probe;
  probe.run = [&](const std::vector<std::vector<double>>& in,
                  std::vector<std::vector<double>>* grads) {
    tern::Tape<double> t;
    auto x = t.leaf(D::from_data({n, c, h, w}, in[0]));
    auto y = t.subsample_pad(x, stride, out_c);
    auto p = t.leaf(D::from_data({n, out_c, h / 2, w / 2}, proj));
    auto loss = t.sum(t.mul(y, p));
    const double lv = t.value(loss).data[0];
    if (grads) {
      t.backward(loss);
      *grads = {t.grad(x).data};
    }
    return lv;
  };
  check_against_fd(probe, {xv}, "subsample_pad");
}

TEST(Autodiff, SoftmaxXentForwardAndBackward) {
  tern::Rng rng(109);
  const int n = 4, k = 5;
  auto lv = random_vec(rng, static_cast<std::size_t>(n) * k, 2.0);
  const std::vector<int> targets = {1, 4, 0, 2};

  // forward against a direct log-sum-exp evaluation
  double want_loss = 0.0;
  for (int b = 0; b < n; ++b) {
    double mx = lv[static_cast<std::size_t>(b) * k];
    for (int j = 1; j < k; ++j) mx = std::max(mx, lv[static_cast<std::size_t>(b) * k + j]);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(lv[static_cast<std::size_t>(b) * k + j] - mx);
    want_loss += -(lv[static_cast<std::size_t>(b) * k + targets[b]] - mx - std::log(z));
  }
  want_loss /= n;

  TapeProbe probe;
  probe.run = [&](const std::vector<std::vector<double>>& in,
                  std::vector<std::vector<double>>* grads) {
    tern::Tape<double> t;
    auto logits = t.leaf(D::from_data({n, k}, in[0]));
    auto loss = t.softmax_xent(logits, targets);
    const double out = t.value(loss).data[0];
    if (grads) {
      t.backward(loss);
      *grads = {t.grad(logits).data};
    }
    return out;
  };
  std::vector<std::vector<double>> grads;
  const double got_loss = probe.run({lv}, &grads);
  EXPECT_NEAR(got_loss, want_loss, 1e-10);
  check_against_fd(probe, {lv}, "softmax_xent");
}

TEST(Autodiff, CompositeNetworkGradients) {
  // conv -> bn -> relu -> maxpool -> flatten -> dense(+bias) -> xent,
  // all leaves checked in one pass
  tern::Rng rng(110);
  const int n = 2, c = 2, h = 6, w = 6, o = 3, k = 3;
  auto xv = random_vec(rng, static_cast<std::size_t>(n) * c * h * w);
  auto cw = random_vec(rng, static_cast<std::size_t>(o) * c * k * k, 0.5);
  std::vector<double> gv = {1.2, 0.8, 1.0};
  std::vector<double> bev = {0.05, -0.05, 0.0};
  const int flat = o * 3 * 3;
  auto dw = random_vec(rng, static_cast<std::size_t>(flat) * 4, 0.3);
  auto db = random_vec(rng, 4, 0.1);
  const std::vector<int> targets = {2, 0};

  TapeProbe probe;
  probe.run = [&](const std::vector<std::vector<double>>& in,
                  std::vector<std::vector<double>>* grads) {
    tern::Tape<double> t;
    tern::BatchNormState<double> bn(o);
    auto x = t.leaf(D::from_data({n, c, h, w}, in[0]));
    auto wc = t.leaf(D::from_data({o, c, k, k}, in[1]));
    auto ga = t.leaf(D::from_data({o}, in[2]));
    auto be = t.leaf(D::from_data({o}, in[3]));
    auto wd = t.leaf(D::from_data({flat, 4}, in[4]));
    auto bd = t.leaf(D::from_data({4}, in[5]));
    auto y = t.conv2d(x, wc, tern::ConvGeom{1, 1});
    y = t.batchnorm(y, ga, be, bn, true);
    y = t.relu(y);
    y = t.max_pool(y, tern::PoolGeom{2, 2, 2, 0});
    y = t.flatten(y);
    y = t.dense(y, wd, bd);
    auto loss = t.softmax_xent(y, targets);
    const double out = t.value(loss).data[0];
    if (grads) {
      t.backward(loss);
      *grads = {t.grad(x).data,  t.grad(wc).data, t.grad(ga).data,
                t.grad(be).data, t.grad(wd).data, t.grad(bd).data};
    }
    return out;
  };
  check_against_fd(probe, {xv, cw, gv, bev, dw, db}, "composite");
}

TEST(Autodiff, ResidualAddAndScale) {
  tern::Rng rng(111);
  auto av = random_vec(rng, 12);
  auto bv = random_vec(rng, 12);
  auto proj = random_vec(rng, 12);

  TapeProbe probe;
  probe.run = [&](const std::vector<std::vector<double>>& in,
                  std::vector<std::vector<double>>* grads) {
    tern::Tape<double> t;
    auto a = t.leaf(D::from_data({3, 4}, in[0]));
    auto b = t.leaf(D::from_data({3, 4}, in[1]));
    auto p = t.leaf(D::from_data({3, 4}, proj));
    auto y = t.add(t.scale(a, 2.5), b);
    auto loss = t.sum(t.mul(y, p));
    const double lv = t.value(loss).data[0];
    if (grads) {
      t.backward(loss);
      *grads = {t.grad(a).data, t.grad(b).data};
    }
    return lv;
  };
  check_against_fd(probe, {av, bv}, "add+scale");
}

TEST(Autodiff, FanOutAccumulatesGradients) {
  // y = sum(x .* x) so dy/dx = 2x; the same node feeds mul twice
  tern::Tape<double> t;
  auto x = t.leaf(D::from_data({3}, {1.0, -2.0, 0.5}));
  auto loss = t.sum(t.mul(x, x));
  t.backward(loss);
  const auto& g = t.grad(x);
  EXPECT_NEAR(g.data[0], 2.0, 1e-12);
  EXPECT_NEAR(g.data[1], -4.0, 1e-12);
  EXPECT_NEAR(g.data[2], 1.0, 1e-12);
}

TEST(Autodiff, TapeGuards) {
  tern::Tape<double> t;
  auto x = t.leaf(D::from_data({2}, {1.0, 2.0}));
  auto nonscalar = t.relu(x);
  EXPECT_THROW(t.backward(nonscalar), tern::Error);

  tern::Tape<double> t2;
  auto y = t2.leaf(D::from_data({2}, {1.0, 2.0}));
  auto loss = t2.sum(y);
  t2.backward(loss);
  EXPECT_THROW(t2.backward(loss), tern::Error);
}

TEST(Autodiff, EvalModeBatchNormUsesRunningStats) {
  tern::BatchNormState<double> bn(2);
  bn.eps = 0.0;
  bn.running_mean.data = {1.0, -1.0};
  bn.running_var.data = {4.0, 0.25};
  bn.gamma.data = {2.0, 1.0};
  bn.beta.data = {0.5, 0.0};
  auto x = D::from_data({1, 2}, {3.0, 0.0});
  auto y = tern::batchnorm_forward(x, bn, false, nullptr);
  // (3-1)/2 * 2 + 0.5 = 2.5 ; (0+1)/0.5 * 1 = 2
  EXPECT_NEAR(y.data[0], 2.5, 1e-9);
  EXPECT_NEAR(y.data[1], 2.0, 1e-9);
}

TEST(Autodiff, BatchNormTrainTracksRunningStats) {
  tern::BatchNormState<double> bn(1);
  auto x = D::from_data({4, 1}, {1.0, 2.0, 3.0, 4.0});
  tern::BatchNormCache<double> cache;
  tern::batchnorm_forward(x, bn, true, &cache);
  // momentum 0.1: mean 0.9*0 + 0.1*2.5, var uses the unbiased estimate
  EXPECT_NEAR(bn.running_mean.data[0], 0.25, 1e-12);
  const double unbiased = (2.25 + 0.25 + 0.25 + 2.25) / 3.0;
  EXPECT_NEAR(bn.running_var.data[0], 0.9 * 1.0 + 0.1 * unbiased, 1e-12);
}

TEST(Autodiff, BatchNormRejectsSingleSampleTraining) {
  tern::BatchNormState<double> bn(2);
  auto x = D::from_data({1, 2}, {1.0, 2.0});
  EXPECT_THROW(tern::batchnorm_forward(x, bn, true, nullptr), tern::ShapeError);
  EXPECT_NO_THROW(tern::batchnorm_forward(x, bn, false, nullptr));
}

}  // namespace
