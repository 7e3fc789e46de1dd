// Copyright (c) 2026, The ugcvqa Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "support/conv_oracle.hpp"
#include "support/gradcheck.hpp"
#include "ugcvqa/error.hpp"
#include "ugcvqa/nr_features.hpp"

using namespace ugcvqa;

namespace {

void randomize(BottleneckParams<double>& p, uint64_t seed) {
  uint64_t s = seed;
  p.for_each_param([&](Param<double>& prm) {
    const bool is_scale = prm.name.find("scale") != std::string::npos;
    prm.value = gradcheck::random_tensor(prm.value.shape(), ++s, 0.5);
    if (is_scale) {
      for (auto& v : prm.value.values()) v += 1.0;
    }
  });
}

void randomize(StaircaseParams<double>& p, uint64_t seed) {
  for (auto& chain : p.hops) {
    for (auto& hop : chain) randomize(hop, seed += 100);
  }
}

Tensor<double> bottleneck_oracle(const Tensor<double>& x, BottleneckParams<double>& p) {
  auto y = oracle::affine(oracle::conv(x, p.conv_a.value, 1, 0), p.scale_a.value,
                          p.shift_a.value, true);
  y = oracle::affine(oracle::conv(y, p.conv_b.value, 2, 1), p.scale_b.value, p.shift_b.value,
                     true);
  return oracle::affine(oracle::conv(y, p.conv_c.value, 1, 0), p.scale_c.value,
                        p.shift_c.value, false);
}

void zero_grads(StaircaseParams<double>& p) {
  p.for_each_param([](Param<double>& x) { x.zero_grad(); });
}

}  // namespace

TEST(Bottleneck, ShapeAlgebraAndChannels) {
  BottleneckParams<double> p("hop", 8);
  EXPECT_EQ(p.conv_a.value.shape(), (Shape{2, 8, 1, 1}));
  EXPECT_EQ(p.conv_b.value.shape(), (Shape{2, 2, 3, 3}));
  EXPECT_EQ(p.conv_c.value.shape(), (Shape{16, 2, 1, 1}));
  const auto y = bottleneck_downscale(ag::constant(Tensor<double>(Shape{8, 4, 4})), p);
  EXPECT_EQ(y.shape(), (Shape{16, 2, 2}));
  EXPECT_THROW(BottleneckParams<double>("bad", 6), ShapeError);
}

TEST(Bottleneck, ZeroInputZeroShiftGivesZero) {
  BottleneckParams<double> p("hop", 8);
  randomize(p, 3);
  for (Param<double>* s : {&p.shift_a, &p.shift_b, &p.shift_c}) s->value.fill(0.0);
  const auto y = bottleneck_downscale(ag::constant(Tensor<double>(Shape{8, 4, 4})), p);
  for (double v : y.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Bottleneck, MatchesDirectConvolutionOracle) {
  BottleneckParams<double> p("hop", 4);
  randomize(p, 7);
  const auto x = gradcheck::random_tensor(Shape{4, 4, 4}, 1);
  const auto got = bottleneck_downscale(ag::constant(x), p).value();
  const auto want = bottleneck_oracle(x, p);
  ASSERT_EQ(got.shape(), want.shape());
  for (int64_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Bottleneck, RejectsOddOrMismatchedInput) {
  BottleneckParams<double> p("hop", 4);
  EXPECT_THROW(bottleneck_downscale(ag::constant(Tensor<double>(Shape{4, 3, 4})), p), ShapeError);
  EXPECT_THROW(bottleneck_downscale(ag::constant(Tensor<double>(Shape{8, 4, 4})), p), ShapeError);
}

TEST(Staircase, ParameterGridIsUnshared) {
  StaircaseParams<double> p({256, 512, 1024, 2048});
  ASSERT_EQ(p.hops.size(), 3u);
  EXPECT_EQ(p.hops[0].size(), 3u);
  EXPECT_EQ(p.hops[1].size(), 2u);
  EXPECT_EQ(p.hops[2].size(), 1u);
  EXPECT_EQ(p.hop_count(), 6u);
  EXPECT_EQ(p.hops[0][1].in_channels(), 512);
  EXPECT_EQ(p.hops[1][0].in_channels(), 512);
  std::set<std::string> names;
  size_t count = 0;
  p.for_each_param([&](Param<double>& x) {
    names.insert(x.name);
    ++count;
  });
  EXPECT_EQ(names.size(), count);
  EXPECT_EQ(count, 6u * 9u);
}

TEST(Staircase, SingleStageIsIdentity) {
  StaircaseParams<double> p({8});
  const auto x = gradcheck::random_tensor(Shape{8, 2, 2}, 4);
  const std::vector<ag::Var<double>> stages = {ag::constant(x)};
  EXPECT_EQ(staircase_fuse<double>(stages, p).value(), x);
}

TEST(Staircase, ZeroPyramidZeroShiftsGivesZero) {
  auto p = StaircaseParams<double>::random({4, 8, 16}, 2);
  const std::vector<ag::Var<double>> stages = {ag::constant(Tensor<double>(Shape{4, 8, 8})),
                                               ag::constant(Tensor<double>(Shape{8, 4, 4})),
                                               ag::constant(Tensor<double>(Shape{16, 2, 2}))};
  const Tensor<double> fused = staircase_fuse<double>(stages, p).value();
  for (double v : fused.values()) EXPECT_EQ(v, 0.0);
}

TEST(Staircase, MatchesCompositionalOracle) {
  StaircaseParams<double> p({4, 8, 16});
  randomize(p, 11);
  const std::vector<Tensor<double>> xs = {gradcheck::random_tensor(Shape{4, 8, 8}, 1),
                                          gradcheck::random_tensor(Shape{8, 4, 4}, 2),
                                          gradcheck::random_tensor(Shape{16, 2, 2}, 3)};
  std::vector<ag::Var<double>> stages;
  for (const auto& x : xs) stages.push_back(ag::constant(x));
  const auto got = staircase_fuse<double>(stages, p).value();

  Tensor<double> want = xs[2];
  for (size_t i = 0; i < 2; ++i) {
    Tensor<double> carried = xs[i];
    for (auto& hop : p.hops[i]) carried = bottleneck_oracle(carried, hop);
    want += carried;
  }
  ASSERT_EQ(got.shape(), (Shape{16, 2, 2}));
  for (int64_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want[i], 1e-11);
}

TEST(Staircase, RejectsBrokenPyramids) {
  StaircaseParams<double> p({4, 8});
  const std::vector<ag::Var<double>> wrong_res = {ag::constant(Tensor<double>(Shape{4, 4, 4})),
                                                  ag::constant(Tensor<double>(Shape{8, 4, 4}))};
  EXPECT_THROW(staircase_fuse<double>(wrong_res, p), ShapeError);
  const std::vector<ag::Var<double>> three = {ag::constant(Tensor<double>(Shape{4, 8, 8})),
                                              ag::constant(Tensor<double>(Shape{8, 4, 4})),
                                              ag::constant(Tensor<double>(Shape{16, 2, 2}))};
  EXPECT_THROW(staircase_fuse<double>(three, p), ShapeError);
  EXPECT_THROW(staircase_fuse<double>(std::vector<ag::Var<double>>{}, p), ShapeError);
}

TEST(Staircase, GradientMatchesFiniteDifferences) {
  StaircaseParams<double> p({4, 8});
  randomize(p, 5);
  gradcheck::Input f1{gradcheck::random_tensor(Shape{4, 2, 2}, 1)};
  gradcheck::Input f2{gradcheck::random_tensor(Shape{8, 1, 1}, 2)};
  std::vector<gradcheck::Target> targets = {f1.target(), f2.target()};
  p.for_each_param([&](Param<double>& x) { targets.push_back(gradcheck::target(x)); });
  const auto r = gradcheck::check(
      [&] {
        const std::vector<ag::Var<double>> stages = {f1.leaf(), f2.leaf()};
        return staircase_fuse<double>(stages, p);
      },
      targets, [&] { zero_grads(p); });
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(Staircase, ThreeStageGradientMatchesFiniteDifferences) {
  StaircaseParams<double> p({4, 8, 16});
  randomize(p, 9);
  gradcheck::Input f1{gradcheck::random_tensor(Shape{4, 4, 4}, 1)};
  gradcheck::Input f2{gradcheck::random_tensor(Shape{8, 2, 2}, 2)};
  gradcheck::Input f3{gradcheck::random_tensor(Shape{16, 1, 1}, 3)};
  std::vector<gradcheck::Target> targets = {f1.target(), f2.target(), f3.target()};
  p.for_each_param([&](Param<double>& x) { targets.push_back(gradcheck::target(x)); });
  const auto r = gradcheck::check(
      [&] {
        const std::vector<ag::Var<double>> stages = {f1.leaf(), f2.leaf(), f3.leaf()};
        return staircase_fuse<double>(stages, p);
      },
      targets, [&] { zero_grads(p); });
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(GlobalPoolStats, HandValues) {
  Tensor<double> x(Shape{2, 2, 2}, std::vector<double>{2, 2, 2, 2, 1, -1, -1, 1});
  const auto f = global_pool_stats(ag::constant(x)).value();
  EXPECT_EQ(f.numel(), 4);
  EXPECT_EQ(f[0], 2.0);
  EXPECT_EQ(f[1], 0.0);
  EXPECT_EQ(f[2], std::sqrt(kStdPoolEps));
  EXPECT_EQ(f[3], 1.0);
}

TEST(GlobalPoolStats, LengthIsTwiceChannels) {
  const auto f = global_pool_stats(ag::constant(Tensor<float>(Shape{2048, 14, 14}))).value();
  EXPECT_EQ(f.numel(), 4096);
}

TEST(GlobalPoolStats, GradientMatchesFiniteDifferences) {
  gradcheck::Input x{gradcheck::random_tensor(Shape{3, 4, 4}, 6)};
  const auto r = gradcheck::check([&] { return global_pool_stats(x.leaf()); }, {x.target()}, [] {});
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(GlobalPoolStats, FlooredChannelPassesOnlyMeanGradient) {
  gradcheck::Input x{Tensor<double>(Shape{1, 2, 2}, 5.0)};
  auto y = global_pool_stats(x.leaf());
  ag::backward(y, Tensor<double>(Shape{2}, std::vector<double>{1.0, 1.0}));
  for (double g : x.var.grad().values()) EXPECT_EQ(g, 0.25);
}
