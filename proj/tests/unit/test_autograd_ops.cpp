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
#include <gtest/gtest.h>

#include "support/conv_oracle.hpp"
#include "support/gradcheck.hpp"
#include "ugcvqa/error.hpp"
#include "ugcvqa/ops.hpp"

using namespace ugcvqa;
using gradcheck::random_tensor;

namespace {

struct ConvCase {
  Shape input;
  Shape weight;
  int stride;
  int padding;
  bool bias;
};

const ConvCase kConvCases[] = {
    {{3, 5, 5}, {4, 3, 3, 3}, 1, 1, true},   {{3, 6, 6}, {2, 3, 3, 3}, 2, 1, false},
    {{4, 4, 4}, {6, 4, 1, 1}, 1, 0, false},  {{4, 5, 5}, {3, 4, 1, 1}, 2, 0, true},
    {{3, 9, 9}, {2, 3, 7, 7}, 2, 3, false},  {{2, 3, 4}, {2, 2, 3, 3}, 1, 0, true},
};

}  // namespace

TEST(Conv2d, MatchesDirectOracle) {
  uint64_t seed = 1;
  for (const auto& c : kConvCases) {
    const auto x = random_tensor(c.input, ++seed);
    const auto w = random_tensor(c.weight, ++seed);
    const auto b = random_tensor(Shape{c.weight[0]}, ++seed);
    const auto got = ops::conv2d(ag::constant(x), ag::constant(w),
                                 c.bias ? ag::constant(b) : ag::Var<double>(),
                                 {c.stride, c.padding})
                         .value();
    const auto want = oracle::conv(x, w, c.stride, c.padding, c.bias ? &b : nullptr);
    ASSERT_EQ(got.shape(), want.shape());
    for (int64_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Conv2d, FloatAgreesWithDouble) {
  const auto x = random_tensor(Shape{3, 8, 8}, 3);
  const auto w = random_tensor(Shape{5, 3, 3, 3}, 4);
  const auto d = ops::conv2d(ag::constant(x), ag::constant(w), {}, {2, 1}).value();
  const auto f = ops::conv2d(ag::constant(x.cast<float>()), ag::constant(w.cast<float>()),
                             {}, {2, 1})
                     .value();
  for (int64_t i = 0; i < d.numel(); ++i) EXPECT_NEAR(f[i], d[i], 1e-5);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  uint64_t seed = 40;
  for (const auto& c : kConvCases) {
    gradcheck::Input x{random_tensor(c.input, ++seed)};
    gradcheck::Input w{random_tensor(c.weight, ++seed)};
    gradcheck::Input b{random_tensor(Shape{c.weight[0]}, ++seed)};
    std::vector<gradcheck::Target> targets = {x.target(), w.target()};
    if (c.bias) targets.push_back(b.target());
    const auto r = gradcheck::check(
        [&] {
          return ops::conv2d(x.leaf(), w.leaf(), c.bias ? b.leaf() : ag::Var<double>(),
                             {c.stride, c.padding});
        },
        targets, [] {});
    EXPECT_LT(r.max_relative_error, 1e-6) << shape_str(c.input) << shape_str(c.weight);
  }
}

TEST(Conv2d, RejectsChannelMismatch) {
  EXPECT_THROW(ops::conv2d(ag::constant(Tensor<double>(Shape{3, 4, 4})),
                           ag::constant(Tensor<double>(Shape{2, 4, 3, 3})), {}, {1, 1}),
               ShapeError);
}

TEST(MaxPool, MatchesOracleAndGradient) {
  const auto x = random_tensor(Shape{2, 7, 6}, 8);
  const auto got = ops::max_pool2d(ag::constant(x), 3, 2, 1).value();
  const auto want = oracle::max_pool(x, 3, 2, 1);
  EXPECT_EQ(got, want);
  gradcheck::Input in{x};
  const auto r = gradcheck::check([&] { return ops::max_pool2d(in.leaf(), 3, 2, 1); },
                                  {in.target()}, [] {});
  EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(ElementwiseOps, NanPropagatesThroughReluAndPooling) {
  Tensor<float> x(Shape{1, 3, 3}, -1.0f);
  x[4] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_TRUE(std::isnan(ops::relu(ag::constant(x)).value()[4]));
  const auto pooled = ops::max_pool2d(ag::constant(x), 3, 1, 0).value();
  EXPECT_TRUE(std::isnan(pooled[0]));
}

TEST(ElementwiseOps, ValuesAndGradients) {
  gradcheck::Input x{random_tensor(Shape{3, 4, 4}, 1)};
  gradcheck::Input y{random_tensor(Shape{3, 4, 4}, 2)};
  gradcheck::Input s{random_tensor(Shape{3}, 3)};
  gradcheck::Input t{random_tensor(Shape{3}, 4)};

  const auto a = ops::channel_affine(ag::constant(x.value), ag::constant(s.value),
                                     ag::constant(t.value))
                     .value();
  EXPECT_DOUBLE_EQ(a.at(2, 1, 3), x.value.at(2, 1, 3) * s.value[2] + t.value[2]);
  const auto rl = ops::relu(ag::constant(x.value)).value();
  for (int64_t i = 0; i < rl.numel(); ++i) EXPECT_EQ(rl[i], std::max(x.value[i], 0.0));

  auto affine = gradcheck::check(
      [&] { return ops::channel_affine(x.leaf(), s.leaf(), t.leaf()); },
      {x.target(), s.target(), t.target()}, [] {});
  EXPECT_LT(affine.max_relative_error, 1e-6);
  auto add = gradcheck::check([&] { return ops::add(x.leaf(), y.leaf()); },
                              {x.target(), y.target()}, [] {});
  EXPECT_LT(add.max_relative_error, 1e-6);
  auto relu = gradcheck::check([&] { return ops::relu(x.leaf()); }, {x.target()}, [] {});
  EXPECT_LT(relu.max_relative_error, 1e-6);
}

TEST(Linear, MatchesMatrixProductAndGradient) {
  gradcheck::Input x{random_tensor(Shape{5}, 1)};
  gradcheck::Input w{random_tensor(Shape{3, 5}, 2)};
  gradcheck::Input b{random_tensor(Shape{3}, 3)};
  const auto y = ops::linear(ag::constant(x.value), ag::constant(w.value), ag::constant(b.value))
                     .value();
  for (int64_t o = 0; o < 3; ++o) {
    double e = b.value[o];
    for (int64_t i = 0; i < 5; ++i) e += w.value[o * 5 + i] * x.value[i];
    EXPECT_NEAR(y[o], e, 1e-14);
  }
  const auto r = gradcheck::check([&] { return ops::linear(x.leaf(), w.leaf(), b.leaf()); },
                                  {x.target(), w.target(), b.target()}, [] {});
  EXPECT_LT(r.max_relative_error, 1e-6);
  EXPECT_THROW(ops::linear(ag::constant(Tensor<double>(Shape{4})), ag::constant(w.value),
                           ag::constant(b.value)),
               ShapeError);
}

TEST(Concat, FlattensInOrder) {
  gradcheck::Input a{random_tensor(Shape{2, 1, 2}, 1)};
  gradcheck::Input b{random_tensor(Shape{3}, 2)};
  const auto c = ops::concat<double>({ag::constant(a.value), ag::constant(b.value)}).value();
  ASSERT_EQ(c.shape(), (Shape{7}));
  EXPECT_EQ(c[3], a.value[3]);
  EXPECT_EQ(c[4], b.value[0]);
  const auto r = gradcheck::check([&] { return ops::concat<double>({a.leaf(), b.leaf()}); },
                                  {a.target(), b.target()}, [] {});
  EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(Autograd, SharedInputAccumulatesBothPaths) {
  auto x = ag::leaf(Tensor<double>(Shape{2}, std::vector<double>{1.0, -2.0}), true);
  auto y = ops::add(x, ops::relu(x));  // x + relu(x)
  ag::backward(y);
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 1.0);
}

TEST(Autograd, ParamGradientsAccumulateAcrossGraphs) {
  Param<double> p("p", Tensor<double>(Shape{1}, 3.0));
  for (int i = 0; i < 2; ++i) {
    auto y = ops::channel_affine(ag::constant(Tensor<double>(Shape{1, 1, 1}, 2.0)),
                                 ag::param(p), ag::constant(Tensor<double>(Shape{1})));
    ag::backward(y);
  }
  EXPECT_EQ(p.grad[0], 4.0);
  p.zero_grad();
  EXPECT_EQ(p.grad[0], 0.0);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
  Param<double> p("p", Tensor<double>(Shape{1}, 3.0));
  {
    ag::NoGradGuard guard;
    EXPECT_FALSE(ag::grad_enabled());
    auto y = ops::relu(ag::param(p));
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(y.node()->inputs.empty());
  }
  EXPECT_TRUE(ag::grad_enabled());
  EXPECT_TRUE(ops::relu(ag::param(p)).requires_grad());
}

TEST(Autograd, FrozenParamGetsNoGradient) {
  Param<double> p("p", Tensor<double>(Shape{1}, 3.0));
  p.trainable = false;
  auto y = ops::relu(ag::param(p));
  EXPECT_FALSE(y.requires_grad());
}

TEST(Autograd, SeedShapeIsChecked) {
  auto x = ag::leaf(Tensor<double>(Shape{2}), true);
  auto y = ops::relu(x);
  EXPECT_THROW(ag::backward(y, Tensor<double>(Shape{3})), ShapeError);
}
