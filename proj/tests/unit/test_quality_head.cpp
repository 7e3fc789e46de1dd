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
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "ugcvqa/error.hpp"
#include "ugcvqa/quality_head.hpp"

using namespace ugcvqa;

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Distinct, well separated scores so finite differences never cross a
// change of window minimum.
std::vector<double> separated_series(uint64_t seed, size_t n) {
  std::vector<double> q(n);
  for (size_t i = 0; i < n; ++i) q[i] = 0.05 * static_cast<double>(i);
  std::mt19937_64 rng(seed);
  std::shuffle(q.begin(), q.end(), rng);
  std::normal_distribution<double> jitter(0.0, 0.005);
  for (auto& v : q) v = v * 20.0 / static_cast<double>(n) + jitter(rng);
  return q;
}

}  // namespace

TEST(RegressionHead, ZeroWeightsReturnOutputBias) {
  RegressionParams<double> p(5);
  p.fc2_bias.value[0] = 2.75;
  auto f = ag::constant(gradcheck::random_tensor(Shape{5}, 1));
  EXPECT_EQ(regress_frame_score(f, p).value()[0], 2.75);
}

TEST(RegressionHead, MatchesMatrixOracle) {
  const int64_t d = 3;
  RegressionParams<double> p(d);
  for (int64_t h = 0; h < kHeadHiddenWidth; ++h) {
    for (int64_t i = 0; i < d; ++i) p.fc1_weight.value[h * d + i] = 0.01 * ((h + i) % 5) - 0.02;
    p.fc1_bias.value[h] = 0.001 * (h % 7) - 0.003;
    p.fc2_weight.value[h] = 0.02 * ((h % 3) - 1);
  }
  p.fc2_bias.value[0] = 0.5;
  double expect = 0.5;
  for (int64_t h = 0; h < kHeadHiddenWidth; ++h) {
    double a = p.fc1_bias.value[h];
    for (int64_t i = 0; i < d; ++i) a += p.fc1_weight.value[h * d + i] * 1.0;
    expect += p.fc2_weight.value[h] * std::max(a, 0.0);
  }
  const auto q = regress_frame_score(ag::constant(Tensor<double>(Shape{d}, 1.0)), p);
  EXPECT_NEAR(q.value()[0], expect, 1e-15);
}

TEST(RegressionHead, SeededInitIsRepeatable) {
  auto a = RegressionParams<float>::random(16, 5);
  auto b = RegressionParams<float>::random(16, 5);
  const auto ones = ag::constant(Tensor<float>(Shape{16}, 1.0f));
  EXPECT_EQ(regress_frame_score(ones, a).value()[0], regress_frame_score(ones, b).value()[0]);
  const float bound = 1.0f / std::sqrt(16.0f);
  for (float v : a.fc1_weight.value.values()) EXPECT_LE(std::abs(v), bound);
}

TEST(RegressionHead, RejectsWrongDimension) {
  RegressionParams<double> p(4);
  EXPECT_THROW(regress_frame_score(ag::constant(Tensor<double>(Shape{5})), p), ShapeError);
}

TEST(RegressionHead, GradientMatchesFiniteDifferences) {
  auto p = RegressionParams<double>::random(6, 21);
  gradcheck::Input f{gradcheck::random_tensor(Shape{6}, 4)};
  // Keep hidden pre-activations away from the rectifier kink.
  for (int64_t h = 0; h < kHeadHiddenWidth; ++h) {
    double a = p.fc1_bias.value[h];
    for (int64_t i = 0; i < 6; ++i) a += p.fc1_weight.value[h * 6 + i] * f.value[i];
    if (std::abs(a) < 0.01) p.fc1_bias.value[h] += 0.05;
  }
  std::vector<gradcheck::Target> targets = {f.target()};
  p.for_each_param([&](Param<double>& prm) { targets.push_back(gradcheck::target(prm)); });
  const auto r = gradcheck::check([&] { return regress_frame_score(f.leaf(), p); }, targets,
                                  [&] { p.for_each_param([](Param<double>& x) { x.zero_grad(); }); });
  EXPECT_LT(r.max_relative_error, 1e-4);
  EXPECT_EQ(r.checked, 6u + p.fc1_weight.value.numel() + 128 + 128 + 1);
}

TEST(TemporalPool, ConstantSeriesIsExact) {
  const std::vector<double> q(10, 0.5);
  const auto s = temporal_pool(q, {});
  EXPECT_EQ(s.Q, 0.5);
  for (double v : s.q_prime) EXPECT_EQ(v, 0.5);
}

TEST(TemporalPool, SingleFrame) {
  EXPECT_EQ(temporal_pool(std::vector<double>{0.8}, {}).Q, 0.8);
}

TEST(TemporalPool, DipSeriesMatchesFrozenOracleValue) {
  const std::vector<double> q = {1, 1, 0, 1, 1};
  const auto s = temporal_pool(q, {});
  // Frozen from the direct window-enumeration oracle.
  EXPECT_NEAR(s.Q, 0.554390655362381, 1e-14);
  EXPECT_NEAR(s.Q, oracle::temporal_pool(q, 12, 1.0, 0.5), 1e-14);
  EXPECT_LE(s.Q, 0.8);
}

TEST(TemporalPool, MatchesOracleAcrossParameters) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    TemporalPoolParams p;
    p.tau = 1 + trial % 15;
    p.temperature = 0.25 + 0.25 * (trial % 8);
    p.gamma = (trial % 11) / 10.0;
    std::vector<double> q(1 + trial % 40);
    for (auto& v : q) v = u(rng);
    EXPECT_NEAR(temporal_pool(q, p).Q, oracle::temporal_pool(q, p.tau, p.temperature, p.gamma),
                1e-12);
  }
}

TEST(TemporalPool, ShiftEquivariance) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(1.0, 5.0);
  std::vector<double> q(30);
  for (auto& v : q) v = u(rng);
  for (double c : {-3.0, 0.25, 7.5}) {
    std::vector<double> shifted;
    for (double v : q) shifted.push_back(v + c);
    const auto a = temporal_pool(q, {});
    const auto b = temporal_pool(shifted, {});
    EXPECT_NEAR(b.Q, a.Q + c, 1e-9);
    for (size_t t = 0; t < q.size(); ++t) EXPECT_NEAR(b.q_prime[t], a.q_prime[t] + c, 1e-9);
  }
}

TEST(TemporalPool, RandomSeriesAreDominatedByTheirMean) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(1.0, 5.0);
  std::uniform_int_distribution<int> len(1, 60);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> q(static_cast<size_t>(len(rng)));
    for (auto& v : q) v = u(rng);
    ASSERT_LE(temporal_pool(q, {}).Q, mean_of(q) + 1e-12) << "trial " << trial;
  }
}

TEST(TemporalPool, DominanceCanFailOnALateRise) {
  // A step up in the last frame: the early frames' hysteresis windows see
  // mostly low scores, while the last frame's own window is just itself.
  // The forward-looking average over-weights the rise slightly.
  const std::vector<double> q = {0, 0, 0, 0.1};
  const double Q = temporal_pool(q, {}).Q;
  EXPECT_GT(Q, mean_of(q));
  EXPECT_NEAR(Q - mean_of(q), 2.3e-4, 5e-5);
}

TEST(TemporalPool, DipStrictlyLowersScore) {
  for (size_t n : {2u, 5u, 13u, 40u}) {
    for (size_t at = 0; at < n; at += std::max<size_t>(1, n / 4)) {
      std::vector<double> q(n, 3.0);
      const double base = temporal_pool(q, {}).Q;
      q[at] = 2.5;
      EXPECT_LT(temporal_pool(q, {}).Q, base) << n << " " << at;
    }
  }
}

TEST(TemporalPool, GradientMatchesFiniteDifferences) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    TemporalPoolParams p;
    p.tau = 3 + static_cast<int>(seed % 5);
    p.temperature = 0.5 + 0.1 * static_cast<double>(seed);
    const auto q = separated_series(seed, 12 + seed);
    const auto analytic = temporal_pool_gradient(q, p);
    const auto numeric = oracle::central_gradient(
        [&](const std::vector<double>& x) { return temporal_pool(x, p).Q; }, q, 1e-3);
    for (size_t i = 0; i < q.size(); ++i) {
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-8});
      EXPECT_LT(std::abs(analytic[i] - numeric[i]) / denom, 1e-4) << seed << " " << i;
    }
  }
}

TEST(TemporalPool, Validation) {
  EXPECT_THROW(temporal_pool(std::vector<double>{}, {}), Error);
  TemporalPoolParams bad;
  bad.temperature = 0;
  EXPECT_THROW(temporal_pool(std::vector<double>{1.0}, bad), ConfigError);
  bad = {};
  bad.gamma = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Loss, SquaredErrorAndBatchMean) {
  EXPECT_EQ(training_loss(2.0, 2.0), 0.0);
  EXPECT_EQ(training_loss(3.0, 1.0), 4.0);
  const std::vector<std::pair<double, double>> batch = {{2, 1}, {0, 2}};
  EXPECT_EQ(batch_loss(batch), 2.5);
  EXPECT_THROW(training_loss(std::nan(""), 1.0), TrainingError);
  EXPECT_THROW(training_loss(1.0, INFINITY), TrainingError);
}

TEST(Loss, NonNegativeAndZeroOnlyAtLabel) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int i = 0; i < 500; ++i) {
    const double a = n(rng), b = n(rng);
    EXPECT_GE(training_loss(a, b), 0.0);
    EXPECT_EQ(training_loss(a, b) == 0.0, a == b);
  }
}
