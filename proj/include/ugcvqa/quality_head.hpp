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
#pragma once

// Frame-score regression (two affine layers with a rectifier between),
// subjectively-inspired temporal pooling, and the squared-error objective.

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "ugcvqa/autograd.hpp"

namespace ugcvqa {

inline constexpr int64_t kHeadHiddenWidth = 128;

template <typename T>
class RegressionParams {
 public:
  RegressionParams() = default;
  explicit RegressionParams(int64_t input_dim);

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  static RegressionParams random(int64_t input_dim, uint64_t seed);

  int64_t input_dim() const { return fc1_weight.value.dim(1); }

  Param<T> fc1_weight;  // (128, D)
  Param<T> fc1_bias;    // (128)
  Param<T> fc2_weight;  // (1, 128)
  Param<T> fc2_bias;    // (1)

  void for_each_param(const std::function<void(Param<T>&)>& fn);
};

// Returns a (1) tensor holding q_t.
template <typename T>
ag::Var<T> regress_frame_score(const ag::Var<T>& features, RegressionParams<T>& p);

// Memory component: minimum over frames [t - tau, t]. Hysteresis
// component: softmin-weighted mean over frames [t, t + tau] with weights
// exp(-q / temperature). Blended as gamma * memory + (1 - gamma) * hysteresis.
struct TemporalPoolParams {
  int tau = 12;
  double temperature = 1.0;
  double gamma = 0.5;

  void validate() const;
};

struct FrameScoreSeries {
  std::vector<double> q;
  std::vector<double> q_prime;
  double Q = 0.0;
};

FrameScoreSeries temporal_pool(std::span<const double> q, const TemporalPoolParams& p);

// dQ / dq_t. The memory minimum routes its gradient to the earliest
// minimising frame of each window.
std::vector<double> temporal_pool_gradient(std::span<const double> q,
                                           const TemporalPoolParams& p);

double training_loss(double predicted, double label);

// Mean of training_loss over (predicted, label) pairs.
double batch_loss(std::span<const std::pair<double, double>> batch);

}  // namespace ugcvqa
