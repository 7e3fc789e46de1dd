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
#include "ugcvqa/quality_head.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ugcvqa/ops.hpp"

namespace ugcvqa {
namespace {

struct Window {
  size_t begin;
  size_t end;  // exclusive
};

Window memory_window(size_t t, int tau) {
  return {t >= static_cast<size_t>(tau) ? t - static_cast<size_t>(tau) : 0, t + 1};
}

Window hysteresis_window(size_t t, size_t n, int tau) {
  return {t, std::min(n, t + static_cast<size_t>(tau) + 1)};
}

// Normalised softmin weights over q[w.begin, w.end), shifted by the window
// minimum for stability.
std::vector<double> softmin_weights(std::span<const double> q, Window w, double temperature) {
  const double lo = *std::min_element(q.begin() + static_cast<std::ptrdiff_t>(w.begin),
                                      q.begin() + static_cast<std::ptrdiff_t>(w.end));
  std::vector<double> weights(w.end - w.begin);
  double total = 0.0;
  for (size_t k = w.begin; k < w.end; ++k) {
    weights[k - w.begin] = std::exp(-(q[k] - lo) / temperature);
    total += weights[k - w.begin];
  }
  for (auto& v : weights) v /= total;
  return weights;
}

void check_series(std::span<const double> q) {
  if (q.empty()) throw Error("temporal pooling of an empty score series");
  for (double v : q) {
    if (!std::isfinite(v)) throw Error("temporal pooling got a non-finite frame score");
  }
}

}  // namespace

template <typename T>
RegressionParams<T>::RegressionParams(int64_t input_dim)
    : fc1_weight("head.fc1.weight", Tensor<T>(Shape{kHeadHiddenWidth, input_dim})),
      fc1_bias("head.fc1.bias", Tensor<T>(Shape{kHeadHiddenWidth})),
      fc2_weight("head.fc2.weight", Tensor<T>(Shape{1, kHeadHiddenWidth})),
      fc2_bias("head.fc2.bias", Tensor<T>(Shape{1})) {
  if (input_dim <= 0) throw ShapeError("regression input dimension must be positive");
}

template <typename T>
RegressionParams<T> RegressionParams<T>::random(int64_t input_dim, uint64_t seed) {
  RegressionParams p(input_dim);
  std::mt19937_64 rng(seed);
  auto fill = [&](Param<T>& param, int64_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : param.value.values()) v = static_cast<T>(dist(rng));
  };
  fill(p.fc1_weight, input_dim);
  fill(p.fc1_bias, input_dim);
  fill(p.fc2_weight, kHeadHiddenWidth);
  fill(p.fc2_bias, kHeadHiddenWidth);
  return p;
}

template <typename T>
void RegressionParams<T>::for_each_param(const std::function<void(Param<T>&)>& fn) {
  fn(fc1_weight);
  fn(fc1_bias);
  fn(fc2_weight);
  fn(fc2_bias);
}

template <typename T>
ag::Var<T> regress_frame_score(const ag::Var<T>& features, RegressionParams<T>& p) {
  if (features.value().numel() != p.input_dim()) {
    throw ShapeError("feature dimension " + std::to_string(features.value().numel()) +
                     " does not match regression input " + std::to_string(p.input_dim()));
  }
  auto hidden = ops::relu(
      ops::linear(features, ag::param(p.fc1_weight), ag::param(p.fc1_bias)));
  return ops::linear(hidden, ag::param(p.fc2_weight), ag::param(p.fc2_bias));
}

void TemporalPoolParams::validate() const {
  if (tau < 1) throw ConfigError("temporal pooling tau must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("softmin temperature must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
}

FrameScoreSeries temporal_pool(std::span<const double> q, const TemporalPoolParams& p) {
  p.validate();
  check_series(q);
  const size_t n = q.size();
  FrameScoreSeries out;
  out.q.assign(q.begin(), q.end());
  out.q_prime.resize(n);
  // Everything is accumulated as offsets from window minima and from q[0],
  // so a constant series reproduces its value bit-exactly.
  double offset_total = 0.0;
  for (size_t t = 0; t < n; ++t) {
    const Window mw = memory_window(t, p.tau);
    const double memory = *std::min_element(q.begin() + static_cast<std::ptrdiff_t>(mw.begin),
                                            q.begin() + static_cast<std::ptrdiff_t>(mw.end));
    const Window hw = hysteresis_window(t, n, p.tau);
    const double lo = *std::min_element(q.begin() + static_cast<std::ptrdiff_t>(hw.begin),
                                        q.begin() + static_cast<std::ptrdiff_t>(hw.end));
    const auto w = softmin_weights(q, hw, p.temperature);
    double above = 0.0;
    for (size_t k = hw.begin; k < hw.end; ++k) above += w[k - hw.begin] * (q[k] - lo);
    const double hysteresis = lo + above;
    out.q_prime[t] = memory + (1.0 - p.gamma) * (hysteresis - memory);
    offset_total += out.q_prime[t] - q[0];
  }
  out.Q = q[0] + offset_total / static_cast<double>(n);
  return out;
}

std::vector<double> temporal_pool_gradient(std::span<const double> q,
                                           const TemporalPoolParams& p) {
  p.validate();
  check_series(q);
  const size_t n = q.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> grad(n, 0.0);
  for (size_t t = 0; t < n; ++t) {
    const Window mw = memory_window(t, p.tau);
    const auto argmin = std::min_element(q.begin() + static_cast<std::ptrdiff_t>(mw.begin),
                                         q.begin() + static_cast<std::ptrdiff_t>(mw.end)) -
                        q.begin();
    grad[static_cast<size_t>(argmin)] += p.gamma * inv_n;

    const Window hw = hysteresis_window(t, n, p.tau);
    const auto w = softmin_weights(q, hw, p.temperature);
    double m = 0.0;
    for (size_t k = hw.begin; k < hw.end; ++k) m += w[k - hw.begin] * q[k];
    for (size_t k = hw.begin; k < hw.end; ++k) {
      grad[k] += (1.0 - p.gamma) * inv_n * w[k - hw.begin] *
                 (1.0 - (q[k] - m) / p.temperature);
    }
  }
  return grad;
}

double training_loss(double predicted, double label) {
  if (!std::isfinite(predicted) || !std::isfinite(label)) {
    throw TrainingError("training loss got a non-finite input");
  }
  const double d = predicted - label;
  return d * d;
}

double batch_loss(std::span<const std::pair<double, double>> batch) {
  if (batch.empty()) throw TrainingError("empty batch");
  double total = 0.0;
  for (const auto& [q, label] : batch) total += training_loss(q, label);
  return total / static_cast<double>(batch.size());
}

template class RegressionParams<float>;
template class RegressionParams<double>;
template ag::Var<float> regress_frame_score(const ag::Var<float>&, RegressionParams<float>&);
template ag::Var<double> regress_frame_score(const ag::Var<double>&, RegressionParams<double>&);

}  // namespace ugcvqa
