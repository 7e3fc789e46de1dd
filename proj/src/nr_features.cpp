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
#include "ugcvqa/nr_features.hpp"

#include <cmath>
#include <random>

#include "ugcvqa/ops.hpp"

namespace ugcvqa {
namespace {

template <typename T>
using NodePtr = std::shared_ptr<ag::Node<T>>;

template <typename T>
void kaiming(Param<T>& p, std::mt19937_64& rng) {
  const auto& s = p.value.shape();
  const double fan_in = static_cast<double>(s[1] * s[2] * s[3]);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : p.value.values()) v = static_cast<T>(dist(rng));
}

template <typename T>
ag::Var<T> conv_affine(const ag::Var<T>& x, Param<T>& w, Param<T>& scale,
                       Param<T>& shift, ops::Conv2dSpec spec, bool activate) {
  auto y = ops::conv2d(x, ag::param(w), ag::Var<T>(), spec);
  y = ops::channel_affine(y, ag::param(scale), ag::param(shift));
  return activate ? ops::relu(y) : y;
}

}  // namespace

template <typename T>
BottleneckParams<T>::BottleneckParams(const std::string& prefix, int64_t channels) {
  if (channels % 4 != 0 || channels <= 0) {
    throw ShapeError("bottleneck channels must be a positive multiple of 4, got " +
                     std::to_string(channels));
  }
  const int64_t q = channels / 4;
  auto ones = [](int64_t n) { return Tensor<T>(Shape{n}, T{1}); };
  auto zeros = [](int64_t n) { return Tensor<T>(Shape{n}, T{0}); };
  conv_a = Param<T>(prefix + ".conv_a.weight", Tensor<T>(Shape{q, channels, 1, 1}));
  scale_a = Param<T>(prefix + ".norm_a.scale", ones(q));
  shift_a = Param<T>(prefix + ".norm_a.shift", zeros(q));
  conv_b = Param<T>(prefix + ".conv_b.weight", Tensor<T>(Shape{q, q, 3, 3}));
  scale_b = Param<T>(prefix + ".norm_b.scale", ones(q));
  shift_b = Param<T>(prefix + ".norm_b.shift", zeros(q));
  conv_c = Param<T>(prefix + ".conv_c.weight", Tensor<T>(Shape{2 * channels, q, 1, 1}));
  scale_c = Param<T>(prefix + ".norm_c.scale", ones(2 * channels));
  shift_c = Param<T>(prefix + ".norm_c.shift", zeros(2 * channels));
}

template <typename T>
void BottleneckParams<T>::for_each_param(const std::function<void(Param<T>&)>& fn) {
  for (Param<T>* p : {&conv_a, &scale_a, &shift_a, &conv_b, &scale_b, &shift_b,
                      &conv_c, &scale_c, &shift_c}) {
    fn(*p);
  }
}

template <typename T>
StaircaseParams<T>::StaircaseParams(std::vector<int64_t> stage_channels)
    : stage_channels_(std::move(stage_channels)) {
  const size_t ns = stage_channels_.size();
  for (size_t i = 0; i + 1 < ns; ++i) {
    std::vector<BottleneckParams<T>> chain;
    int64_t c = stage_channels_[i];
    for (size_t k = 0; k + 1 + i < ns; ++k) {
      chain.emplace_back("staircase." + std::to_string(i + 1) + "." + std::to_string(k), c);
      c *= 2;
    }
    hops.push_back(std::move(chain));
  }
}

template <typename T>
StaircaseParams<T> StaircaseParams<T>::random(std::vector<int64_t> stage_channels,
                                              uint64_t seed) {
  StaircaseParams p(std::move(stage_channels));
  std::mt19937_64 rng(seed);
  for (auto& chain : p.hops) {
    for (auto& hop : chain) {
      kaiming(hop.conv_a, rng);
      kaiming(hop.conv_b, rng);
      kaiming(hop.conv_c, rng);
    }
  }
  return p;
}

template <typename T>
size_t StaircaseParams<T>::hop_count() const {
  size_t n = 0;
  for (const auto& chain : hops) n += chain.size();
  return n;
}

template <typename T>
void StaircaseParams<T>::for_each_param(const std::function<void(Param<T>&)>& fn) {
  for (auto& chain : hops) {
    for (auto& hop : chain) hop.for_each_param(fn);
  }
}

template <typename T>
ag::Var<T> bottleneck_downscale(const ag::Var<T>& map, BottleneckParams<T>& p) {
  const auto& s = map.shape();
  if (s.size() != 3) throw ShapeError("bottleneck expects (C,H,W), got " + shape_str(s));
  if (s[1] % 2 != 0 || s[2] % 2 != 0) {
    throw ShapeError("bottleneck needs even spatial dims, got " + shape_str(s));
  }
  if (s[0] != p.in_channels()) {
    throw ShapeError("bottleneck built for " + std::to_string(p.in_channels()) +
                     " channels, got " + shape_str(s));
  }
  auto y = conv_affine(map, p.conv_a, p.scale_a, p.shift_a, {1, 0}, true);
  y = conv_affine(y, p.conv_b, p.scale_b, p.shift_b, {2, 1}, true);
  return conv_affine(y, p.conv_c, p.scale_c, p.shift_c, {1, 0}, false);
}

template <typename T>
ag::Var<T> staircase_fuse(std::span<const ag::Var<T>> stages, StaircaseParams<T>& p) {
  if (stages.empty()) throw ShapeError("staircase_fuse of an empty pyramid");
  const size_t ns = stages.size();
  for (size_t i = 0; i < ns; ++i) {
    const auto& s = stages[i].shape();
    if (s.size() != 3) throw ShapeError("stage " + std::to_string(i + 1) + " is not (C,H,W)");
    if (i == 0) continue;
    const auto& prev = stages[i - 1].shape();
    if (s[0] != 2 * prev[0] || 2 * s[1] != prev[1] || 2 * s[2] != prev[2]) {
      throw ShapeError("stage " + std::to_string(i + 1) + " " + shape_str(s) +
                       " does not double channels and halve resolution of " +
                       shape_str(prev));
    }
  }
  if (p.stage_channels().size() != ns) {
    throw ShapeError("staircase built for " + std::to_string(p.stage_channels().size()) +
                     " stages, pyramid has " + std::to_string(ns));
  }
  for (size_t i = 0; i < ns; ++i) {
    if (p.stage_channels()[i] != stages[i].dim(0)) {
      throw ShapeError("staircase channel mismatch at stage " + std::to_string(i + 1));
    }
  }

  ag::Var<T> fused = stages[ns - 1];
  for (size_t i = 0; i + 1 < ns; ++i) {
    ag::Var<T> carried = stages[i];
    for (auto& hop : p.hops[i]) carried = bottleneck_downscale(carried, hop);
    fused = ops::add(fused, carried);
  }
  return fused;
}

template <typename T>
ag::Var<T> global_pool_stats(const ag::Var<T>& fused) {
  const auto& s = fused.shape();
  if (s.size() != 3 || s[1] * s[2] == 0) {
    throw ShapeError("global_pool_stats expects a non-empty (C,H,W), got " + shape_str(s));
  }
  const int64_t channels = s[0], m = s[1] * s[2];
  Tensor<T> out(Shape{2 * channels});
  std::vector<double> means(static_cast<size_t>(channels)), stds(means.size());
  std::vector<char> floored(means.size());
  const T* x = fused.value().data();
  for (int64_t c = 0; c < channels; ++c) {
    const T* xc = x + c * m;
    double sum = 0.0;
    for (int64_t k = 0; k < m; ++k) sum += xc[k];
    const double mean = sum / static_cast<double>(m);
    double ss = 0.0;
    for (int64_t k = 0; k < m; ++k) ss += (xc[k] - mean) * (xc[k] - mean);
    const double var = ss / static_cast<double>(m);
    floored[static_cast<size_t>(c)] = var <= kStdPoolEps;
    const double sd = std::sqrt(std::max(var, kStdPoolEps));
    means[static_cast<size_t>(c)] = mean;
    stds[static_cast<size_t>(c)] = sd;
    out[c] = static_cast<T>(mean);
    out[channels + c] = static_cast<T>(sd);
  }
  return ag::make_op<T>(
      std::move(out), {fused},
      [=, means = std::move(means), stds = std::move(stds),
       floored = std::move(floored)](const Tensor<T>& g, std::span<const NodePtr<T>> in) {
        const T* xv = in[0]->value().data();
        T* gx = in[0]->grad().data();
        for (int64_t c = 0; c < channels; ++c) {
          const auto ci = static_cast<size_t>(c);
          const double g_mean = g[c] / static_cast<double>(m);
          const double g_std = floored[ci] ? 0.0 : g[channels + c] / (m * stds[ci]);
          for (int64_t k = 0; k < m; ++k) {
            gx[c * m + k] += static_cast<T>(g_mean + g_std * (xv[c * m + k] - means[ci]));
          }
        }
      });
}

template struct BottleneckParams<float>;
template struct BottleneckParams<double>;
template class StaircaseParams<float>;
template class StaircaseParams<double>;
template ag::Var<float> bottleneck_downscale(const ag::Var<float>&, BottleneckParams<float>&);
template ag::Var<double> bottleneck_downscale(const ag::Var<double>&, BottleneckParams<double>&);
template ag::Var<float> staircase_fuse(std::span<const ag::Var<float>>, StaircaseParams<float>&);
template ag::Var<double> staircase_fuse(std::span<const ag::Var<double>>,
                                        StaircaseParams<double>&);
template ag::Var<float> global_pool_stats(const ag::Var<float>&);
template ag::Var<double> global_pool_stats(const ag::Var<double>&);

}  // namespace ugcvqa
