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

// No-reference quality features: staircase fusion of the residual stages
// into the last stage's shape, then per-channel global mean and standard
// deviation pooling.
//
// Each F_i travels alone through its own chain of (Ns - i) bottleneck
// hops; the fused map is the sum of all chain outputs and F_Ns. A hop is
// 1x1 (C -> C/4), 3x3 stride 2 (C/4 -> C/4), 1x1 (C/4 -> 2C); every conv
// is followed by a per-channel affine, and all but the last by a
// rectifier. Parameters are not shared between hops.
//
// Feature layout (id kNrFeatureLayout): C means then C standard deviations.

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "ugcvqa/autograd.hpp"

namespace ugcvqa {

inline constexpr std::string_view kNrFeatureLayout = "nr-mean-std-v1";
inline constexpr double kStdPoolEps = 1e-12;

template <typename T>
struct BottleneckParams {
  Param<T> conv_a, scale_a, shift_a;
  Param<T> conv_b, scale_b, shift_b;
  Param<T> conv_c, scale_c, shift_c;

  BottleneckParams() = default;
  BottleneckParams(const std::string& prefix, int64_t channels);

  int64_t in_channels() const { return conv_a.value.dim(1); }
  void for_each_param(const std::function<void(Param<T>&)>& fn);
};

template <typename T>
class StaircaseParams {
 public:
  StaircaseParams() = default;
  // stage_channels are C_1..C_Ns of the NR pyramid.
  explicit StaircaseParams(std::vector<int64_t> stage_channels);

  // Kaiming (fan-in) normal convolutions, identity affines.
  static StaircaseParams random(std::vector<int64_t> stage_channels, uint64_t seed);

  const std::vector<int64_t>& stage_channels() const { return stage_channels_; }
  size_t hop_count() const;

  // hops[i][k] carries source stage i+1 across its k-th hop.
  std::vector<std::vector<BottleneckParams<T>>> hops;

  void for_each_param(const std::function<void(Param<T>&)>& fn);

 private:
  std::vector<int64_t> stage_channels_;
};

template <typename T>
ag::Var<T> bottleneck_downscale(const ag::Var<T>& map, BottleneckParams<T>& p);

template <typename T>
ag::Var<T> staircase_fuse(std::span<const ag::Var<T>> stages, StaircaseParams<T>& p);

// (C, H, W) -> (2C): spatial means, then spatial population standard
// deviations with the variance floored at kStdPoolEps.
template <typename T>
ag::Var<T> global_pool_stats(const ag::Var<T>& fused);

}  // namespace ugcvqa
