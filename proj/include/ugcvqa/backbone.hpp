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

// Staged residual backbone (50-layer bottleneck layout by default) that
// emits an ordered feature pyramid for one frame.
//
// Normalisation layers are stored as per-channel affines: a pretrained
// batch-norm (gamma, beta, running mean, running variance) is folded into
// scale = gamma / sqrt(var + eps) and shift = beta - mean * scale on load.
// Both stay trainable during fine-tuning.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ugcvqa/autograd.hpp"
#include "ugcvqa/tensor_archive.hpp"

namespace ugcvqa {

enum class TapSet { fr, nr };

std::string_view to_string(TapSet taps);

struct BackboneConfig {
  int stem_channels = 64;
  std::array<int, 4> blocks = {3, 4, 6, 3};
  // Inner width of the first stage's bottlenecks; doubles per stage.
  int base_width = 64;
  int expansion = 4;

  static BackboneConfig resnet50() { return {}; }

  int64_t stage_channels(size_t stage) const {
    return static_cast<int64_t>(base_width) * expansion << stage;
  }
  // Channel count of every emitted stage for the given tap set.
  std::vector<int64_t> tap_channels(TapSet taps) const;

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

// Input normalisation applied to [0, 1] RGB before the stem.
struct NormalizationConstants {
  std::array<float, 3> mean = {0.485f, 0.456f, 0.406f};
  std::array<float, 3> std = {0.229f, 0.224f, 0.225f};
};

struct ConvUnit {
  Param<float> weight;  // (O, C, k, k), no bias
  Param<float> scale;   // (O)
  Param<float> shift;   // (O)
  int stride = 1;
  int padding = 0;
};

struct ResidualBlock {
  ConvUnit reduce;   // 1x1
  ConvUnit spatial;  // 3x3, carries the stage stride
  ConvUnit expand;   // 1x1
  bool has_projection = false;
  ConvUnit projection;  // 1x1 shortcut when shape changes
};

class BackboneParams {
 public:
  BackboneParams() = default;
  explicit BackboneParams(const BackboneConfig& config);

  // Kaiming (fan-in) normal convolutions, identity affines, and a zero
  // scale on the last affine of every residual branch.
  static BackboneParams random(const BackboneConfig& config, uint64_t seed);

  const BackboneConfig& config() const { return config_; }
  NormalizationConstants normalization;

  ConvUnit stem;
  std::vector<std::vector<ResidualBlock>> stages;

  void for_each_param(const std::function<void(Param<float>&)>& fn);
  void for_each_param(const std::function<void(const Param<float>&)>& fn) const;

 private:
  BackboneConfig config_;
};

// Ordered stage outputs F_1..F_Ns for one frame.
struct FramePyramid {
  std::vector<ag::Var<float>> stages;

  size_t size() const { return stages.size(); }
  std::vector<Shape> shapes() const;
};

// Stage shapes produced for an (3, height, width) input; pure shape
// algebra, no compute.
std::vector<Shape> pyramid_shapes(const BackboneConfig& config, int64_t height,
                                  int64_t width, TapSet taps);

// frame: (3, H, W) in [0, 1], H and W divisible by 32.
FramePyramid extract_pyramid(const ag::Var<float>& frame,
                             BackboneParams& params, TapSet taps);

// Pretrained archive with torchvision-style names (conv1.weight,
// bn1.running_mean, layer1.0.downsample.0.weight, ...). Mismatches in
// the name set or tensor shapes are reported in full.
BackboneParams load_pretrained(const std::filesystem::path& weights_path,
                               const BackboneConfig& config = BackboneConfig::resnet50());
BackboneParams load_pretrained(const TensorArchive& archive,
                               const BackboneConfig& config);

// Expected pretrained tensor names and shapes for a configuration.
std::vector<std::pair<std::string, Shape>> pretrained_layout(const BackboneConfig& config);

}  // namespace ugcvqa
