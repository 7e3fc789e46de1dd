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
#include "ugcvqa/backbone.hpp"

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "ugcvqa/ops.hpp"

namespace ugcvqa {
namespace {

constexpr double kBatchNormEps = 1e-5;
constexpr int64_t kStrideProduct = 32;

ConvUnit make_unit(const std::string& conv_name, const std::string& norm_name,
                   int64_t out_c, int64_t in_c, int kernel, int stride,
                   int padding) {
  ConvUnit u;
  u.weight = Param<float>(conv_name + ".weight", Tensor<float>(Shape{out_c, in_c, kernel, kernel}));
  u.scale = Param<float>(norm_name + ".scale", Tensor<float>(Shape{out_c}, 1.0f));
  u.shift = Param<float>(norm_name + ".shift", Tensor<float>(Shape{out_c}, 0.0f));
  u.stride = stride;
  u.padding = padding;
  return u;
}

template <typename Params, typename Fn>
void visit_params(Params& p, Fn&& fn) {
  auto unit = [&](auto& u) {
    fn(u.weight);
    fn(u.scale);
    fn(u.shift);
  };
  unit(p.stem);
  for (auto& stage : p.stages) {
    for (auto& block : stage) {
      unit(block.reduce);
      unit(block.spatial);
      unit(block.expand);
      if (block.has_projection) unit(block.projection);
    }
  }
}

ag::Var<float> apply_unit(const ag::Var<float>& x, ConvUnit& u, bool activate) {
  auto y = ops::conv2d(x, ag::param(u.weight), ag::Var<float>(),
                       ops::Conv2dSpec{u.stride, u.padding});
  y = ops::channel_affine(y, ag::param(u.scale), ag::param(u.shift));
  return activate ? ops::relu(y) : y;
}

// Maps a torchvision-style prefix (conv1 / bn1 pairs) to a unit.
struct UnitNames {
  std::string conv;
  std::string norm;
};

std::vector<std::pair<UnitNames, ConvUnit*>> named_units(BackboneParams& p) {
  std::vector<std::pair<UnitNames, ConvUnit*>> out;
  out.push_back({{"conv1", "bn1"}, &p.stem});
  for (size_t s = 0; s < p.stages.size(); ++s) {
    for (size_t b = 0; b < p.stages[s].size(); ++b) {
      const std::string prefix =
          "layer" + std::to_string(s + 1) + "." + std::to_string(b) + ".";
      auto& block = p.stages[s][b];
      out.push_back({{prefix + "conv1", prefix + "bn1"}, &block.reduce});
      out.push_back({{prefix + "conv2", prefix + "bn2"}, &block.spatial});
      out.push_back({{prefix + "conv3", prefix + "bn3"}, &block.expand});
      if (block.has_projection) {
        out.push_back({{prefix + "downsample.0", prefix + "downsample.1"},
                       &block.projection});
      }
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(TapSet taps) { return taps == TapSet::fr ? "fr" : "nr"; }

std::vector<int64_t> BackboneConfig::tap_channels(TapSet taps) const {
  std::vector<int64_t> out;
  if (taps == TapSet::fr) out.push_back(stem_channels);
  for (size_t s = 0; s < blocks.size(); ++s) out.push_back(stage_channels(s));
  return out;
}

BackboneParams::BackboneParams(const BackboneConfig& config) : config_(config) {
  stem = make_unit("backbone.conv1", "backbone.bn1", config.stem_channels, 3, 7, 2, 3);
  int64_t in_c = config.stem_channels;
  stages.resize(config.blocks.size());
  for (size_t s = 0; s < config.blocks.size(); ++s) {
    const int64_t width = static_cast<int64_t>(config.base_width) << s;
    const int64_t out_c = config.stage_channels(s);
    for (int b = 0; b < config.blocks[s]; ++b) {
      const std::string prefix = "backbone.layer" + std::to_string(s + 1) + "." +
                                 std::to_string(b) + ".";
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      ResidualBlock block;
      block.reduce = make_unit(prefix + "conv1", prefix + "bn1", width, in_c, 1, 1, 0);
      block.spatial = make_unit(prefix + "conv2", prefix + "bn2", width, width, 3, stride, 1);
      block.expand = make_unit(prefix + "conv3", prefix + "bn3", out_c, width, 1, 1, 0);
      if (b == 0) {
        block.has_projection = true;
        block.projection = make_unit(prefix + "downsample.0", prefix + "downsample.1",
                                     out_c, in_c, 1, stride, 0);
      }
      stages[s].push_back(std::move(block));
      in_c = out_c;
    }
  }
}

BackboneParams BackboneParams::random(const BackboneConfig& config, uint64_t seed) {
  BackboneParams p(config);
  std::mt19937_64 rng(seed);
  auto init_conv = [&](ConvUnit& u) {
    const auto& s = u.weight.value.shape();
    const double fan_in = static_cast<double>(s[1] * s[2] * s[3]);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : u.weight.value.values()) v = static_cast<float>(dist(rng));
  };
  init_conv(p.stem);
  for (auto& stage : p.stages) {
    for (auto& block : stage) {
      init_conv(block.reduce);
      init_conv(block.spatial);
      init_conv(block.expand);
      block.expand.scale.value.fill(0.0f);
      if (block.has_projection) init_conv(block.projection);
    }
  }
  return p;
}

void BackboneParams::for_each_param(const std::function<void(Param<float>&)>& fn) {
  visit_params(*this, fn);
}

void BackboneParams::for_each_param(
    const std::function<void(const Param<float>&)>& fn) const {
  visit_params(*this, fn);
}

std::vector<Shape> FramePyramid::shapes() const {
  std::vector<Shape> out;
  for (const auto& s : stages) out.push_back(s.shape());
  return out;
}

std::vector<Shape> pyramid_shapes(const BackboneConfig& config, int64_t height,
                                  int64_t width, TapSet taps) {
  if (height <= 0 || width <= 0 || height % kStrideProduct != 0 ||
      width % kStrideProduct != 0) {
    throw ShapeError("backbone input " + std::to_string(height) + "x" +
                     std::to_string(width) + " must be divisible by 32");
  }
  std::vector<Shape> out;
  int64_t h = height / 2, w = width / 2;
  if (taps == TapSet::fr) out.push_back({config.stem_channels, h, w});
  h /= 2;
  w /= 2;
  for (size_t s = 0; s < config.blocks.size(); ++s) {
    if (s > 0) {
      h /= 2;
      w /= 2;
    }
    out.push_back({config.stage_channels(s), h, w});
  }
  return out;
}

FramePyramid extract_pyramid(const ag::Var<float>& frame, BackboneParams& params,
                             TapSet taps) {
  const auto& shape = frame.shape();
  if (shape.size() != 3 || shape[0] != 3) {
    throw ShapeError("backbone expects a (3,H,W) frame, got " + shape_str(shape));
  }
  // Validates divisibility before any compute.
  (void)pyramid_shapes(params.config(), shape[1], shape[2], taps);

  Tensor<float> inv_std(Shape{3}), neg_mean(Shape{3});
  for (int c = 0; c < 3; ++c) {
    inv_std[c] = 1.0f / params.normalization.std[c];
    neg_mean[c] = -params.normalization.mean[c] / params.normalization.std[c];
  }
  auto x = ops::channel_affine(frame, ag::constant(std::move(inv_std)),
                               ag::constant(std::move(neg_mean)));

  FramePyramid pyramid;
  x = apply_unit(x, params.stem, true);
  if (taps == TapSet::fr) pyramid.stages.push_back(x);
  x = ops::max_pool2d(x, 3, 2, 1);
  for (auto& stage : params.stages) {
    for (auto& block : stage) {
      auto branch = apply_unit(x, block.reduce, true);
      branch = apply_unit(branch, block.spatial, true);
      branch = apply_unit(branch, block.expand, false);
      auto shortcut = block.has_projection ? apply_unit(x, block.projection, false) : x;
      x = ops::relu(ops::add(branch, shortcut));
    }
    pyramid.stages.push_back(x);
  }
  return pyramid;
}

std::vector<std::pair<std::string, Shape>> pretrained_layout(const BackboneConfig& config) {
  BackboneParams shape_only(config);
  std::vector<std::pair<std::string, Shape>> out;
  for (auto& [names, unit] : named_units(shape_only)) {
    out.emplace_back(names.conv + ".weight", unit->weight.value.shape());
    const Shape c = unit->scale.value.shape();
    for (const char* suffix : {".weight", ".bias", ".running_mean", ".running_var"}) {
      out.emplace_back(names.norm + suffix, c);
    }
  }
  return out;
}

BackboneParams load_pretrained(const std::filesystem::path& weights_path,
                               const BackboneConfig& config) {
  TensorArchive archive;
  try {
    archive = TensorArchive::read(weights_path);
  } catch (const ParseError& e) {
    throw ParseError(std::string("cannot load pretrained weights: ") + e.what());
  }
  return load_pretrained(archive, config);
}

BackboneParams load_pretrained(const TensorArchive& archive, const BackboneConfig& config) {
  const auto layout = pretrained_layout(config);
  std::set<std::string> expected;
  for (const auto& [name, _] : layout) expected.insert(name);

  std::vector<std::string> missing, extra, mismatched;
  for (const auto& [name, shape] : layout) {
    if (!archive.contains(name)) {
      missing.push_back(name);
    } else if (archive.get(name).shape() != shape) {
      mismatched.push_back(name + " expected " + shape_str(shape) + " got " +
                           shape_str(archive.get(name).shape()));
    }
  }
  for (const auto& name : archive.names()) {
    if (!expected.count(name)) extra.push_back(name);
  }
  if (!missing.empty() || !extra.empty() || !mismatched.empty()) {
    std::ostringstream os;
    os << "pretrained weights do not match the backbone architecture";
    auto list = [&](const char* label, const std::vector<std::string>& items) {
      if (items.empty()) return;
      os << "; " << label << " (" << items.size() << "):";
      for (const auto& i : items) os << ' ' << i;
    };
    list("missing", missing);
    list("unexpected", extra);
    list("shape mismatch", mismatched);
    throw ShapeError(os.str());
  }

  BackboneParams params(config);
  for (auto& [names, unit] : named_units(params)) {
    unit->weight.value = archive.get(names.conv + ".weight");
    const auto& gamma = archive.get(names.norm + ".weight");
    const auto& beta = archive.get(names.norm + ".bias");
    const auto& mean = archive.get(names.norm + ".running_mean");
    const auto& var = archive.get(names.norm + ".running_var");
    for (int64_t c = 0; c < gamma.numel(); ++c) {
      const double s = gamma[c] / std::sqrt(static_cast<double>(var[c]) + kBatchNormEps);
      unit->scale.value[c] = static_cast<float>(s);
      unit->shift.value[c] = static_cast<float>(beta[c] - mean[c] * s);
    }
  }
  if (archive.metadata.contains("normalization")) {
    const auto& n = archive.metadata["normalization"];
    params.normalization.mean = n.at("mean").get<std::array<float, 3>>();
    params.normalization.std = n.at("std").get<std::array<float, 3>>();
  }
  return params;
}

}  // namespace ugcvqa
