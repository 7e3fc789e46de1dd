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
#include <fstream>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "support/conv_oracle.hpp"
#include "support/synthetic.hpp"
#include "ugcvqa/backbone.hpp"
#include "ugcvqa/error.hpp"

using namespace ugcvqa;

namespace {

BackboneConfig tiny() {
  BackboneConfig c;
  c.stem_channels = 8;
  c.blocks = {1, 2, 1, 1};
  c.base_width = 4;
  c.expansion = 4;
  return c;
}

Tensor<float> random_frame(int64_t h, int64_t w, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor<float> t(Shape{3, h, w});
  for (auto& v : t.values()) v = u(rng);
  return t;
}

Tensor<double> unit_oracle(const Tensor<double>& x, const ConvUnit& u, bool relu) {
  return oracle::affine(oracle::conv(x, u.weight.value.cast<double>(), u.stride, u.padding),
                        u.scale.value.cast<double>(), u.shift.value.cast<double>(), relu);
}

// Straight-line forward pass in double from the documented layout.
std::vector<Tensor<double>> pyramid_oracle(const Tensor<float>& frame, const BackboneParams& p) {
  Tensor<double> x = frame.cast<double>();
  Tensor<double> scale(Shape{3}), shift(Shape{3});
  for (int c = 0; c < 3; ++c) {
    scale[c] = 1.0 / p.normalization.std[c];
    shift[c] = -static_cast<double>(p.normalization.mean[c]) / p.normalization.std[c];
  }
  x = oracle::affine(x, scale, shift, false);
  std::vector<Tensor<double>> out;
  x = unit_oracle(x, p.stem, true);
  out.push_back(x);
  x = oracle::max_pool(x, 3, 2, 1);
  for (const auto& stage : p.stages) {
    for (const auto& block : stage) {
      auto b = unit_oracle(x, block.reduce, true);
      b = unit_oracle(b, block.spatial, true);
      b = unit_oracle(b, block.expand, false);
      const auto s = block.has_projection ? unit_oracle(x, block.projection, false) : x;
      for (int64_t i = 0; i < b.numel(); ++i) b[i] = std::max(b[i] + s[i], 0.0);
      x = b;
    }
    out.push_back(x);
  }
  return out;
}

TensorArchive random_pretrained(const BackboneConfig& config, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 0.1f);
  std::uniform_real_distribution<float> pos(0.5f, 2.0f);
  TensorArchive a;
  for (const auto& [name, shape] : pretrained_layout(config)) {
    Tensor<float> t(shape);
    const bool var = name.find("running_var") != std::string::npos;
    for (auto& v : t.values()) v = var ? pos(rng) : n(rng);
    a.put(name, t);
  }
  return a;
}

}  // namespace

TEST(Backbone, DefaultStageShapesAt448) {
  const auto cfg = BackboneConfig::resnet50();
  const std::vector<Shape> fr = {{64, 224, 224}, {256, 112, 112}, {512, 56, 56},
                                 {1024, 28, 28}, {2048, 14, 14}};
  EXPECT_EQ(pyramid_shapes(cfg, 448, 448, TapSet::fr), fr);
  EXPECT_EQ(pyramid_shapes(cfg, 448, 448, TapSet::nr), std::vector<Shape>(fr.begin() + 1, fr.end()));
  EXPECT_EQ(cfg.tap_channels(TapSet::fr), (std::vector<int64_t>{64, 256, 512, 1024, 2048}));
}

TEST(Backbone, IndivisibleInputFailsBeforeCompute) {
  EXPECT_THROW(pyramid_shapes(BackboneConfig::resnet50(), 448, 450, TapSet::nr), ShapeError);
  auto p = BackboneParams::random(tiny(), 1);
  EXPECT_THROW(extract_pyramid(ag::constant(Tensor<float>(Shape{3, 48, 64})), p, TapSet::fr),
               ShapeError);
  EXPECT_THROW(extract_pyramid(ag::constant(Tensor<float>(Shape{1, 64, 64})), p, TapSet::fr),
               ShapeError);
}

TEST(Backbone, ExtractedShapesMatchShapeAlgebra) {
  auto p = BackboneParams::random(tiny(), 2);
  for (auto [h, w] : {std::pair{32, 32}, {64, 32}, {96, 64}, {32, 128}}) {
    for (auto taps : {TapSet::fr, TapSet::nr}) {
      auto pyr = extract_pyramid(ag::constant(random_frame(h, w, 3)), p, taps);
      EXPECT_EQ(pyr.shapes(), pyramid_shapes(tiny(), h, w, taps)) << h << "x" << w;
    }
  }
}

TEST(Backbone, ForwardMatchesDoubleOracle) {
  auto p = BackboneParams::random(tiny(), 4);
  // Nonzero residual scales so every branch contributes.
  p.for_each_param([&](Param<float>& x) {
    if (x.name.find(".bn3.scale") != std::string::npos) x.value.fill(0.7f);
    if (x.name.find(".shift") != std::string::npos) x.value.fill(0.05f);
  });
  const auto frame = random_frame(64, 64, 5);
  const auto got = extract_pyramid(ag::constant(frame), p, TapSet::fr);
  const auto want = pyramid_oracle(frame, p);
  ASSERT_EQ(got.size(), want.size());
  for (size_t s = 0; s < want.size(); ++s) {
    const auto& g = got.stages[s].value();
    ASSERT_EQ(g.shape(), want[s].shape());
    double worst = 0.0, scale = 0.0;
    for (int64_t i = 0; i < g.numel(); ++i) {
      worst = std::max(worst, std::abs(g[i] - want[s][i]));
      scale = std::max(scale, std::abs(want[s][i]));
    }
    EXPECT_LT(worst, 1e-4 * std::max(scale, 1.0)) << "stage " << s;
  }
}

TEST(Backbone, NormalisedZeroInputGivesZeroStem) {
  auto p = BackboneParams::random(tiny(), 6);
  Tensor<float> frame(Shape{3, 32, 32});
  for (int c = 0; c < 3; ++c) {
    for (int64_t k = 0; k < 32 * 32; ++k) frame[c * 1024 + k] = p.normalization.mean[c];
  }
  const auto pyr = extract_pyramid(ag::constant(frame), p, TapSet::fr);
  for (float v : pyr.stages[0].value().values()) EXPECT_NEAR(v, 0.0f, 1e-6f);
}

TEST(Backbone, RandomInitIsSeededAndZeroesResidualBranches) {
  auto a = BackboneParams::random(tiny(), 9), b = BackboneParams::random(tiny(), 9);
  auto c = BackboneParams::random(tiny(), 10);
  std::vector<Tensor<float>> va, vb, vc;
  a.for_each_param([&](Param<float>& x) { va.push_back(x.value); });
  b.for_each_param([&](Param<float>& x) { vb.push_back(x.value); });
  c.for_each_param([&](Param<float>& x) { vc.push_back(x.value); });
  EXPECT_EQ(va, vb);
  EXPECT_NE(va, vc);
  for (const auto& stage : a.stages) {
    for (const auto& block : stage) {
      for (float v : block.expand.scale.value.values()) EXPECT_EQ(v, 0.0f);
    }
  }
}

TEST(Backbone, ParameterNamesAreUnique) {
  const BackboneParams p(BackboneConfig::resnet50());
  std::set<std::string> names;
  size_t count = 0, scalars = 0;
  p.for_each_param([&](const Param<float>& x) {
    names.insert(x.name);
    ++count;
    if (x.name.find(".weight") != std::string::npos) scalars += x.value.numel();
  });
  EXPECT_EQ(names.size(), count);
  // Convolution weights of the 50-layer layout without the classifier.
  EXPECT_EQ(scalars, 23454912u);
}

TEST(Backbone, LoadPretrainedFoldsBatchNorm) {
  const auto cfg = tiny();
  auto archive = random_pretrained(cfg, 3);
  archive.metadata["normalization"] = {{"mean", {0.5, 0.5, 0.5}}, {"std", {0.25, 0.25, 0.25}}};
  const auto p = load_pretrained(archive, cfg);
  EXPECT_EQ(p.stem.weight.value, archive.get("conv1.weight"));
  const auto& g = archive.get("layer2.1.bn2.weight");
  const auto& b = archive.get("layer2.1.bn2.bias");
  const auto& m = archive.get("layer2.1.bn2.running_mean");
  const auto& v = archive.get("layer2.1.bn2.running_var");
  for (int64_t c = 0; c < g.numel(); ++c) {
    const double s = g[c] / std::sqrt(static_cast<double>(v[c]) + 1e-5);
    EXPECT_NEAR(p.stages[1][1].spatial.scale.value[c], s, 1e-6);
    EXPECT_NEAR(p.stages[1][1].spatial.shift.value[c], b[c] - m[c] * s, 1e-6);
  }
  EXPECT_EQ(p.normalization.std[1], 0.25f);
  EXPECT_EQ(p.config().tap_channels(TapSet::fr), (std::vector<int64_t>{8, 16, 32, 64, 128}));
}

TEST(Backbone, LoadPretrainedReportsEveryProblem) {
  const auto cfg = tiny();
  const auto full = random_pretrained(cfg, 3);
  TensorArchive broken;
  for (const auto& [name, t] : full.tensors()) {
    if (name.rfind("layer4.", 0) == 0) continue;  // drop a whole stage
    broken.put(name, name == "conv1.weight" ? Tensor<float>(Shape{8, 3, 3, 3}) : t);
  }
  broken.put("fc.weight", Tensor<float>(Shape{2, 2}));
  try {
    load_pretrained(broken, cfg);
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("layer4.0.conv1.weight"), std::string::npos);
    EXPECT_NE(msg.find("layer4.0.downsample.1.running_var"), std::string::npos);
    EXPECT_NE(msg.find("unexpected (1): fc.weight"), std::string::npos);
    EXPECT_NE(msg.find("conv1.weight expected (8,3,7,7)"), std::string::npos);
  }
}

TEST(Backbone, LoadPretrainedFromFiles) {
  const auto dir = testsupport::fresh_dir("backbone_files");
  const auto cfg = tiny();
  random_pretrained(cfg, 8).write(dir / "weights.bin");
  const auto p = load_pretrained(dir / "weights.bin", cfg);
  EXPECT_EQ(p.config(), cfg);
  std::ofstream(dir / "empty.bin").close();
  EXPECT_THROW(load_pretrained(dir / "empty.bin", cfg), ParseError);
  EXPECT_THROW(load_pretrained(dir / "absent.bin", cfg), ParseError);
}

TEST(Backbone, GradientsReachTheStem) {
  auto p = BackboneParams::random(tiny(), 12);
  auto pyr = extract_pyramid(ag::constant(random_frame(32, 32, 1)), p, TapSet::nr);
  ag::backward(pyr.stages.back());
  double norm = 0.0;
  for (float g : p.stem.weight.grad.values()) norm += std::abs(g);
  EXPECT_GT(norm, 0.0);
}
