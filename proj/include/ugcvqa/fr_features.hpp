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

// Full-reference quality features: per-channel texture (mean-based) and
// structure (covariance-based) similarities between reference and
// distorted feature maps, computed globally over each map.
//
// Feature layout (id kFrFeatureLayout): stage-major; within a stage the C
// texture values come first, then the C structure values, channel order
// preserved. Length is 2 * sum(C_i).

#include <span>
#include <string_view>
#include <vector>

#include "ugcvqa/autograd.hpp"
#include "ugcvqa/backbone.hpp"

namespace ugcvqa {

inline constexpr std::string_view kFrFeatureLayout = "fr-stage-major-texture-structure-v1";

enum class VarianceMode { population, sample };

struct SimilarityConstants {
  double c1 = 1e-6;
  double c2 = 1e-6;
  VarianceMode variance = VarianceMode::population;

  void validate() const;
};

struct MapStats {
  double mean = 0.0;
  double var = 0.0;
};

MapStats global_stats(std::span<const double> map,
                      VarianceMode mode = VarianceMode::population);

struct SimilarityPair {
  double texture = 0.0;
  double structure = 0.0;
};

SimilarityPair stage_similarity(std::span<const double> ref_map,
                                std::span<const double> dist_map,
                                const SimilarityConstants& c);

// (C, H, W) x (C, H, W) -> (2C): texture block then structure block.
template <typename T>
ag::Var<T> channel_similarities(const ag::Var<T>& ref, const ag::Var<T>& dist,
                                const SimilarityConstants& c);

template <typename T>
ag::Var<T> fr_feature_vector(std::span<const ag::Var<T>> ref_stages,
                             std::span<const ag::Var<T>> dist_stages,
                             const SimilarityConstants& c);

ag::Var<float> fr_feature_vector(const FramePyramid& ref, const FramePyramid& dist,
                                 const SimilarityConstants& c);

}  // namespace ugcvqa
