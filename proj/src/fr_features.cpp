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
#include "ugcvqa/fr_features.hpp"

#include <cmath>

#include "ugcvqa/ops.hpp"

namespace ugcvqa {
namespace {

template <typename T>
using NodePtr = std::shared_ptr<ag::Node<T>>;

double variance_divisor(int64_t count, VarianceMode mode) {
  if (mode == VarianceMode::population) return static_cast<double>(count);
  if (count < 2) throw ShapeError("sample variance needs at least two elements");
  return static_cast<double>(count - 1);
}

// Moments of one channel pair.
struct PairMoments {
  double mean_r, mean_d, var_r, var_d, cov;
};

template <typename T>
PairMoments pair_moments(const T* r, const T* d, int64_t m, double divisor) {
  double sr = 0.0, sd = 0.0;
  for (int64_t k = 0; k < m; ++k) {
    sr += r[k];
    sd += d[k];
  }
  const double mr = sr / static_cast<double>(m), md = sd / static_cast<double>(m);
  double vr = 0.0, vd = 0.0, cv = 0.0;
  for (int64_t k = 0; k < m; ++k) {
    const double a = r[k] - mr, b = d[k] - md;
    vr += a * a;
    vd += b * b;
    cv += a * b;
  }
  return {mr, md, vr / divisor, vd / divisor, cv / divisor};
}

}  // namespace

void SimilarityConstants::validate() const {
  if (!(c1 > 0.0) || !(c2 > 0.0)) {
    throw ConfigError("similarity constants c1 and c2 must be positive");
  }
}

MapStats global_stats(std::span<const double> map, VarianceMode mode) {
  if (map.empty()) throw ShapeError("global_stats of an empty map");
  const auto m = static_cast<int64_t>(map.size());
  double sum = 0.0;
  for (double v : map) sum += v;
  const double mean = sum / static_cast<double>(m);
  double ss = 0.0;
  for (double v : map) ss += (v - mean) * (v - mean);
  return {mean, ss / variance_divisor(m, mode)};
}

SimilarityPair stage_similarity(std::span<const double> ref_map,
                                std::span<const double> dist_map,
                                const SimilarityConstants& c) {
  if (ref_map.size() != dist_map.size() || ref_map.empty()) {
    throw ShapeError("stage_similarity needs two non-empty maps of equal size");
  }
  const auto m = static_cast<int64_t>(ref_map.size());
  const auto mo = pair_moments(ref_map.data(), dist_map.data(), m,
                               variance_divisor(m, c.variance));
  return {(2.0 * mo.mean_r * mo.mean_d + c.c1) /
              (mo.mean_r * mo.mean_r + mo.mean_d * mo.mean_d + c.c1),
          (2.0 * mo.cov + c.c2) / (mo.var_r + mo.var_d + c.c2)};
}

template <typename T>
ag::Var<T> channel_similarities(const ag::Var<T>& ref, const ag::Var<T>& dist,
                                const SimilarityConstants& c) {
  if (ref.shape() != dist.shape() || ref.shape().size() != 3) {
    throw ShapeError("similarity maps differ: " + shape_str(ref.shape()) + " vs " +
                     shape_str(dist.shape()));
  }
  const int64_t channels = ref.dim(0);
  const int64_t m = ref.dim(1) * ref.dim(2);
  const double divisor = variance_divisor(m, c.variance);
  const double c1 = c.c1, c2 = c.c2;

  std::vector<PairMoments> moments(static_cast<size_t>(channels));
  Tensor<T> out(Shape{2 * channels});
  const T* rv = ref.value().data();
  const T* dv = dist.value().data();
  for (int64_t ch = 0; ch < channels; ++ch) {
    const auto mo = pair_moments(rv + ch * m, dv + ch * m, m, divisor);
    moments[static_cast<size_t>(ch)] = mo;
    out[ch] = static_cast<T>((2.0 * mo.mean_r * mo.mean_d + c1) /
                             (mo.mean_r * mo.mean_r + mo.mean_d * mo.mean_d + c1));
    out[channels + ch] = static_cast<T>((2.0 * mo.cov + c2) / (mo.var_r + mo.var_d + c2));
  }

  return ag::make_op<T>(
      std::move(out), {ref, dist},
      [=, moments = std::move(moments)](const Tensor<T>& g,
                                        std::span<const NodePtr<T>> in) {
        const T* r = in[0]->value().data();
        const T* d = in[1]->value().data();
        for (int64_t ch = 0; ch < channels; ++ch) {
          const auto& mo = moments[static_cast<size_t>(ch)];
          const double dt = mo.mean_r * mo.mean_r + mo.mean_d * mo.mean_d + c1;
          const double t = (2.0 * mo.mean_r * mo.mean_d + c1) / dt;
          const double ds = mo.var_r + mo.var_d + c2;
          const double s = (2.0 * mo.cov + c2) / ds;
          const double gt = g[ch], gs = g[channels + ch];
          // d t / d x_k is constant over the map; d s / d x_k is affine in x_k.
          const double tex_d = gt * 2.0 * (mo.mean_r - t * mo.mean_d) / (dt * m);
          const double tex_r = gt * 2.0 * (mo.mean_d - t * mo.mean_r) / (dt * m);
          const double kstr = gs * 2.0 / (divisor * ds);
          const T* rc = r + ch * m;
          const T* dc = d + ch * m;
          if (in[1]->requires_grad) {
            T* gd = in[1]->grad().data() + ch * m;
            for (int64_t k = 0; k < m; ++k) {
              const double a = rc[k] - mo.mean_r, b = dc[k] - mo.mean_d;
              gd[k] += static_cast<T>(tex_d + kstr * (a - s * b));
            }
          }
          if (in[0]->requires_grad) {
            T* gr = in[0]->grad().data() + ch * m;
            for (int64_t k = 0; k < m; ++k) {
              const double a = rc[k] - mo.mean_r, b = dc[k] - mo.mean_d;
              gr[k] += static_cast<T>(tex_r + kstr * (b - s * a));
            }
          }
        }
      });
}

template <typename T>
ag::Var<T> fr_feature_vector(std::span<const ag::Var<T>> ref_stages,
                             std::span<const ag::Var<T>> dist_stages,
                             const SimilarityConstants& c) {
  c.validate();
  if (ref_stages.size() != dist_stages.size()) {
    throw ShapeError("pyramids have different stage counts: " +
                     std::to_string(ref_stages.size()) + " vs " +
                     std::to_string(dist_stages.size()));
  }
  std::vector<ag::Var<T>> parts;
  for (size_t i = 0; i < ref_stages.size(); ++i) {
    if (ref_stages[i].shape() != dist_stages[i].shape()) {
      throw ShapeError("pyramids differ at stage " + std::to_string(i + 1) + ": " +
                       shape_str(ref_stages[i].shape()) + " vs " +
                       shape_str(dist_stages[i].shape()));
    }
    parts.push_back(channel_similarities(ref_stages[i], dist_stages[i], c));
  }
  return ops::concat(parts);
}

ag::Var<float> fr_feature_vector(const FramePyramid& ref, const FramePyramid& dist,
                                 const SimilarityConstants& c) {
  return fr_feature_vector<float>(std::span<const ag::Var<float>>(ref.stages),
                                  std::span<const ag::Var<float>>(dist.stages), c);
}

template ag::Var<float> channel_similarities(const ag::Var<float>&, const ag::Var<float>&,
                                             const SimilarityConstants&);
template ag::Var<double> channel_similarities(const ag::Var<double>&, const ag::Var<double>&,
                                              const SimilarityConstants&);
template ag::Var<float> fr_feature_vector(std::span<const ag::Var<float>>,
                                          std::span<const ag::Var<float>>,
                                          const SimilarityConstants&);
template ag::Var<double> fr_feature_vector(std::span<const ag::Var<double>>,
                                           std::span<const ag::Var<double>>,
                                           const SimilarityConstants&);

}  // namespace ugcvqa
