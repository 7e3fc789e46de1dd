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

// Direct nested-loop convolution and friends over (C, H, W) tensors.

#include <algorithm>
#include <limits>

#include "ugcvqa/tensor.hpp"

namespace oracle {

using ugcvqa::Shape;
using ugcvqa::Tensor;

// weight (O, C, k, k), zero padding, optional per-output bias.
inline Tensor<double> conv(const Tensor<double>& x, const Tensor<double>& w, int stride,
                           int pad, const Tensor<double>* bias = nullptr) {
  const int64_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int64_t o = w.dim(0), k = w.dim(2);
  const int64_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor<double> y(Shape{o, oh, ow});
  for (int64_t oc = 0; oc < o; ++oc) {
    for (int64_t i = 0; i < oh; ++i) {
      for (int64_t j = 0; j < ow; ++j) {
        long double s = bias ? (*bias)[oc] : 0.0;
        for (int64_t ic = 0; ic < c; ++ic) {
          for (int64_t a = 0; a < k; ++a) {
            for (int64_t b = 0; b < k; ++b) {
              const int64_t yy = i * stride - pad + a, xx = j * stride - pad + b;
              if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
              s += w[((oc * c + ic) * k + a) * k + b] * x.at(ic, yy, xx);
            }
          }
        }
        y.at(oc, i, j) = static_cast<double>(s);
      }
    }
  }
  return y;
}

inline Tensor<double> affine(Tensor<double> x, const Tensor<double>& scale,
                             const Tensor<double>& shift, bool relu) {
  const int64_t m = x.dim(1) * x.dim(2);
  for (int64_t c = 0; c < x.dim(0); ++c) {
    for (int64_t k = 0; k < m; ++k) {
      double& v = x[c * m + k];
      v = v * scale[c] + shift[c];
      if (relu) v = std::max(v, 0.0);
    }
  }
  return x;
}

inline Tensor<double> max_pool(const Tensor<double>& x, int k, int stride, int pad) {
  const int64_t h = x.dim(1), w = x.dim(2);
  const int64_t oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
  Tensor<double> y(Shape{x.dim(0), oh, ow});
  for (int64_t c = 0; c < x.dim(0); ++c) {
    for (int64_t i = 0; i < oh; ++i) {
      for (int64_t j = 0; j < ow; ++j) {
        double m = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < k; ++a) {
          for (int b = 0; b < k; ++b) {
            const int64_t yy = i * stride - pad + a, xx = j * stride - pad + b;
            if (yy >= 0 && yy < h && xx >= 0 && xx < w) m = std::max(m, x.at(c, yy, xx));
          }
        }
        y.at(c, i, j) = m;
      }
    }
  }
  return y;
}

}  // namespace oracle
