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

// Differentiable primitives over single-frame tensors. Feature maps are
// (C, H, W); vectors are (D). Each op validates shapes before computing.

#include <vector>

#include "ugcvqa/autograd.hpp"

namespace ugcvqa::ops {

struct Conv2dSpec {
  int stride = 1;
  int padding = 0;
};

// weight: (O, C, k, k). bias may be undefined.
template <typename T>
ag::Var<T> conv2d(const ag::Var<T>& x, const ag::Var<T>& weight,
                  const ag::Var<T>& bias, Conv2dSpec spec);

// Per-channel y = x * scale[c] + shift[c]; scale and shift are (C).
template <typename T>
ag::Var<T> channel_affine(const ag::Var<T>& x, const ag::Var<T>& scale,
                          const ag::Var<T>& shift);

template <typename T>
ag::Var<T> relu(const ag::Var<T>& x);

// Max pooling with implicit -inf padding.
template <typename T>
ag::Var<T> max_pool2d(const ag::Var<T>& x, int kernel, int stride,
                      int padding);

template <typename T>
ag::Var<T> add(const ag::Var<T>& a, const ag::Var<T>& b);

// y = W x + b, W: (O, D), x: (D), b: (O).
template <typename T>
ag::Var<T> linear(const ag::Var<T>& x, const ag::Var<T>& weight,
                  const ag::Var<T>& bias);

// Flattens and concatenates.
template <typename T>
ag::Var<T> concat(const std::vector<ag::Var<T>>& parts);

// Bit-compatible spatial output size of a strided window.
inline int64_t pooled_extent(int64_t in, int kernel, int stride,
                             int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

}  // namespace ugcvqa::ops
