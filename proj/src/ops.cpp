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
#include "ugcvqa/ops.hpp"

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <limits>

#include "blas.hpp"

namespace ugcvqa::ops {
namespace {

template <typename T>
using NodePtr = std::shared_ptr<ag::Node<T>>;

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

// (C, H, W) -> (C*k*k, Ho*Wo), zero padded.
template <typename T>
void im2col(const T* x, int64_t channels, int64_t height, int64_t width,
            int kernel, int stride, int pad, int64_t out_h, int64_t out_w,
            T* col) {
  for (int64_t c = 0; c < channels; ++c) {
    const T* plane = x + c * height * width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        T* row = col + ((c * kernel + ky) * kernel + kx) * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          T* dst = row + oy * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + out_w, T{0});
            continue;
          }
          const T* src = plane + iy * width;
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < width) ? src[ix] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int64_t channels, int64_t height, int64_t width,
                int kernel, int stride, int pad, int64_t out_h, int64_t out_w,
                T* x) {
  for (int64_t c = 0; c < channels; ++c) {
    T* plane = x + c * height * width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const T* row = col + ((c * kernel + ky) * kernel + kx) * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) continue;
          const T* src = row + oy * out_w;
          T* dst = plane + iy * width;
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
ag::Var<T> conv2d(const ag::Var<T>& x, const ag::Var<T>& weight,
                  const ag::Var<T>& bias, Conv2dSpec spec) {
  require(x.shape().size() == 3, "conv2d expects a (C,H,W) input, got " +
                                     shape_str(x.shape()));
  require(weight.shape().size() == 4 && weight.dim(2) == weight.dim(3),
          "conv2d expects a square (O,C,k,k) kernel, got " +
              shape_str(weight.shape()));
  const int64_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  const int64_t out_c = weight.dim(0);
  const int kernel = static_cast<int>(weight.dim(2));
  require(weight.dim(1) == channels,
          "conv2d channel mismatch: input " + shape_str(x.shape()) +
              " kernel " + shape_str(weight.shape()));
  if (bias.defined()) {
    require(bias.shape() == Shape{out_c}, "conv2d bias shape mismatch");
  }
  const int stride = spec.stride, pad = spec.padding;
  const int64_t out_h = pooled_extent(height, kernel, stride, pad);
  const int64_t out_w = pooled_extent(width, kernel, stride, pad);
  require(out_h > 0 && out_w > 0, "conv2d output would be empty for input " +
                                      shape_str(x.shape()));

  const int64_t spatial = out_h * out_w;
  const int64_t patch = channels * kernel * kernel;
  const bool pointwise = kernel == 1 && stride == 1 && pad == 0;

  Tensor<T> out(Shape{out_c, out_h, out_w});
  Tensor<T> col_buffer;
  const T* col = x.value().data();
  if (!pointwise) {
    col_buffer = Tensor<T>(Shape{patch, spatial});
    im2col(x.value().data(), channels, height, width, kernel, stride, pad,
           out_h, out_w, col_buffer.data());
    col = col_buffer.data();
  }
  blas::gemm(false, false, static_cast<int>(out_c), static_cast<int>(spatial),
             static_cast<int>(patch), T{1}, weight.value().data(),
             static_cast<int>(patch), col, static_cast<int>(spatial), T{0},
             out.data(), static_cast<int>(spatial));
  if (bias.defined()) {
    const T* b = bias.value().data();
    for (int64_t o = 0; o < out_c; ++o) {
      T* dst = out.data() + o * spatial;
      for (int64_t s = 0; s < spatial; ++s) dst[s] += b[o];
    }
  }

  std::vector<ag::Var<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return ag::make_op<T>(
      std::move(out), std::move(inputs),
      [=](const Tensor<T>& g, std::span<const NodePtr<T>> in) {
        const Tensor<T>& xv = in[0]->value();
        const Tensor<T>& wv = in[1]->value();
        const int m = static_cast<int>(out_c), n = static_cast<int>(spatial),
                  k = static_cast<int>(patch);
        Tensor<T> col_local;
        const T* cols = xv.data();
        if (!pointwise && in[1]->requires_grad) {
          col_local = Tensor<T>(Shape{patch, spatial});
          im2col(xv.data(), channels, height, width, kernel, stride, pad,
                 out_h, out_w, col_local.data());
          cols = col_local.data();
        }
        if (in[1]->requires_grad) {
          blas::gemm(false, true, m, k, n, T{1}, g.data(), n, cols, n, T{1},
                     in[1]->grad().data(), k);
        }
        if (in.size() > 2 && in[2]->requires_grad) {
          T* gb = in[2]->grad().data();
          for (int64_t o = 0; o < out_c; ++o) {
            const T* src = g.data() + o * spatial;
            T acc{0};
            for (int64_t s = 0; s < spatial; ++s) acc += src[s];
            gb[o] += acc;
          }
        }
        if (in[0]->requires_grad) {
          if (pointwise) {
            blas::gemm(true, false, k, n, m, T{1}, wv.data(), k, g.data(), n,
                       T{1}, in[0]->grad().data(), n);
          } else {
            Tensor<T> dcol(Shape{patch, spatial});
            blas::gemm(true, false, k, n, m, T{1}, wv.data(), k, g.data(), n,
                       T{0}, dcol.data(), n);
            col2im_add(dcol.data(), channels, height, width, kernel, stride,
                       pad, out_h, out_w, in[0]->grad().data());
          }
        }
      });
}

template <typename T>
ag::Var<T> channel_affine(const ag::Var<T>& x, const ag::Var<T>& scale,
                          const ag::Var<T>& shift) {
  require(x.shape().size() == 3, "channel_affine expects (C,H,W)");
  const int64_t channels = x.dim(0);
  const int64_t spatial = x.dim(1) * x.dim(2);
  require(scale.shape() == Shape{channels} && shift.shape() == Shape{channels},
          "channel_affine parameter shape mismatch for input " +
              shape_str(x.shape()));
  Tensor<T> out(x.shape());
  const T* xs = x.value().data();
  const T* a = scale.value().data();
  const T* b = shift.value().data();
  for (int64_t c = 0; c < channels; ++c) {
    const T* src = xs + c * spatial;
    T* dst = out.data() + c * spatial;
    for (int64_t s = 0; s < spatial; ++s) dst[s] = src[s] * a[c] + b[c];
  }
  return ag::make_op<T>(
      std::move(out), {x, scale, shift},
      [=](const Tensor<T>& g, std::span<const NodePtr<T>> in) {
        const T* xv = in[0]->value().data();
        const T* av = in[1]->value().data();
        for (int64_t c = 0; c < channels; ++c) {
          const T* gs = g.data() + c * spatial;
          if (in[0]->requires_grad) {
            T* gx = in[0]->grad().data() + c * spatial;
            for (int64_t s = 0; s < spatial; ++s) gx[s] += gs[s] * av[c];
          }
          if (in[1]->requires_grad) {
            const T* xc = xv + c * spatial;
            T acc{0};
            for (int64_t s = 0; s < spatial; ++s) acc += gs[s] * xc[s];
            in[1]->grad()[c] += acc;
          }
          if (in[2]->requires_grad) {
            T acc{0};
            for (int64_t s = 0; s < spatial; ++s) acc += gs[s];
            in[2]->grad()[c] += acc;
          }
        }
      });
}

template <typename T>
ag::Var<T> relu(const ag::Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* src = x.value().data();
  for (int64_t i = 0; i < out.numel(); ++i) {
    // NaN passes through so a corrupt weight surfaces in the loss.
    out[i] = src[i] < T{0} ? T{0} : src[i];
  }
  return ag::make_op<T>(
      std::move(out), {x},
      [](const Tensor<T>& g, std::span<const NodePtr<T>> in) {
        const T* xv = in[0]->value().data();
        T* gx = in[0]->grad().data();
        for (int64_t i = 0; i < g.numel(); ++i) {
          if (xv[i] > T{0}) gx[i] += g[i];
        }
      });
}

template <typename T>
ag::Var<T> max_pool2d(const ag::Var<T>& x, int kernel, int stride,
                      int padding) {
  require(x.shape().size() == 3, "max_pool2d expects (C,H,W)");
  const int64_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  const int64_t out_h = pooled_extent(height, kernel, stride, padding);
  const int64_t out_w = pooled_extent(width, kernel, stride, padding);
  require(out_h > 0 && out_w > 0, "max_pool2d output would be empty");
  Tensor<T> out(Shape{channels, out_h, out_w});
  std::vector<int32_t> argmax(static_cast<size_t>(out.numel()));
  const T* xs = x.value().data();
  for (int64_t c = 0; c < channels; ++c) {
    for (int64_t oy = 0; oy < out_h; ++oy) {
      for (int64_t ox = 0; ox < out_w; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        int32_t best_idx = -1;
        for (int ky = 0; ky < kernel; ++ky) {
          const int64_t iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= height) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int64_t ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= width) continue;
            const int64_t idx = (c * height + iy) * width + ix;
            if (xs[idx] > best || best_idx < 0 || std::isnan(xs[idx])) {
              best = xs[idx];
              best_idx = static_cast<int32_t>(idx);
              if (std::isnan(best)) { ky = kernel; break; }
            }
          }
        }
        const int64_t o = (c * out_h + oy) * out_w + ox;
        out[o] = best;
        argmax[static_cast<size_t>(o)] = best_idx;
      }
    }
  }
  return ag::make_op<T>(
      std::move(out), {x},
      [argmax = std::move(argmax)](const Tensor<T>& g,
                                   std::span<const NodePtr<T>> in) {
        T* gx = in[0]->grad().data();
        for (int64_t i = 0; i < g.numel(); ++i) {
          gx[argmax[static_cast<size_t>(i)]] += g[i];
        }
      });
}

template <typename T>
ag::Var<T> add(const ag::Var<T>& a, const ag::Var<T>& b) {
  require(a.shape() == b.shape(), "add shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
  Tensor<T> out(a.value());
  out += b.value();
  return ag::make_op<T>(
      std::move(out), {a, b},
      [](const Tensor<T>& g, std::span<const NodePtr<T>> in) {
        for (const auto& node : in) {
          if (node->requires_grad) node->grad() += g;
        }
      });
}

template <typename T>
ag::Var<T> linear(const ag::Var<T>& x, const ag::Var<T>& weight,
                  const ag::Var<T>& bias) {
  require(weight.shape().size() == 2, "linear expects a (O,D) weight");
  const int64_t out_dim = weight.dim(0), in_dim = weight.dim(1);
  require(x.value().numel() == in_dim,
          "linear input dimension " + std::to_string(x.value().numel()) +
              " does not match weight " + shape_str(weight.shape()));
  require(bias.shape() == Shape{out_dim}, "linear bias shape mismatch");
  Tensor<T> out(bias.value());
  const T* w = weight.value().data();
  const T* xs = x.value().data();
  for (int64_t o = 0; o < out_dim; ++o) {
    const T* row = w + o * in_dim;
    T acc{0};
    for (int64_t d = 0; d < in_dim; ++d) acc += row[d] * xs[d];
    out[o] += acc;
  }
  return ag::make_op<T>(
      std::move(out), {x, weight, bias},
      [=](const Tensor<T>& g, std::span<const NodePtr<T>> in) {
        const T* xv = in[0]->value().data();
        const T* wv = in[1]->value().data();
        for (int64_t o = 0; o < out_dim; ++o) {
          const T go = g[o];
          if (go == T{0}) continue;
          if (in[1]->requires_grad) {
            T* gw = in[1]->grad().data() + o * in_dim;
            for (int64_t d = 0; d < in_dim; ++d) gw[d] += go * xv[d];
          }
          if (in[0]->requires_grad) {
            T* gx = in[0]->grad().data();
            const T* row = wv + o * in_dim;
            for (int64_t d = 0; d < in_dim; ++d) gx[d] += go * row[d];
          }
        }
        if (in[2]->requires_grad) in[2]->grad() += g;
      });
}

template <typename T>
ag::Var<T> concat(const std::vector<ag::Var<T>>& parts) {
  int64_t total = 0;
  for (const auto& p : parts) total += p.value().numel();
  Tensor<T> out(Shape{total});
  std::vector<int64_t> offsets;
  int64_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    std::copy(p.value().data(), p.value().data() + p.value().numel(),
              out.data() + offset);
    offset += p.value().numel();
  }
  return ag::make_op<T>(
      std::move(out), parts,
      [offsets = std::move(offsets)](const Tensor<T>& g,
                                     std::span<const NodePtr<T>> in) {
        for (size_t i = 0; i < in.size(); ++i) {
          if (!in[i]->requires_grad) continue;
          Tensor<T>& gi = in[i]->grad();
          const T* src = g.data() + offsets[i];
          for (int64_t j = 0; j < gi.numel(); ++j) gi[j] += src[j];
        }
      });
}

#define UGCVQA_INSTANTIATE_OPS(T)                                         \
  template ag::Var<T> conv2d(const ag::Var<T>&, const ag::Var<T>&,        \
                             const ag::Var<T>&, Conv2dSpec);              \
  template ag::Var<T> channel_affine(const ag::Var<T>&, const ag::Var<T>&, \
                                     const ag::Var<T>&);                  \
  template ag::Var<T> relu(const ag::Var<T>&);                            \
  template ag::Var<T> max_pool2d(const ag::Var<T>&, int, int, int);       \
  template ag::Var<T> add(const ag::Var<T>&, const ag::Var<T>&);          \
  template ag::Var<T> linear(const ag::Var<T>&, const ag::Var<T>&,        \
                             const ag::Var<T>&);                          \
  template ag::Var<T> concat(const std::vector<ag::Var<T>>&);

UGCVQA_INSTANTIATE_OPS(float)
UGCVQA_INSTANTIATE_OPS(double)

#undef UGCVQA_INSTANTIATE_OPS

}  // namespace ugcvqa::ops
