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

#include <cmath>
#include <vector>

#include "ugcvqa/autograd.hpp"

namespace ugcvqa {

// First-order adaptive-moment optimiser over a fixed parameter list.
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(std::vector<Param<float>*> params, Options options)
      : params_(std::move(params)), options_(options) {
    for (auto* p : params_) {
      first_.emplace_back(p->value.shape());
      second_.emplace_back(p->value.shape());
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step(double learning_rate) {
    ++steps_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Param<float>& p = *params_[i];
      if (!p.trainable) continue;
      float* value = p.value.data();
      const float* grad = p.grad.data();
      float* m = first_[i].data();
      float* v = second_[i].data();
      for (int64_t k = 0; k < p.value.numel(); ++k) {
        const double g = grad[k];
        m[k] = static_cast<float>(options_.beta1 * m[k] + (1.0 - options_.beta1) * g);
        v[k] = static_cast<float>(options_.beta2 * v[k] + (1.0 - options_.beta2) * g * g);
        const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + options_.eps);
        value[k] = static_cast<float>(value[k] - learning_rate * update);
      }
    }
  }

  int64_t steps() const { return steps_; }

 private:
  std::vector<Param<float>*> params_;
  Options options_;
  std::vector<Tensor<float>> first_;
  std::vector<Tensor<float>> second_;
  int64_t steps_ = 0;
};

}  // namespace ugcvqa
