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

// Named-tensor container used for pretrained weight archives and
// checkpoints.
//
// Layout (all integers little-endian):
//   bytes 0..7    magic "UGCVQAT\0"
//   bytes 8..11   uint32 container version (kArchiveVersion)
//   bytes 12..19  uint64 length L of the JSON header
//   next L bytes  UTF-8 JSON: {"metadata": {...},
//                  "tensors": [{"name", "shape", "dtype", "offset",
//                               "nbytes"}, ...]}
//   remainder     payload; each tensor's raw data at header offset,
//                 relative to the first payload byte.
// dtype is "f32" or "f64"; tensors are always materialised as float.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ugcvqa/tensor.hpp"

namespace ugcvqa {

inline constexpr uint32_t kArchiveVersion = 1;

class TensorArchive {
 public:
  nlohmann::json metadata = nlohmann::json::object();

  void put(const std::string& name, Tensor<float> tensor);
  bool contains(const std::string& name) const;
  const Tensor<float>& get(const std::string& name) const;
  const std::map<std::string, Tensor<float>>& tensors() const {
    return tensors_;
  }
  std::vector<std::string> names() const;

  void write(const std::filesystem::path& path) const;
  static TensorArchive read(const std::filesystem::path& path);

 private:
  std::map<std::string, Tensor<float>> tensors_;
};

}  // namespace ugcvqa
