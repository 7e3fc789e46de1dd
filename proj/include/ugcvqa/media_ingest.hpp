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

// Video/frame-directory decoding, fixed-interval frame sampling,
// resize-and-crop preprocessing and CSV manifests.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ugcvqa/tensor.hpp"

namespace ugcvqa {

enum class Split { train, val, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct VideoRecord {
  std::string media_path;
  std::optional<std::string> reference_path;
  double mos = 0.0;
  Split split = Split::train;
  // Manifest override; when unset the container rate is used.
  std::optional<double> fps;

  bool is_full_reference() const { return reference_path.has_value(); }
};

// RGB frames as (3, H, W) floats in [0, 1], with the sampling timestamps.
struct FrameSequence {
  std::vector<Tensor<float>> frames;
  std::vector<double> timestamps;

  size_t size() const { return frames.size(); }
};

// One sampled position: which decoded frame, and the boundary time it
// stands for.
struct SamplePoint {
  int64_t frame_index = 0;
  double timestamp = 0.0;
};

// For each boundary k * interval (0 <= k < ceil(duration / interval)) pick
// the first frame at or after it, clipped to the last frame. A clip
// shorter than one interval yields a single sample at t = 0.
std::vector<SamplePoint> sample_schedule(int64_t frame_count, double fps,
                                         double interval);

// Decodes a container (via OpenCV/FFmpeg) or a directory of numbered
// images and returns the sampled frames. `fps` overrides the container
// rate and is mandatory for frame directories.
FrameSequence decode_and_sample(const std::string& media_path, double interval,
                                std::optional<double> fps = std::nullopt);

FrameSequence decode_and_sample(const VideoRecord& record, double interval);

// Distorted and reference sequences sampled at identical timestamps.
std::pair<FrameSequence, FrameSequence> decode_and_sample_pair(
    const VideoRecord& record, double interval);

// Reads a single image file into a (3, H, W) [0, 1] RGB tensor.
Tensor<float> read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Tensor<float>& rgb);

// Bilinear resize so that min(H, W) == min_dim; the other side is
// rounded to the nearest integer.
Tensor<float> resize_min_dim(const Tensor<float>& frame, int min_dim);

struct CropOffset {
  int64_t y = 0;
  int64_t x = 0;
  friend bool operator==(const CropOffset&, const CropOffset&) = default;
};

class CropPolicy {
 public:
  static CropPolicy center() { return CropPolicy(false, 0); }
  static CropPolicy random(uint64_t seed) { return CropPolicy(true, seed); }

  bool is_random() const { return random_; }
  uint64_t seed() const { return seed_; }

  CropOffset offset(int64_t height, int64_t width, int crop_size) const;

 private:
  CropPolicy(bool random, uint64_t seed) : random_(random), seed_(seed) {}
  bool random_;
  uint64_t seed_;
};

// Per-video, per-epoch crop seed derived from the master seed.
uint64_t crop_seed(uint64_t master_seed, std::string_view video_id,
                   int64_t epoch);

Tensor<float> crop(const Tensor<float>& frame, CropOffset offset,
                   int crop_size);

Tensor<float> preprocess(const Tensor<float>& frame, int min_dim,
                         const CropPolicy& policy, int crop_size);

// Applies one crop offset to every frame of the sequence.
FrameSequence preprocess_sequence(const FrameSequence& sequence, int min_dim,
                                  const CropPolicy& policy, int crop_size);

// CSV with header media_path,reference_path,mos,split,fps. Relative paths
// are resolved against the manifest's directory.
std::vector<VideoRecord> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<VideoRecord>& records);

}  // namespace ugcvqa
