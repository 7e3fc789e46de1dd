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
#include "ugcvqa/tensor_archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace ugcvqa {
namespace {

constexpr char kMagic[8] = {'U', 'G', 'C', 'V', 'Q', 'A', 'T', '\0'};

static_assert(std::endian::native == std::endian::little,
              "archive IO assumes a little-endian host");

template <typename U>
void write_pod(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_pod(std::istream& is, const std::string& file) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(U))) {
    throw ParseError(file + ": truncated archive header");
  }
  return v;
}

}  // namespace

void TensorArchive::put(const std::string& name, Tensor<float> tensor) {
  tensors_.insert_or_assign(name, std::move(tensor));
}

bool TensorArchive::contains(const std::string& name) const {
  return tensors_.count(name) != 0;
}

const Tensor<float>& TensorArchive::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ParseError("archive has no tensor " + name);
  return it->second;
}

std::vector<std::string> TensorArchive::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [name, _] : tensors_) out.push_back(name);
  return out;
}

void TensorArchive::write(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["metadata"] = metadata;
  header["tensors"] = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors_) {
    const uint64_t nbytes = static_cast<uint64_t>(t.numel()) * sizeof(float);
    header["tensors"].push_back({{"name", name},
                                 {"shape", t.shape()},
                                 {"dtype", "f32"},
                                 {"offset", offset},
                                 {"nbytes", nbytes}});
    offset += nbytes;
  }
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(os, kArchiveVersion);
  write_pod<uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : tensors_) {
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!os) throw Error("failed writing " + path.string());
}

TensorArchive TensorArchive::read(const std::filesystem::path& path) {
  const std::string file = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(file + ": cannot open archive");

  char magic[8] = {};
  if (!is.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw ParseError(file + ": not a tensor archive (bad magic)");
  }
  const auto version = read_pod<uint32_t>(is, file);
  if (version != kArchiveVersion) {
    throw ParseError(file + ": unsupported archive version " +
                     std::to_string(version));
  }
  const auto header_len = read_pod<uint64_t>(is, file);
  const auto file_size = std::filesystem::file_size(path);
  if (header_len > file_size - static_cast<uint64_t>(is.tellg())) {
    throw ParseError(file + ": truncated archive header");
  }
  std::string text(header_len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw ParseError(file + ": truncated archive header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(file + ": malformed archive header: " + e.what());
  }
  const std::streamoff payload_start = is.tellg();

  TensorArchive archive;
  archive.metadata = header.value("metadata", nlohmann::json::object());
  try {
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto dtype = entry.at("dtype").get<std::string>();
      const auto offset = entry.at("offset").get<uint64_t>();
      const auto nbytes = entry.at("nbytes").get<uint64_t>();
      for (int64_t d : shape) {
        if (d < 0) throw ParseError(file + ": tensor " + name + " has a negative dimension");
      }
      const int64_t count = shape_numel(shape);
      const size_t width = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
      if (width == 0) {
        throw ParseError(file + ": tensor " + name + " has unsupported dtype " +
                         dtype);
      }
      if (nbytes != static_cast<uint64_t>(count) * width) {
        throw ParseError(file + ": tensor " + name +
                         " byte size does not match its shape");
      }
      is.seekg(payload_start + static_cast<std::streamoff>(offset));
      Tensor<float> t(shape);
      if (width == 4) {
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(nbytes));
      } else {
        std::vector<double> tmp(static_cast<size_t>(count));
        is.read(reinterpret_cast<char*>(tmp.data()),
                static_cast<std::streamsize>(nbytes));
        for (int64_t i = 0; i < count; ++i) {
          t[i] = static_cast<float>(tmp[static_cast<size_t>(i)]);
        }
      }
      if (!is) throw ParseError(file + ": truncated data for tensor " + name);
      archive.put(name, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(file + ": malformed tensor manifest: " + e.what());
  }
  return archive;
}

}  // namespace ugcvqa
