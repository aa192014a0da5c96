/*
 *  Copyright 2026 The radseg Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

#pragma once

// On-disk formats: raw little-endian arrays with a JSON sidecar next to them
// (`<file>.json` declaring shape, dtype, byte order and semantic role), plus
// 8-bit PNG previews.

#include "radseg/errors.hpp"
#include "radseg/types.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace radseg::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

template <typename T>
T byteswap_value(T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  std::memcpy(&v, b, sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  if constexpr (std::endian::native == std::endian::big) v = byteswap_value(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if constexpr (std::endian::native == std::endian::big) v = byteswap_value(v);
  return v;
}

template <typename T>
void write_le_array(std::ostream& out, const T* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  } else {
    for (std::size_t i = 0; i < n; ++i) write_le(out, data[i]);
  }
}

template <typename T>
void read_le_array(std::istream& in, T* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < n; ++i) data[i] = byteswap_value(data[i]);
}

/// Path of the sidecar that describes `raw`.
fs::path sidecar_path(const fs::path& raw);

void write_json(const fs::path& path, const json& j);
json read_json(const fs::path& path);

/// A raw array as read back from disk.
template <typename T>
struct RawArray {
  std::vector<Index> shape;
  std::vector<T> values;
  json sidecar;
};

/// dtype: "float32", "uint8" or "complex64" (interleaved re,im float32).
void write_raw_f32(const fs::path& raw, std::span<const float> values, const std::vector<Index>& shape,
                   const std::string& role, const json& meta = json::object(),
                   const std::string& dtype = "float32");
RawArray<float> read_raw_f32(const fs::path& raw, const std::string& dtype = "float32");

void write_raw_u8(const fs::path& raw, std::span<const std::uint8_t> values, const std::vector<Index>& shape,
                  const std::string& role, const json& meta = json::object());
RawArray<std::uint8_t> read_raw_u8(const fs::path& raw);

// Image-level conveniences (values stored as float32).
void write_image(const fs::path& raw, const Image& img, const std::string& role, const json& meta = json::object());
Image read_image(const fs::path& raw, json* sidecar = nullptr);
void write_stack(const fs::path& raw, const std::vector<Image>& planes, const std::string& role,
                 const json& meta = json::object());
std::vector<Image> read_stack(const fs::path& raw, json* sidecar = nullptr);
void write_mask(const fs::path& raw, const Mask& mask, const std::string& role, const json& meta = json::object());
Mask read_mask(const fs::path& raw, json* sidecar = nullptr);

// ----------------------------------------------------------------- previews

struct Window {
  double lo = 0.0, hi = 1.0;
};

/// 1st..99th percentile window.
Window auto_window(const Image& img);

/// Linear window -> 8 bit.
Mask to_u8(const Image& img, Window w);

void write_png_gray(const fs::path& path, const Mask& pixels);
/// `rgb` is height*width*3 bytes, row-major.
void write_png_rgb(const fs::path& path, Index width, Index height, std::span<const std::uint8_t> rgb);

/// Grayscale PNG plus a sidecar recording the window used.
void write_preview(const fs::path& png, const Image& img, const std::string& role);

}  // namespace radseg::io
