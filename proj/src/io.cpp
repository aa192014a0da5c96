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

#include "radseg/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

namespace radseg::io {

fs::path sidecar_path(const fs::path& raw) { return fs::path(raw.string() + ".json"); }

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw DataError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

namespace {

std::size_t count_of(const std::vector<Index>& shape) {
  std::size_t n = 1;
  for (Index d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

json make_sidecar(const fs::path& raw, const std::vector<Index>& shape, const std::string& dtype,
                  const std::string& role, const json& meta) {
  return {{"file", raw.filename().string()}, {"shape", shape},  {"dtype", dtype},
          {"byte_order", "little"},          {"role", role},    {"meta", meta}};
}

json load_sidecar(const fs::path& raw, const std::string& dtype) {
  const auto side = sidecar_path(raw);
  if (!fs::exists(side)) throw DataError("missing sidecar " + side.string());
  json j = read_json(side);
  if (j.value("dtype", "") != dtype)
    throw DataError(side.string() + ": expected dtype " + dtype + ", found " + j.value("dtype", "?"));
  if (j.value("byte_order", "") != "little") throw DataError(side.string() + ": unsupported byte order");
  return j;
}

}  // namespace

void write_raw_f32(const fs::path& raw, std::span<const float> values, const std::vector<Index>& shape,
                   const std::string& role, const json& meta, const std::string& dtype) {
  const std::size_t per = dtype == "complex64" ? 2 : 1;
  if (values.size() != count_of(shape) * per) throw ShapeError("write_raw_f32: value count vs shape");
  std::ofstream out(raw, std::ios::binary);
  if (!out) throw DataError("cannot write " + raw.string());
  write_le_array(out, values.data(), values.size());
  if (!out) throw DataError("failed writing " + raw.string());
  write_json(sidecar_path(raw), make_sidecar(raw, shape, dtype, role, meta));
}

RawArray<float> read_raw_f32(const fs::path& raw, const std::string& dtype) {
  RawArray<float> a;
  a.sidecar = load_sidecar(raw, dtype);
  a.shape = a.sidecar.at("shape").get<std::vector<Index>>();
  a.values.resize(count_of(a.shape) * (dtype == "complex64" ? 2 : 1));
  std::ifstream in(raw, std::ios::binary);
  if (!in) throw DataError("cannot read " + raw.string());
  read_le_array(in, a.values.data(), a.values.size());
  if (!in) throw DataError("truncated raw file " + raw.string());
  return a;
}

void write_raw_u8(const fs::path& raw, std::span<const std::uint8_t> values, const std::vector<Index>& shape,
                  const std::string& role, const json& meta) {
  if (values.size() != count_of(shape)) throw ShapeError("write_raw_u8: value count vs shape");
  std::ofstream out(raw, std::ios::binary);
  if (!out) throw DataError("cannot write " + raw.string());
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size()));
  if (!out) throw DataError("failed writing " + raw.string());
  write_json(sidecar_path(raw), make_sidecar(raw, shape, "uint8", role, meta));
}

RawArray<std::uint8_t> read_raw_u8(const fs::path& raw) {
  RawArray<std::uint8_t> a;
  a.sidecar = load_sidecar(raw, "uint8");
  a.shape = a.sidecar.at("shape").get<std::vector<Index>>();
  a.values.resize(count_of(a.shape));
  std::ifstream in(raw, std::ios::binary);
  if (!in) throw DataError("cannot read " + raw.string());
  in.read(reinterpret_cast<char*>(a.values.data()), static_cast<std::streamsize>(a.values.size()));
  if (!in) throw DataError("truncated raw file " + raw.string());
  return a;
}

void write_image(const fs::path& raw, const Image& img, const std::string& role, const json& meta) {
  const Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f = img.cast<float>();
  write_raw_f32(raw, {f.data(), static_cast<std::size_t>(f.size())}, {img.rows(), img.cols()}, role, meta);
}

Image read_image(const fs::path& raw, json* sidecar) {
  auto a = read_raw_f32(raw);
  if (a.shape.size() != 2) throw DataError(raw.string() + ": expected a 2-D image");
  Image img(a.shape[0], a.shape[1]);
  for (Index i = 0; i < img.size(); ++i) img.data()[i] = a.values[static_cast<std::size_t>(i)];
  if (sidecar) *sidecar = std::move(a.sidecar);
  return img;
}

void write_stack(const fs::path& raw, const std::vector<Image>& planes, const std::string& role, const json& meta) {
  if (planes.empty()) throw ShapeError("write_stack: no planes");
  const Index h = planes[0].rows(), w = planes[0].cols();
  std::vector<float> buf;
  buf.reserve(planes.size() * static_cast<std::size_t>(h * w));
  for (const auto& p : planes) {
    if (p.rows() != h || p.cols() != w) throw ShapeError("write_stack: planes differ in size");
    for (Index i = 0; i < p.size(); ++i) buf.push_back(static_cast<float>(p.data()[i]));
  }
  write_raw_f32(raw, buf, {static_cast<Index>(planes.size()), h, w}, role, meta);
}

std::vector<Image> read_stack(const fs::path& raw, json* sidecar) {
  auto a = read_raw_f32(raw);
  if (a.shape.size() != 3) throw DataError(raw.string() + ": expected a 3-D stack");
  std::vector<Image> planes;
  const Index h = a.shape[1], w = a.shape[2];
  for (Index p = 0; p < a.shape[0]; ++p) {
    Image img(h, w);
    for (Index i = 0; i < h * w; ++i) img.data()[i] = a.values[static_cast<std::size_t>(p * h * w + i)];
    planes.push_back(std::move(img));
  }
  if (sidecar) *sidecar = std::move(a.sidecar);
  return planes;
}

void write_mask(const fs::path& raw, const Mask& mask, const std::string& role, const json& meta) {
  write_raw_u8(raw, {mask.data(), static_cast<std::size_t>(mask.size())}, {mask.rows(), mask.cols()}, role, meta);
}

Mask read_mask(const fs::path& raw, json* sidecar) {
  auto a = read_raw_u8(raw);
  if (a.shape.size() != 2) throw DataError(raw.string() + ": expected a 2-D mask");
  Mask m(a.shape[0], a.shape[1]);
  std::copy(a.values.begin(), a.values.end(), m.data());
  if (sidecar) *sidecar = std::move(a.sidecar);
  return m;
}

// ----------------------------------------------------------------- previews

Window auto_window(const Image& img) {
  std::vector<double> v(img.data(), img.data() + img.size());
  std::sort(v.begin(), v.end());
  auto at = [&](double q) { return v[static_cast<std::size_t>(q * static_cast<double>(v.size() - 1))]; };
  Window w{at(0.01), at(0.99)};
  if (!(w.hi > w.lo)) w.hi = w.lo + 1.0;
  return w;
}

Mask to_u8(const Image& img, Window w) {
  const double scale = 255.0 / (w.hi - w.lo);
  return ((img - w.lo) * scale).round().max(0.0).min(255.0).cast<std::uint8_t>();
}

namespace {

void put_be32(std::string& s, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) s.push_back(static_cast<char>((v >> shift) & 0xff));
}

void put_chunk(std::ofstream& out, const char* type, const std::string& payload) {
  std::string len;
  put_be32(len, static_cast<std::uint32_t>(payload.size()));
  out.write(len.data(), 4);
  std::string body(type, 4);
  body += payload;
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  std::string crc;
  put_be32(crc, static_cast<std::uint32_t>(
                    ::crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
  out.write(crc.data(), 4);
}

void write_png(const fs::path& path, Index width, Index height, int channels, const std::uint8_t* pixels) {
  std::string raw;
  const std::size_t row = static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
  for (Index y = 0; y < height; ++y) {
    raw.push_back('\0');  // filter: none
    raw.append(reinterpret_cast<const char*>(pixels) + static_cast<std::size_t>(y) * row, row);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(bound, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &bound, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw DataError("PNG compression failed for " + path.string());
  packed.resize(bound);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.write(reinterpret_cast<const char*>(sig), 8);
  std::string ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(width));
  put_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr += static_cast<char>(8);                        // bit depth
  ihdr += static_cast<char>(channels == 3 ? 2 : 0);    // colour type
  ihdr += std::string(3, '\0');                        // compression, filter, interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", packed);
  put_chunk(out, "IEND", "");
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace

void write_png_gray(const fs::path& path, const Mask& pixels) {
  write_png(path, pixels.cols(), pixels.rows(), 1, pixels.data());
}

void write_png_rgb(const fs::path& path, Index width, Index height, std::span<const std::uint8_t> rgb) {
  if (rgb.size() != static_cast<std::size_t>(width * height * 3)) throw ShapeError("write_png_rgb: buffer size");
  write_png(path, width, height, 3, rgb.data());
}

void write_preview(const fs::path& png, const Image& img, const std::string& role) {
  const Window w = auto_window(img);
  write_png_gray(png, to_u8(img, w));
  write_json(sidecar_path(png), {{"file", png.filename().string()},
                                 {"role", role},
                                 {"window", {{"lo", w.lo}, {"hi", w.hi}}},
                                 {"level", 0.5 * (w.lo + w.hi)},
                                 {"width", w.hi - w.lo}});
}

}  // namespace radseg::io
