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

#include "radseg/store.hpp"

#include "radseg/errors.hpp"
#include "radseg/io.hpp"

#include <cstdio>

namespace radseg::store {

using nlohmann::json;

std::string slice_stem(int subject, int slice) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sub%03d_sl%02d", subject, slice);
  return buf;
}

fs::path slice_file(const fs::path& dir, int subject, int slice, const std::string& what) {
  return dir / (slice_stem(subject, slice) + "_" + what + ".raw");
}

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw DataError("missing input file: " + p.string());
}

void write_phantom(const fs::path& dir, int subject, int slice, const phantom::Phantom& ph) {
  json meta = ph.describe();
  meta["subject"] = subject;
  meta["slice"] = slice;
  io::write_mask(slice_file(dir, subject, slice, "labels"), ph.labels, "tissue_labels", meta);
  if (ph.bias) io::write_image(slice_file(dir, subject, slice, "bias"), *ph.bias, "bias_field", meta);
}

phantom::Phantom read_phantom(const fs::path& dir, int subject, int slice) {
  const auto raw = slice_file(dir, subject, slice, "labels");
  require_file(raw);
  json side;
  phantom::Phantom ph;
  ph.labels = io::read_mask(raw, &side);
  const auto& meta = side.at("meta");
  ph.liver_id = meta.at("liver_id").get<std::uint8_t>();
  for (const auto& t : meta.at("tissues"))
    ph.tissues.push_back({t.at("name").get<std::string>(), t.at("pd").get<double>(), t.at("t2_ms").get<double>()});
  if (meta.at("has_bias").get<bool>()) {
    const auto b = slice_file(dir, subject, slice, "bias");
    require_file(b);
    ph.bias = io::read_image(b);
  }
  ph.validate();
  return ph;
}

void write_kspace(const fs::path& raw, const acquisition::RadialKSpace& ks) {
  std::vector<float> v(static_cast<std::size_t>(ks.data.size() * 2));
  for (Index i = 0; i < ks.data.size(); ++i) {
    v[static_cast<std::size_t>(2 * i)] = static_cast<float>(ks.data.data()[i].real());
    v[static_cast<std::size_t>(2 * i + 1)] = static_cast<float>(ks.data.data()[i].imag());
  }
  const json meta = {{"views", ks.views()},
                     {"samples", ks.samples()},
                     {"angles", ks.angle},
                     {"echo_index", ks.echo_index},
                     {"sequence", ks.params.to_json()}};
  io::write_raw_f32(raw, v, {ks.views(), ks.samples()}, "radial_kspace", meta, "complex64");
}

acquisition::RadialKSpace read_kspace(const fs::path& raw) {
  require_file(raw);
  const auto arr = io::read_raw_f32(raw, "complex64");
  if (arr.shape.size() != 2) throw DataError(raw.string() + ": k-space must be 2-D");
  acquisition::RadialKSpace ks;
  const auto& meta = arr.sidecar.at("meta");
  ks.params = acquisition::SequenceParams::from_json(meta.at("sequence"));
  ks.angle = meta.at("angles").get<std::vector<double>>();
  ks.echo_index = meta.at("echo_index").get<std::vector<int>>();
  ks.data.resize(arr.shape[0], arr.shape[1]);
  for (Index i = 0; i < ks.data.size(); ++i)
    ks.data.data()[i] = Complex(arr.values[static_cast<std::size_t>(2 * i)], arr.values[static_cast<std::size_t>(2 * i + 1)]);
  ks.validate();
  return ks;
}

void write_echoes(const fs::path& raw, const recon::EchoImageSet& set) {
  set.validate();
  io::write_stack(raw, set.images, "te_images", {{"te_ms", set.te_ms}, {"echoes", set.echoes}});
}

recon::EchoImageSet read_echoes(const fs::path& raw) {
  require_file(raw);
  json side;
  recon::EchoImageSet set;
  set.images = io::read_stack(raw, &side);
  set.te_ms = side.at("meta").at("te_ms").get<std::vector<double>>();
  set.echoes = side.at("meta").at("echoes").get<std::vector<int>>();
  set.validate();
  return set;
}

void write_t2map(const fs::path& raw, const fs::path& valid_raw, const t2map::T2Map& m) {
  io::write_stack(raw, {m.t2_ms, m.pd}, "t2map", {{"planes", {"t2_ms", "pd"}}, {"clip_ms", {0.0, t2map::kT2ClipMaxMs}}});
  io::write_mask(valid_raw, m.valid, "t2map_valid");
}

t2map::T2Map read_t2map(const fs::path& raw, const fs::path& valid_raw) {
  require_file(raw);
  require_file(valid_raw);
  const auto planes = io::read_stack(raw);
  if (planes.size() != 2) throw DataError(raw.string() + ": expected two planes (t2_ms, pd)");
  return {planes[0], planes[1], io::read_mask(valid_raw)};
}

}  // namespace radseg::store
