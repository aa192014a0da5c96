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

#include "radseg/acquisition.hpp"
#include "radseg/errors.hpp"
#include "radseg/io.hpp"
#include "radseg/phantom.hpp"
#include "radseg/random.hpp"
#include "radseg/recon.hpp"
#include "radseg/store.hpp"
#include "radseg/t2map.hpp"

#include <gtest/gtest.h>
#include <zlib.h>

#include <fstream>
#include <sstream>

namespace {

using namespace radseg;
namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("radseg_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint32_t be32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(s[at + static_cast<std::size_t>(i)]);
  return v;
}

Image random_image(Index h, Index w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w);
  for (Index i = 0; i < img.size(); ++i) img.data()[i] = rng.normal() * 10.0;
  return img;
}

TEST(LittleEndian, KnownBytes) {
  std::ostringstream out;
  io::write_le<std::uint32_t>(out, 0x01020304u);
  io::write_le<float>(out, 1.0f);
  const auto s = out.str();
  ASSERT_EQ(s.size(), 8u);
  EXPECT_EQ(static_cast<unsigned char>(s[0]), 0x04);
  EXPECT_EQ(static_cast<unsigned char>(s[3]), 0x01);
  EXPECT_EQ(static_cast<unsigned char>(s[7]), 0x3f);  // 1.0f = 0x3f800000
  EXPECT_EQ(static_cast<unsigned char>(s[6]), 0x80);
  std::istringstream in(s);
  EXPECT_EQ(io::read_le<std::uint32_t>(in), 0x01020304u);
  EXPECT_EQ(io::read_le<float>(in), 1.0f);
  EXPECT_EQ(io::byteswap_value<std::uint16_t>(0x1234), 0x3412);
}

TEST(Raw, ImageRoundTripAndSidecar) {
  const auto dir = scratch_dir("image");
  const Image img = random_image(5, 7, 1);
  io::write_image(dir / "a.raw", img, "composite", {{"subject", 3}});
  EXPECT_EQ(fs::file_size(dir / "a.raw"), 5u * 7u * 4u);
  io::json side;
  const Image back = io::read_image(dir / "a.raw", &side);
  ASSERT_EQ(back.rows(), 5);
  ASSERT_EQ(back.cols(), 7);
  EXPECT_TRUE((back == img.cast<float>().cast<double>()).all());
  EXPECT_EQ(side.at("dtype"), "float32");
  EXPECT_EQ(side.at("byte_order"), "little");
  EXPECT_EQ(side.at("role"), "composite");
  EXPECT_EQ(side.at("shape"), (std::vector<Index>{5, 7}));
  EXPECT_EQ(side.at("meta").at("subject"), 3);

  fs::create_directories(dir / "again");
  io::write_image(dir / "again" / "a.raw", back, "composite", {{"subject", 3}});
  EXPECT_EQ(slurp(dir / "a.raw"), slurp(dir / "again" / "a.raw"));
  EXPECT_EQ(slurp(io::sidecar_path(dir / "a.raw")), slurp(io::sidecar_path(dir / "again" / "a.raw")));
}

TEST(Raw, MaskAndStackRoundTrip) {
  const auto dir = scratch_dir("mask");
  Mask m = Mask::Zero(4, 6);
  m(1, 2) = 1;
  m(3, 5) = 1;
  io::write_mask(dir / "m.raw", m, "liver");
  EXPECT_TRUE((io::read_mask(dir / "m.raw") == m).all());

  std::vector<Image> planes{random_image(3, 4, 2), random_image(3, 4, 3), random_image(3, 4, 4)};
  io::write_stack(dir / "s.raw", planes, "echoes");
  const auto back = io::read_stack(dir / "s.raw");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE((back[i] == planes[i].cast<float>().cast<double>()).all());
}

TEST(Raw, Errors) {
  const auto dir = scratch_dir("errors");
  EXPECT_THROW(io::read_image(dir / "none.raw"), DataError);
  io::write_image(dir / "t.raw", random_image(4, 4, 5), "x");
  fs::resize_file(dir / "t.raw", 10);
  EXPECT_THROW(io::read_image(dir / "t.raw"), DataError);
  io::write_mask(dir / "m.raw", Mask::Zero(2, 2), "x");
  EXPECT_THROW(io::read_image(dir / "m.raw"), DataError);
  const std::vector<float> three(3, 0.0f);
  EXPECT_THROW(io::write_raw_f32(dir / "bad.raw", three, {2, 2}, "x"), ShapeError);
}

TEST(Png, GrayHeaderAndPixels) {
  const auto dir = scratch_dir("png");
  Mask px(3, 5);
  for (Index i = 0; i < px.size(); ++i) px.data()[i] = static_cast<std::uint8_t>(i * 10);
  io::write_png_gray(dir / "g.png", px);
  const auto s = slurp(dir / "g.png");
  ASSERT_GT(s.size(), 33u);
  EXPECT_EQ(s.substr(0, 8), std::string("\x89PNG\r\n\x1a\n", 8));
  EXPECT_EQ(s.substr(12, 4), "IHDR");
  EXPECT_EQ(be32(s, 16), 5u);
  EXPECT_EQ(be32(s, 20), 3u);
  EXPECT_EQ(s[24], 8);  // bit depth
  EXPECT_EQ(s[25], 0);  // grayscale
  EXPECT_EQ(s.substr(s.size() - 8, 4), "IEND");

  // Inflate the image data and compare the filtered scanlines.
  const std::size_t idat = s.find("IDAT");
  ASSERT_NE(idat, std::string::npos);
  const std::uint32_t len = be32(s, idat - 4);
  std::vector<unsigned char> raw(3 * (5 + 1));
  uLongf raw_len = raw.size();
  ASSERT_EQ(uncompress(raw.data(), &raw_len, reinterpret_cast<const Bytef*>(s.data() + idat + 4), len), Z_OK);
  ASSERT_EQ(raw_len, raw.size());
  for (Index y = 0; y < 3; ++y) {
    EXPECT_EQ(raw[static_cast<std::size_t>(y * 6)], 0);
    for (Index x = 0; x < 5; ++x) EXPECT_EQ(raw[static_cast<std::size_t>(y * 6 + 1 + x)], px(y, x));
  }
  std::uint32_t crc = crc32(0, reinterpret_cast<const Bytef*>(s.data() + 12), 17);
  EXPECT_EQ(be32(s, 29), crc);
}

TEST(Png, WindowAndPreview) {
  Image img(1, 3);
  img << -1.0, 0.5, 2.0;
  const auto px = io::to_u8(img, {0.0, 1.0});
  EXPECT_EQ(px(0, 0), 0);
  EXPECT_EQ(px(0, 2), 255);
  EXPECT_NEAR(px(0, 1), 128, 1);
  const auto w = io::auto_window(random_image(20, 20, 6));
  EXPECT_LT(w.lo, w.hi);

  const auto dir = scratch_dir("preview");
  io::write_preview(dir / "p.png", random_image(8, 8, 7), "composite");
  EXPECT_TRUE(fs::exists(dir / "p.png"));
  std::vector<std::uint8_t> rgb(2 * 2 * 3, 200);
  io::write_png_rgb(dir / "c.png", 2, 2, rgb);
  EXPECT_EQ(slurp(dir / "c.png")[25], 2);  // truecolour
  EXPECT_THROW(io::write_png_rgb(dir / "d.png", 3, 2, rgb), ShapeError);
}

TEST(Store, PhantomRoundTrip) {
  const auto dir = scratch_dir("phantom");
  phantom::PhantomOptions opt;
  opt.bias_amplitude = 0.2;
  const auto ph = phantom::generate_phantom(11, 64, phantom::Difficulty::t2_only, opt);
  store::write_phantom(dir, 2, 5, ph);
  const auto back = store::read_phantom(dir, 2, 5);
  EXPECT_TRUE((back.labels == ph.labels).all());
  EXPECT_EQ(back.liver_id, ph.liver_id);
  ASSERT_EQ(back.tissues.size(), ph.tissues.size());
  for (std::size_t i = 0; i < ph.tissues.size(); ++i) {
    EXPECT_EQ(back.tissues[i].name, ph.tissues[i].name);
    EXPECT_EQ(back.tissues[i].pd, ph.tissues[i].pd);
    EXPECT_EQ(back.tissues[i].t2_ms, ph.tissues[i].t2_ms);
  }
  ASSERT_TRUE(back.bias.has_value());
  EXPECT_LT((*back.bias - *ph.bias).abs().maxCoeff(), 1e-6);
  EXPECT_EQ(store::slice_stem(2, 5), "sub002_sl05");
  EXPECT_THROW(store::read_phantom(dir, 3, 0), DataError);
}

TEST(Store, KspaceEchoesAndMapRoundTrip) {
  const auto dir = scratch_dir("kspace");
  const auto ph = phantom::generate_phantom(4, 64, phantom::Difficulty::t2_only);
  acquisition::SequenceParams sp;
  sp.etl = 4;
  const auto ks = acquisition::acquire(ph, sp.resolved(), 0.5, 9);
  store::write_kspace(dir / "k.raw", ks);
  const auto kb = store::read_kspace(dir / "k.raw");
  EXPECT_EQ(kb.echo_index, ks.echo_index);
  EXPECT_EQ(kb.angle, ks.angle);
  EXPECT_EQ(kb.params.etl, 4);
  EXPECT_EQ(kb.params.views, ks.params.views);
  EXPECT_TRUE((kb.data == ks.data.cast<std::complex<float>>().cast<Complex>()).all());
  fs::create_directories(dir / "again");
  store::write_kspace(dir / "again" / "k.raw", kb);
  EXPECT_EQ(slurp(dir / "k.raw"), slurp(dir / "again" / "k.raw"));
  EXPECT_EQ(slurp(io::sidecar_path(dir / "k.raw")), slurp(io::sidecar_path(dir / "again" / "k.raw")));

  const auto set = recon::te_images(kb, {0, 2, 3}, 0.3);
  store::write_echoes(dir / "e.raw", set);
  const auto eb = store::read_echoes(dir / "e.raw");
  EXPECT_EQ(eb.echoes, set.echoes);
  EXPECT_EQ(eb.te_ms, set.te_ms);
  ASSERT_EQ(eb.images.size(), 3u);

  const auto map = t2map::fit_map(set);
  store::write_t2map(dir / "t.raw", dir / "v.raw", map);
  const auto mb = store::read_t2map(dir / "t.raw", dir / "v.raw");
  EXPECT_TRUE((mb.valid == map.valid).all());
  EXPECT_TRUE((mb.t2_ms == map.t2_ms.cast<float>().cast<double>()).all());
  EXPECT_THROW(store::require_file(dir / "absent.raw"), DataError);
}

}  // namespace
