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
#include "radseg/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <set>

namespace radseg::acquisition {

Index SequenceParams::nyquist_views(Index matrix, int etl) {
  const double per = 2.0 * etl;
  return static_cast<Index>(per * std::ceil(static_cast<double>(matrix) * kPi / 2.0 / per));
}

void SequenceParams::validate() const {
  if (!(echo_spacing_ms > 0)) throw ConfigError("sequence.echo_spacing_ms must be positive");
  if (etl < 1) throw ConfigError("sequence.etl must be at least 1");
  if (matrix < 2) throw ConfigError("sequence.matrix must be at least 2");
  if (!(tr_ms > 0)) throw ConfigError("sequence.tr_ms must be positive");
  if (views < 0 || readout_samples < 0) throw ConfigError("sequence.views/readout_samples must be nonnegative");
  if (views > 0 && views % etl) throw ConfigError("sequence.views must be a multiple of etl");
  if (readout_samples % 2) throw ConfigError("sequence.readout_samples must be even");
}

SequenceParams SequenceParams::resolved() const {
  validate();
  SequenceParams p = *this;
  if (p.views == 0) p.views = nyquist_views(matrix, etl);
  if (p.readout_samples == 0) p.readout_samples = matrix;
  p.validate();
  return p;
}

nlohmann::json SequenceParams::to_json() const {
  return {{"tr_ms", tr_ms},
          {"echo_spacing_ms", echo_spacing_ms},
          {"etl", etl},
          {"matrix", matrix},
          {"views", views},
          {"readout_samples", readout_samples},
          {"view_order", order == ViewOrder::interleaved ? "interleaved" : "golden_angle"}};
}

SequenceParams SequenceParams::from_json(const nlohmann::json& j) {
  SequenceParams p;
  p.tr_ms = j.at("tr_ms").get<double>();
  p.echo_spacing_ms = j.at("echo_spacing_ms").get<double>();
  p.etl = j.at("etl").get<int>();
  p.matrix = j.at("matrix").get<Index>();
  p.views = j.at("views").get<Index>();
  p.readout_samples = j.at("readout_samples").get<Index>();
  const auto order = j.at("view_order").get<std::string>();
  if (order == "interleaved")
    p.order = ViewOrder::interleaved;
  else if (order == "golden_angle")
    p.order = ViewOrder::golden_angle;
  else
    throw ConfigError("unknown view order '" + order + "'");
  p.validate();
  return p;
}

std::vector<ViewInfo> view_schedule(const SequenceParams& params) {
  const SequenceParams p = params.resolved();
  std::vector<ViewInfo> out(static_cast<std::size_t>(p.views));
  const double golden = kPi * (std::sqrt(5.0) - 1.0) / 2.0;  // 111.246... degrees
  for (Index v = 0; v < p.views; ++v) {
    const int e = static_cast<int>(v % p.etl);
    double angle;
    if (p.order == ViewOrder::interleaved) {
      const Index j = v / p.etl;
      angle = kPi * static_cast<double>(j * p.etl + e) / static_cast<double>(p.views);
    } else {
      angle = std::fmod(static_cast<double>(v) * golden, kPi);
    }
    out[static_cast<std::size_t>(v)] = {angle, e};
  }
  return out;
}

double readout_k(Index sample, Index readout_samples) {
  return (static_cast<double>(sample) - static_cast<double>(readout_samples) / 2.0) /
         static_cast<double>(readout_samples);
}

void RadialKSpace::validate() const {
  const SequenceParams p = params.resolved();
  if (data.rows() != p.views || data.cols() != p.readout_samples)
    throw ShapeError("k-space data does not match sequence views x samples");
  if (static_cast<Index>(angle.size()) != p.views || static_cast<Index>(echo_index.size()) != p.views)
    throw ShapeError("k-space angle/echo tables do not match view count");
  std::vector<Index> per_echo(static_cast<std::size_t>(p.etl), 0);
  std::set<double> seen;
  for (Index v = 0; v < p.views; ++v) {
    const auto i = static_cast<std::size_t>(v);
    if (echo_index[i] < 0 || echo_index[i] >= p.etl) throw ValidationError("echo index out of range");
    if (!(angle[i] >= 0 && angle[i] < kPi)) throw ValidationError("view angle outside [0, pi)");
    if (!seen.insert(angle[i]).second) throw ValidationError("duplicate view angle");
    ++per_echo[static_cast<std::size_t>(echo_index[i])];
  }
  for (Index c : per_echo)
    if (c != p.views / p.etl) throw ValidationError("echoes do not own views/etl views each");
}

double echo_signal(double pd, double t2_ms, double te_ms) {
  if (!(t2_ms > 0)) throw ValidationError("echo_signal: t2 must be positive");
  if (te_ms < 0) throw ValidationError("echo_signal: te must be nonnegative");
  return pd * std::exp(-te_ms / t2_ms);
}

Complex fourier_sample(const Image& img, double kx, double ky) {
  const Index H = img.rows(), W = img.cols();
  Complex s{0.0, 0.0};
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x) {
      const double phase = -2.0 * kPi * (kx * static_cast<double>(x - W / 2) + ky * static_cast<double>(y - H / 2));
      s += img(y, x) * Complex(std::cos(phase), std::sin(phase));
    }
  return s;
}

Image echo_image(const phantom::Phantom& ph, const SequenceParams& params, int echo) {
  const double te = params.te_ms(echo);
  Image img = Image::Zero(ph.size(), ph.labels.cols());
  for (Index i = 0; i < img.size(); ++i) {
    const std::uint8_t l = ph.labels.data()[i];
    if (l == 0) continue;
    const auto& t = ph.tissue(l);
    img.data()[i] = echo_signal(t.pd, t.t2_ms, te);
  }
  if (ph.bias) img *= *ph.bias;
  return img;
}

RadialKSpace acquire(const phantom::Phantom& ph, const SequenceParams& params, double noise_sigma,
                     std::uint64_t seed) {
  const SequenceParams p = params.resolved();
  if (ph.size() != p.matrix || ph.labels.cols() != p.matrix)
    throw ShapeError("phantom size " + std::to_string(ph.size()) + " does not match sequence matrix " +
                     std::to_string(p.matrix));
  if (noise_sigma < 0) throw ValidationError("noise sigma must be nonnegative");

  const auto schedule = view_schedule(p);
  const Index R = p.readout_samples, N = p.matrix;
  RadialKSpace ks;
  ks.params = p;
  ks.data.resize(p.views, R);
  for (const auto& v : schedule) {
    ks.angle.push_back(v.angle);
    ks.echo_index.push_back(v.echo);
  }

  std::vector<Eigen::MatrixXd> echo_images(static_cast<std::size_t>(p.etl));
  for (int e = 0; e < p.etl; ++e) echo_images[static_cast<std::size_t>(e)] = echo_image(ph, p, e).matrix();

  // S(k) = sum_y e_y(k) sum_x I(y,x) e_x(k): one (R x H)(H x W) product per view.
  Eigen::MatrixXcd ey(R, N), ex(R, N), m;
  for (Index v = 0; v < p.views; ++v) {
    const double c = std::cos(ks.angle[static_cast<std::size_t>(v)]);
    const double s = std::sin(ks.angle[static_cast<std::size_t>(v)]);
    for (Index r = 0; r < R; ++r) {
      const double k = readout_k(r, R);
      for (Index i = 0; i < N; ++i) {
        const double pos = static_cast<double>(i - N / 2);
        ex(r, i) = std::polar(1.0, -2.0 * kPi * k * c * pos);
        ey(r, i) = std::polar(1.0, -2.0 * kPi * k * s * pos);
      }
    }
    m.noalias() = ey * echo_images[static_cast<std::size_t>(ks.echo_index[static_cast<std::size_t>(v)])]
                           .cast<Complex>();
    ks.data.row(v) = (m.array() * ex.array()).rowwise().sum().transpose();
  }

  if (noise_sigma > 0) {
    Rng rng(mix_seed(seed, 0x6e01));
    for (Index i = 0; i < ks.data.size(); ++i)
      ks.data.data()[i] += Complex(rng.normal(0.0, noise_sigma), rng.normal(0.0, noise_sigma));
  }
  return ks;
}

}  // namespace radseg::acquisition
