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

#include "radseg/phantom.hpp"

#include "radseg/errors.hpp"
#include "radseg/filters.hpp"
#include "radseg/random.hpp"

#include <algorithm>
#include <cmath>

namespace radseg::phantom {

void TissueClass::validate() const {
  if (!(pd > 0)) throw ValidationError("tissue '" + name + "': pd must be positive");
  if (!(t2_ms > 0 && t2_ms <= 2000)) throw ValidationError("tissue '" + name + "': t2 must be in (0, 2000] ms");
}

Difficulty parse_difficulty(const std::string& s) {
  if (s == "easy") return Difficulty::easy;
  if (s == "t2_only") return Difficulty::t2_only;
  throw ConfigError("unknown phantom difficulty '" + s + "' (expected easy | t2_only)");
}

std::string to_string(Difficulty d) { return d == Difficulty::easy ? "easy" : "t2_only"; }

void Phantom::validate() const {
  if (labels.size() == 0) throw ValidationError("phantom has no pixels");
  for (const auto& t : tissues) t.validate();
  const int max_label = labels.maxCoeff();
  if (max_label > static_cast<int>(tissues.size())) throw ValidationError("phantom label without tissue entry");
  if (liver_id == 0 || liver_id > tissues.size()) throw ValidationError("phantom liver id out of range");
  if ((labels == liver_id).count() == 0) throw ValidationError("phantom liver mask is empty");
  if (bias) {
    if (bias->rows() != labels.rows() || bias->cols() != labels.cols())
      throw ShapeError("phantom bias field size differs from labels");
    if (!(bias->minCoeff() > 0)) throw ValidationError("phantom bias field must be strictly positive");
  }
}

nlohmann::json Phantom::describe() const {
  nlohmann::json t = nlohmann::json::array();
  for (std::size_t i = 0; i < tissues.size(); ++i)
    t.push_back({{"label", i + 1}, {"name", tissues[i].name}, {"pd", tissues[i].pd}, {"t2_ms", tissues[i].t2_ms}});
  return {{"size", size()}, {"liver_id", liver_id}, {"tissues", t}, {"has_bias", bias.has_value()}};
}

double composite_weight(double t2_ms, double echo_spacing_ms, int etl) {
  double s = 0.0;
  for (int e = 0; e < etl; ++e) s += std::exp(-(e + 1) * echo_spacing_ms / t2_ms);
  return s / etl;
}

namespace {

struct Ellipse {
  double cx, cy, a, b, angle;
  bool contains(double x, double y) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (x - cx) * c + (y - cy) * s, v = -(x - cx) * s + (y - cy) * c;
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  }
};

// Union of ellipses, smoothed and re-thresholded.
Mask rasterize_blob(const std::vector<Ellipse>& parts, Index size) {
  Image ind = Image::Zero(size, size);
  for (Index y = 0; y < size; ++y)
    for (Index x = 0; x < size; ++x)
      for (const auto& e : parts)
        if (e.contains(x + 0.5, y + 0.5)) {
          ind(y, x) = 1.0;
          break;
        }
  return (gaussian_blur(ind, 1.5) >= 0.5).cast<std::uint8_t>();
}

Mask dilate(const Mask& m, int r) {
  Mask out = m;
  const Index H = m.rows(), W = m.cols();
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x) {
      if (!m(y, x)) continue;
      for (Index dy = -r; dy <= r; ++dy)
        for (Index dx = -r; dx <= r; ++dx) {
          const Index yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < H && xx >= 0 && xx < W) out(yy, xx) = 1;
        }
    }
  return out;
}

struct Body {
  double cx, cy, a, b;
  double harm[3], phase[3];
  // < 1 inside, scaled radial coordinate
  double rho(double x, double y) const {
    const double dx = (x - cx) / a, dy = (y - cy) / b;
    const double th = std::atan2(dy, dx);
    double r = 1.0;
    for (int k = 0; k < 3; ++k) r += harm[k] * std::cos((k + 2) * th + phase[k]);
    return std::sqrt(dx * dx + dy * dy) / r;
  }
};

// Main ellipse plus 1-2 lobes with total area close to `area`.
std::vector<Ellipse> random_blob(Rng& rng, double cx, double cy, double area) {
  const double aspect = rng.uniform(0.55, 1.0);
  const double main_area = 0.75 * area;
  const double a = std::sqrt(main_area / (kPi * aspect));
  Ellipse main{cx, cy, a, a * aspect, rng.uniform(0.0, kPi)};
  std::vector<Ellipse> parts{main};
  const int lobes = static_cast<int>(rng.integer(1, 2));
  for (int i = 0; i < lobes; ++i) {
    const double dir = rng.uniform(0.0, 2 * kPi);
    const double la = a * rng.uniform(0.45, 0.65);
    parts.push_back({cx + 0.7 * a * std::cos(dir), cy + 0.7 * a * aspect * std::sin(dir), la,
                     la * rng.uniform(0.6, 1.0), rng.uniform(0.0, kPi)});
  }
  return parts;
}

TissueClass jittered(const TissueClass& t, Rng& rng, double jitter) {
  TissueClass out = t;
  out.pd *= 1.0 + rng.uniform(-jitter, jitter) * 0.5;
  out.t2_ms *= 1.0 + rng.uniform(-jitter, jitter);
  return out;
}

}  // namespace

Phantom generate_phantom(std::uint64_t seed, Index size, Difficulty difficulty, const PhantomOptions& options) {
  if (size < 32) throw ValidationError("phantom size must be at least 32");
  if (size % 16) throw ValidationError("phantom size must be divisible by 16, got " + std::to_string(size));
  Rng rng(mix_seed(seed, 0x70a4));
  const double S = static_cast<double>(size);
  const auto& td = options.tissues;

  Body body{S / 2 + rng.uniform(-0.03, 0.03) * S, S / 2 + rng.uniform(-0.03, 0.03) * S,
            rng.uniform(0.40, 0.45) * S, rng.uniform(0.30, 0.36) * S, {}, {}};
  for (int k = 0; k < 3; ++k) {
    body.harm[k] = rng.uniform(-0.04, 0.04);
    body.phase[k] = rng.uniform(0.0, 2 * kPi);
  }

  Phantom ph;
  ph.labels = LabelMap::Zero(size, size);
  Image rho(size, size);
  for (Index y = 0; y < size; ++y)
    for (Index x = 0; x < size; ++x) {
      rho(y, x) = body.rho(x + 0.5, y + 0.5);
      if (rho(y, x) <= 1.0) ph.labels(y, x) = 1;
    }
  const double body_area = static_cast<double>((ph.labels == 1).count());

  ph.tissues.push_back(jittered(td.soft_tissue, rng, td.jitter));
  const TissueClass liver = jittered(td.liver, rng, td.jitter);
  ph.tissues.push_back(liver);
  ph.liver_id = 2;

  // Distractor tissue list.
  std::vector<TissueClass> distractors;
  std::vector<double> area_fraction;
  const int n_distractors = static_cast<int>(rng.integer(3, 6));
  const TissueClass natural[4] = {td.spleen, td.kidney, td.fat, td.fluid};
  int first_natural = 0;
  if (difficulty == Difficulty::t2_only) {
    TissueClass same_pd{"pd_matched", liver.pd * (1.0 + rng.uniform(-0.03, 0.03)),
                        liver.t2_ms * rng.uniform(1.5, 2.0)};
    const bool longer = rng.uniform() < 0.5;
    const double t2 = liver.t2_ms * (longer ? rng.uniform(1.5, 2.2) : rng.uniform(0.5, 0.65));
    const double pd = liver.pd * composite_weight(liver.t2_ms, options.echo_spacing_ms, options.etl) /
                      composite_weight(t2, options.echo_spacing_ms, options.etl);
    TissueClass matched{"composite_matched", pd, t2};
    distractors.push_back(same_pd);
    area_fraction.push_back(rng.uniform(0.05, 0.12));
    distractors.push_back(matched);
    area_fraction.push_back(rng.uniform(0.10, 0.22));
    first_natural = 2;
  }
  for (int i = first_natural; i < n_distractors; ++i) {
    distractors.push_back(jittered(natural[rng.integer(0, 3)], rng, td.jitter));
    area_fraction.push_back(rng.uniform(0.03, 0.09));
  }

  Mask occupied;
  // Centres are drawn from free interior pixels so crowded layouts still find room.
  auto place = [&](double target_area, std::uint8_t label, double min_frac, double max_frac) -> bool {
    double scale = 1.0;
    for (int attempt = 0; attempt < 300; ++attempt) {
      if (attempt % 20 == 19) scale *= 0.9;
      std::vector<Index> free;
      for (Index i = 0; i < rho.size(); ++i)
        if (!occupied.data()[i] && rho.data()[i] < 0.8) free.push_back(i);
      if (free.empty()) return false;
      const Index at = free[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(free.size()) - 1))];
      const double cx = static_cast<double>(at % size) + rng.uniform();
      const double cy = static_cast<double>(at / size) + rng.uniform();
      const Mask blob = rasterize_blob(random_blob(rng, cx, cy, target_area * scale), size);
      const double area = static_cast<double>(blob.count());
      if (area < 4) continue;
      bool ok = true;
      for (Index i = 0; i < blob.size() && ok; ++i)
        if (blob.data()[i] && (occupied.data()[i] || rho.data()[i] > 0.88)) ok = false;
      if (!ok) continue;
      const double frac = area / body_area;
      if (frac < min_frac || frac > max_frac) continue;
      for (Index i = 0; i < blob.size(); ++i)
        if (blob.data()[i]) ph.labels.data()[i] = label;
      occupied = dilate((ph.labels > 1).cast<std::uint8_t>(), 1);
      return true;
    }
    return false;
  };

  const std::size_t required = difficulty == Difficulty::t2_only ? 2 : 0;
  const LabelMap body_labels = ph.labels;
  const std::vector<TissueClass> base_tissues = ph.tissues;
  bool laid_out = false;
  for (int layout = 0; layout < 50 && !laid_out; ++layout) {
    ph.labels = body_labels;
    ph.tissues = base_tissues;
    occupied = Mask::Zero(size, size);
    if (!place(rng.uniform(0.15, 0.32) * body_area, ph.liver_id, 0.1, 0.5)) continue;
    laid_out = true;
    for (std::size_t i = 0; i < distractors.size(); ++i) {
      const auto label = static_cast<std::uint8_t>(ph.tissues.size() + 1);
      if (place(area_fraction[i] * body_area, label, 0.005, 0.5)) {
        ph.tissues.push_back(distractors[i]);
      } else if (i < required) {
        laid_out = false;
        break;
      }
    }
  }
  if (!laid_out)
    throw NumericalError("phantom generator could not lay out the organs (seed " + std::to_string(seed) + ")");

  if (options.bias_amplitude > 0) ph.bias = synth_bias_field(mix_seed(seed, 0xb1a5), size, options.bias_amplitude);
  ph.validate();
  return ph;
}

Image synth_bias_field(std::uint64_t seed, Index size, double amplitude) {
  if (!(amplitude >= 0.0 && amplitude < 1.0)) throw ValidationError("bias amplitude must be in [0,1)");
  if (amplitude == 0.0) return Image::Ones(size, size);
  Rng rng(mix_seed(seed, 0xf1e1d));
  Image g = Image::Zero(size, size);
  for (int kx = 0; kx <= 2; ++kx)
    for (int ky = -2; ky <= 2; ++ky) {
      if (kx == 0 && ky <= 0) continue;
      const double a = rng.normal() / (1.0 + kx * kx + ky * ky);
      const double phi = rng.uniform(0.0, 2 * kPi);
      for (Index y = 0; y < size; ++y)
        for (Index x = 0; x < size; ++x)
          g(y, x) += a * std::cos(2 * kPi * (kx * (x + 0.5) + ky * (y + 0.5)) / static_cast<double>(size) + phi);
    }
  g -= g.mean();
  const double peak = g.abs().maxCoeff();
  if (peak > 0) g *= amplitude / peak;
  return 1.0 + g;
}

PhantomImages pd_t2_images(const Phantom& ph) {
  const Index n = ph.size();
  PhantomImages out{Image::Zero(n, ph.labels.cols()), Image::Zero(n, ph.labels.cols()), ph.liver_mask()};
  for (Index i = 0; i < ph.labels.size(); ++i) {
    const std::uint8_t l = ph.labels.data()[i];
    if (l == 0) continue;
    out.pd.data()[i] = ph.tissue(l).pd;
    out.t2.data()[i] = ph.tissue(l).t2_ms;
  }
  return out;
}

}  // namespace radseg::phantom
