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

#include "radseg/pipeline.hpp"

#include "radseg/errors.hpp"
#include "radseg/filters.hpp"
#include "radseg/random.hpp"
#include "radseg/t2map.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iostream>

namespace radseg::pipeline {

std::string to_string(InputKind k) {
  switch (k) {
    case InputKind::composite: return "composite";
    case InputKind::t2map: return "t2map";
    case InputKind::te_pair: return "te_pair";
  }
  return "?";
}

InputKind parse_input_kind(const std::string& s) {
  if (s == "composite") return InputKind::composite;
  if (s == "t2map") return InputKind::t2map;
  if (s == "te_pair") return InputKind::te_pair;
  throw ConfigError("unknown input kind '" + s + "'");
}

void Sample::validate() const {
  if (channels.empty()) throw ValidationError("sample has no channels");
  for (const auto& c : channels) {
    if (c.rows() != mask.rows() || c.cols() != mask.cols()) throw ShapeError("sample channel size differs from mask");
    if (!c.isFinite().all()) throw ValidationError("sample channel has non-finite values");
  }
  if ((mask > 1).any()) throw ValidationError("sample mask is not binary");
}

// ------------------------------------------------------------ preprocessing

namespace {

struct Basis {
  int order;
  std::vector<std::pair<int, int>> terms;  // (a, b), excluding (0,0)
  Image phi(std::size_t t, Index H, Index W) const {
    const auto [a, b] = terms[t];
    Image out(H, W);
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x)
        out(y, x) = std::cos(kPi * a * (x + 0.5) / static_cast<double>(W)) *
                    std::cos(kPi * b * (y + 0.5) / static_cast<double>(H));
    return out;
  }
};

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

BiasCorrection bias_correct_detailed(const Image& img, int iterations, double smooth_sigma, const Mask* body) {
  if (iterations < 1) throw ConfigError("bias correction needs at least one iteration");
  if (!(smooth_sigma > 0)) throw ConfigError("bias correction smoothing scale must be positive");
  const Index H = img.rows(), W = img.cols();
  BiasCorrection out;
  if (body) {
    if (body->rows() != H || body->cols() != W) throw ShapeError("bias_correct: body mask size");
    out.body = *body;
  } else {
    const double thr = 0.1 * percentile(img, 99.0);
    out.body = (img > thr).cast<std::uint8_t>();
  }
  if (out.body.count() == 0) {
    out.image = img;
    out.field = Image::Ones(H, W);
    return out;
  }

  // Clamp nonpositive body pixels.
  double min_pos = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < img.size(); ++i)
    if (out.body.data()[i] && img.data()[i] > 0) min_pos = std::min(min_pos, img.data()[i]);
  if (!std::isfinite(min_pos)) throw ValidationError("bias_correct: no positive pixels inside the body");
  Image work = img;
  for (Index i = 0; i < img.size(); ++i)
    if (out.body.data()[i] && !(img.data()[i] > 0)) {
      work.data()[i] = min_pos;
      ++out.clamped_pixels;
    }
  if (out.clamped_pixels > 0)
    std::clog << "warning: bias_correct clamped " << out.clamped_pixels << " nonpositive body pixels\n";

  Image logimg = Image::Zero(H, W);
  for (Index i = 0; i < img.size(); ++i)
    if (out.body.data()[i]) logimg.data()[i] = std::log(work.data()[i]);

  Basis basis;
  basis.order = std::clamp(static_cast<int>(std::lround(static_cast<double>(std::max(H, W)) / smooth_sigma)), 1, 12);
  for (int b = 0; b <= basis.order; ++b)
    for (int a = 0; a <= basis.order; ++a)
      if (a || b) basis.terms.emplace_back(a, b);
  const auto T = basis.terms.size();
  std::vector<Image> phis;
  for (std::size_t t = 0; t < T; ++t) phis.push_back(basis.phi(t, H, W));

  // Forward differences between body pixel pairs.
  struct Pair {
    Index i, j;
  };
  std::vector<Pair> pairs;
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x) {
      const Index i = y * W + x;
      if (!out.body.data()[i]) continue;
      if (x + 1 < W && out.body.data()[i + 1]) pairs.push_back({i, i + 1});
      if (y + 1 < H && out.body.data()[i + W]) pairs.push_back({i, i + W});
    }
  Eigen::MatrixXd design(static_cast<Index>(pairs.size()), static_cast<Index>(T));
  Eigen::VectorXd diff(static_cast<Index>(pairs.size()));
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    diff[static_cast<Index>(p)] = logimg.data()[pairs[p].j] - logimg.data()[pairs[p].i];
    for (std::size_t t = 0; t < T; ++t)
      design(static_cast<Index>(p), static_cast<Index>(t)) = phis[t].data()[pairs[p].j] - phis[t].data()[pairs[p].i];
  }

  Eigen::VectorXd coef = Eigen::VectorXd::Zero(static_cast<Index>(T));
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd resid = diff - design * coef;
    std::vector<double> absr(static_cast<std::size_t>(resid.size()));
    for (Index k = 0; k < resid.size(); ++k) absr[static_cast<std::size_t>(k)] = std::abs(resid[k]);
    // Robust scale of the residual gradients; edges sit in the tail.
    const double threshold = std::max(3.0 * 1.4826 * median(absr), 1e-3);
    Eigen::VectorXd w(resid.size());
    for (Index k = 0; k < resid.size(); ++k) w[k] = std::abs(resid[k]) <= threshold ? 1.0 : 0.0;
    const Eigen::MatrixXd a = design.transpose() * w.asDiagonal() * design;
    const Eigen::VectorXd rhs = design.transpose() * w.cwiseProduct(diff);
    const double ridge = 1e-8 * std::max(a.trace(), 1e-12);
    coef = (a + ridge * Eigen::MatrixXd::Identity(a.rows(), a.cols())).ldlt().solve(rhs);
  }

  Image logfield = Image::Zero(H, W);
  for (std::size_t t = 0; t < T; ++t) logfield += coef[static_cast<Index>(t)] * phis[t];
  Image field = logfield.exp();
  double mean = 0.0;
  for (Index i = 0; i < field.size(); ++i)
    if (out.body.data()[i]) mean += field.data()[i];
  mean /= static_cast<double>(out.body.count());
  field /= mean;
  out.field = field;
  out.image = img / field;
  return out;
}

Image bias_correct(const Image& img, int iterations, double smooth_sigma) {
  return bias_correct_detailed(img, iterations, smooth_sigma).image;
}

Image contrast_stretch(const Image& img, double p_lo, double p_hi) {
  if (!(p_lo < p_hi)) throw ValidationError("contrast_stretch: p_lo must be below p_hi");
  const double lo = percentile(img, p_lo), hi = percentile(img, p_hi);
  if (!(hi > lo)) throw ValidationError("contrast_stretch: degenerate percentiles (constant image?)");
  return ((img - lo) / (hi - lo)).max(0.0).min(1.0);
}

Image zscore(const Image& img) {
  const double mean = img.mean();
  const double sd = std::sqrt((img - mean).square().mean());
  if (!(sd > 0)) throw ValidationError("zscore: zero standard deviation");
  return (img - mean) / sd;
}

Image clip_t2(const Image& t2_ms) { return t2map::clip_t2(t2_ms); }

void PreprocessConfig::validate() const {
  if (bias_iterations < 1) throw ConfigError("preprocess.bias_iterations must be positive");
  if (!(bias_sigma > 0)) throw ConfigError("preprocess.bias_sigma must be positive");
  if (!(stretch_lo >= 0 && stretch_lo < stretch_hi && stretch_hi <= 100))
    throw ConfigError("preprocess.stretch_lo/hi must satisfy 0 <= lo < hi <= 100");
}

nlohmann::json PreprocessConfig::to_json() const {
  return {{"bias_correction", bias_correction}, {"bias_iterations", bias_iterations}, {"bias_sigma", bias_sigma},
          {"stretch_lo", stretch_lo},           {"stretch_hi", stretch_hi},           {"zscore_t2", zscore_t2}};
}

PreprocessConfig PreprocessConfig::from_json(const nlohmann::json& j) {
  PreprocessConfig c;
  c.bias_correction = j.at("bias_correction").get<bool>();
  c.bias_iterations = j.at("bias_iterations").get<int>();
  c.bias_sigma = j.at("bias_sigma").get<double>();
  c.stretch_lo = j.at("stretch_lo").get<double>();
  c.stretch_hi = j.at("stretch_hi").get<double>();
  c.zscore_t2 = j.at("zscore_t2").get<bool>();
  c.validate();
  return c;
}

Image preprocess_weighted(const Image& img, const PreprocessConfig& cfg) {
  Image x = cfg.bias_correction ? bias_correct(img, cfg.bias_iterations, cfg.bias_sigma) : img;
  return zscore(contrast_stretch(x, cfg.stretch_lo, cfg.stretch_hi));
}

Image preprocess_t2(const Image& t2_ms, const PreprocessConfig& cfg) {
  Image x = clip_t2(t2_ms);
  return cfg.zscore_t2 ? zscore(x) : x;
}

// ------------------------------------------------------------- augmentation

Sample augment_translate(const Sample& s, int dx, int dy) {
  const Index H = s.height(), W = s.width();
  Sample out = s;
  auto shift = [&](const auto& src, auto& dst) {
    dst.setZero();
    for (Index y = 0; y < H; ++y) {
      const Index sy = y - dy;
      if (sy < 0 || sy >= H) continue;
      for (Index x = 0; x < W; ++x) {
        const Index sx = x - dx;
        if (sx >= 0 && sx < W) dst(y, x) = src(sy, sx);
      }
    }
  };
  for (std::size_t c = 0; c < s.channels.size(); ++c) shift(s.channels[c], out.channels[c]);
  shift(s.mask, out.mask);
  return out;
}

Sample augment_blur(const Sample& s, double sigma) {
  if (sigma < 0) throw ValidationError("augment_blur: sigma must be nonnegative");
  Sample out = s;
  for (auto& c : out.channels) c = gaussian_blur(c, sigma);
  return out;
}

Sample augment_elastic(const Sample& s, double alpha, double sigma, std::uint64_t seed) {
  if (alpha < 0) throw ValidationError("augment_elastic: alpha must be nonnegative");
  if (sigma < 0) throw ValidationError("augment_elastic: sigma must be nonnegative");
  if (alpha == 0) return s;
  const Index H = s.height(), W = s.width();
  Rng rng(mix_seed(seed, 0xe1a5));
  Image ux(H, W), uy(H, W);
  for (Index i = 0; i < ux.size(); ++i) ux.data()[i] = rng.uniform(-1.0, 1.0);
  for (Index i = 0; i < uy.size(); ++i) uy.data()[i] = rng.uniform(-1.0, 1.0);
  ux = gaussian_blur(ux, sigma);
  uy = gaussian_blur(uy, sigma);
  const double peak = std::max(ux.abs().maxCoeff(), uy.abs().maxCoeff());
  if (peak > 0) {
    ux *= alpha / peak;
    uy *= alpha / peak;
  }

  Sample out = s;
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x) {
      const double sx = std::clamp(x + ux(y, x), 0.0, static_cast<double>(W - 1));
      const double sy = std::clamp(y + uy(y, x), 0.0, static_cast<double>(H - 1));
      const Index x0 = static_cast<Index>(std::floor(sx)), y0 = static_cast<Index>(std::floor(sy));
      const Index x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
      for (std::size_t c = 0; c < s.channels.size(); ++c) {
        const Image& src = s.channels[c];
        out.channels[c](y, x) = (1 - fy) * ((1 - fx) * src(y0, x0) + fx * src(y0, x1)) +
                                fy * ((1 - fx) * src(y1, x0) + fx * src(y1, x1));
      }
      out.mask(y, x) = s.mask(static_cast<Index>(std::lround(sy)), static_cast<Index>(std::lround(sx)));
    }
  return out;
}

void AugmentConfig::validate() const {
  if (max_shift < 0) throw ConfigError("augment.max_shift must be nonnegative");
  if (blur_sigma_max < 0) throw ConfigError("augment.blur_sigma_max must be nonnegative");
  if (elastic_alpha < 0 || elastic_sigma < 0) throw ConfigError("augment.elastic_alpha/sigma must be nonnegative");
}

nlohmann::json AugmentConfig::to_json() const {
  return {{"enabled", enabled},
          {"max_shift", max_shift},
          {"blur_sigma_max", blur_sigma_max},
          {"elastic_alpha", elastic_alpha},
          {"elastic_sigma", elastic_sigma}};
}

AugmentConfig AugmentConfig::from_json(const nlohmann::json& j) {
  AugmentConfig c;
  c.enabled = j.at("enabled").get<bool>();
  c.max_shift = j.at("max_shift").get<int>();
  c.blur_sigma_max = j.at("blur_sigma_max").get<double>();
  c.elastic_alpha = j.at("elastic_alpha").get<double>();
  c.elastic_sigma = j.at("elastic_sigma").get<double>();
  c.validate();
  return c;
}

Sample augment_random(const Sample& s, const AugmentConfig& cfg, std::uint64_t seed) {
  if (!cfg.enabled) return s;
  Rng rng(mix_seed(seed, 0xa06));
  const int dx = static_cast<int>(rng.integer(-cfg.max_shift, cfg.max_shift));
  const int dy = static_cast<int>(rng.integer(-cfg.max_shift, cfg.max_shift));
  const double sigma = rng.uniform(0.0, cfg.blur_sigma_max);
  const std::uint64_t elastic_seed = rng.bits();
  Sample out = augment_translate(s, dx, dy);
  out = augment_blur(out, sigma);
  return augment_elastic(out, cfg.elastic_alpha, cfg.elastic_sigma, elastic_seed);
}

}  // namespace radseg::pipeline
