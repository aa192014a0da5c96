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

#include "radseg/t2map.hpp"

#include "radseg/errors.hpp"
#include "radseg/parallel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace radseg::t2map {

void FitConfig::validate() const {
  if (noise_floor_factor < 0) throw ConfigError("fit.noise_floor_factor must be nonnegative");
  if (max_iterations < 1) throw ConfigError("fit.max_iterations must be positive");
  if (!(tolerance > 0)) throw ConfigError("fit.tolerance must be positive");
  if (!(lambda_init > 0)) throw ConfigError("fit.lambda_init must be positive");
}

nlohmann::json FitConfig::to_json() const {
  return {{"noise_floor", noise_floor},
          {"noise_floor_factor", noise_floor_factor},
          {"max_iterations", max_iterations},
          {"tolerance", tolerance},
          {"lambda_init", lambda_init}};
}

FitConfig FitConfig::from_json(const nlohmann::json& j) {
  FitConfig c;
  c.noise_floor = j.at("noise_floor").get<double>();
  c.noise_floor_factor = j.at("noise_floor_factor").get<double>();
  c.max_iterations = j.at("max_iterations").get<int>();
  c.tolerance = j.at("tolerance").get<double>();
  c.lambda_init = j.at("lambda_init").get<double>();
  c.validate();
  return c;
}

namespace {

double cost(std::span<const double> s, std::span<const double> te, double pd, double t2) {
  double c = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double r = pd * std::exp(-te[i] / t2) - s[i];
    c += r * r;
  }
  return c;
}

}  // namespace

PixelFit fit_pixel(std::span<const double> signal, std::span<const double> te_ms, double noise_floor,
                   const FitConfig& cfg) {
  if (signal.size() != te_ms.size()) throw ShapeError("fit_pixel: signal and te lengths differ");
  if (signal.size() < 3) throw ValidationError("fit_pixel needs at least 3 echoes");
  for (std::size_t i = 1; i < te_ms.size(); ++i)
    if (!(te_ms[i] > te_ms[i - 1])) throw ValidationError("fit_pixel: te must be strictly increasing");

  PixelFit fit;
  // Log-linear least squares over samples above the floor: ln s = ln pd - te/t2.
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < signal.size(); ++i) {
    if (!(signal[i] > noise_floor) || !(signal[i] > 0)) continue;
    const double y = std::log(signal[i]);
    n += 1;
    sx += te_ms[i];
    sy += y;
    sxx += te_ms[i] * te_ms[i];
    sxy += te_ms[i] * y;
  }
  if (n < 2) return fit;
  const double det = n * sxx - sx * sx;
  const double slope = (n * sxy - sx * sy) / det;
  const double intercept = (sy - slope * sx) / n;
  double pd = std::exp(intercept);
  double t2 = slope < -1e-9 ? -1.0 / slope : 1e4;
  if (!std::isfinite(pd) || !std::isfinite(t2)) return fit;

  double c = cost(signal, te_ms, pd, t2);
  fit.initial_residual = c;
  double lambda = cfg.lambda_init;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    fit.iterations = it + 1;
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < signal.size(); ++i) {
      const double e = std::exp(-te_ms[i] / t2);
      const Eigen::Vector2d j(e, pd * e * te_ms[i] / (t2 * t2));
      const double r = pd * e - signal[i];
      jtj += j * j.transpose();
      jtr += j * r;
    }
    bool accepted = false, converged = false;
    while (lambda < 1e12) {
      Eigen::Matrix2d a = jtj;
      a.diagonal() *= 1.0 + lambda;
      const Eigen::Vector2d step = a.ldlt().solve(-jtr);
      const double pd_new = pd + step[0], t2_new = t2 + step[1];
      if (std::isfinite(pd_new) && std::isfinite(t2_new) && t2_new > 0) {
        const double c_new = cost(signal, te_ms, pd_new, t2_new);
        if (c_new <= c) {
          converged = std::max(std::abs(step[0]) / std::max(std::abs(pd_new), 1e-300),
                               std::abs(step[1]) / t2_new) < cfg.tolerance;
          pd = pd_new;
          t2 = t2_new;
          c = c_new;
          lambda = std::max(lambda / 10.0, 1e-12);
          accepted = true;
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!accepted || converged) break;  // no further descent possible, or converged
  }
  if (!std::isfinite(pd) || !std::isfinite(t2) || !(t2 > 0)) return PixelFit{};
  fit.pd = pd;
  fit.t2_ms = t2;
  fit.residual = c;
  fit.valid = true;
  return fit;
}

double estimate_background_sigma(const recon::EchoImageSet& imgs) {
  imgs.validate();
  const Index H = imgs.images[0].rows(), W = imgs.images[0].cols();
  const Index p = std::max<Index>(2, std::min(H, W) / 8);
  double sum = 0.0;
  Index count = 0;
  for (const auto& img : imgs.images) {
    for (Index oy : {Index{0}, H - p})
      for (Index ox : {Index{0}, W - p}) {
        sum += img.block(oy, ox, p, p).square().sum();
        count += p * p;
      }
  }
  return std::sqrt(sum / static_cast<double>(count) / 2.0);
}

Image clip_t2(const Image& t2_ms) { return t2_ms.max(0.0).min(kT2ClipMaxMs); }

T2Map fit_map(const recon::EchoImageSet& imgs, const Mask* mask, const FitConfig& cfg) {
  cfg.validate();
  if (imgs.images.size() < 3) throw ValidationError("fit_map needs at least 3 echo images");
  imgs.validate();
  const Index H = imgs.images[0].rows(), W = imgs.images[0].cols();
  if (mask && (mask->rows() != H || mask->cols() != W)) throw ShapeError("fit_map: mask size");
  const double floor =
      cfg.noise_floor >= 0 ? cfg.noise_floor : cfg.noise_floor_factor * estimate_background_sigma(imgs);

  T2Map map{Image::Zero(H, W), Image::Zero(H, W), Mask::Zero(H, W)};
  const std::size_t E = imgs.images.size();
  parallel_for(H * W, [&](std::int64_t i) {
    if (mask && !mask->data()[i]) return;
    std::vector<double> s(E);
    for (std::size_t e = 0; e < E; ++e) s[e] = imgs.images[e].data()[i];
    const PixelFit f = fit_pixel(s, imgs.te_ms, floor, cfg);
    if (!f.valid) return;
    map.t2_ms.data()[i] = f.t2_ms;
    map.pd.data()[i] = std::max(f.pd, 0.0);
    map.valid.data()[i] = 1;
  });
  map.t2_ms = clip_t2(map.t2_ms);
  return map;
}

}  // namespace radseg::t2map
