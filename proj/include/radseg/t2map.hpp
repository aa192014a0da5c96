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

#include "radseg/recon.hpp"
#include "radseg/types.hpp"

#include <json.hpp>

#include <span>

namespace radseg::t2map {

inline constexpr double kT2ClipMaxMs = 500.0;

struct FitConfig {
  double noise_floor = -1.0;        ///< < 0: estimate from image corners
  double noise_floor_factor = 3.0;  ///< floor = factor * background sigma
  int max_iterations = 100;
  double tolerance = 1e-8;  ///< relative parameter change
  double lambda_init = 1e-3;

  void validate() const;
  nlohmann::json to_json() const;
  static FitConfig from_json(const nlohmann::json& j);
};

struct PixelFit {
  double pd = 0.0;
  double t2_ms = 0.0;
  bool valid = false;
  double residual = 0.0;          ///< sum of squared residuals at the returned parameters
  double initial_residual = 0.0;  ///< same, at the log-linear initializer
  int iterations = 0;
};

/// Mono-exponential fit: log-linear initializer on samples above `noise_floor`, then
/// Levenberg-Marquardt on pd*exp(-te/t2) over all samples.
PixelFit fit_pixel(std::span<const double> signal, std::span<const double> te_ms, double noise_floor,
                   const FitConfig& cfg = {});

struct T2Map {
  Image t2_ms;
  Image pd;
  Mask valid;
};

/// Per-pixel fits; pixels outside `mask` (when given) are invalid. T2 clipped to [0, 500] ms.
T2Map fit_map(const recon::EchoImageSet& imgs, const Mask* mask = nullptr, const FitConfig& cfg = {});

/// Background sigma from the four corner patches, Rayleigh-corrected (sqrt(mean(m^2)/2)).
double estimate_background_sigma(const recon::EchoImageSet& imgs);

/// Clamp to [0, 500] ms.
Image clip_t2(const Image& t2_ms);

}  // namespace radseg::t2map
