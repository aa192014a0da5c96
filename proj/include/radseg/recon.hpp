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

#include "radseg/acquisition.hpp"
#include "radseg/types.hpp"

#include <json.hpp>

#include <vector>

namespace radseg::recon {

struct GriddingConfig {
  double oversample = 2.0;
  int kernel_width = 4;
  double kernel_beta = 0.0;  ///< 0 -> beta from the width/oversampling formula
  double deapod_floor = 1e-8;

  /// pi * sqrt((W/a)^2 (a - 1/2)^2 - 0.8) when kernel_beta is 0.
  double beta() const;
  void validate(Index matrix) const;

  nlohmann::json to_json() const;
  static GriddingConfig from_json(const nlohmann::json& j);
};

/// Kaiser-Bessel kernel at offset d (grid cells), zero outside |d| <= W/2, 1 at d = 0.
double kb_kernel(double d, int width, double beta);
/// Continuous Fourier transform of kb_kernel at t cycles per grid cell.
double kb_transform(double t, int width, double beta);

/// Per-sample ramp weights (views x samples): area of the k-space cell each sample
/// represents, in Cartesian Nyquist cells; they sum to pi*N^2/4.
Image density_weights(const acquisition::RadialKSpace& ks);

/// Gridding with explicit per-sample weights (density compensation already applied).
ComplexImage grid_recon_complex(const acquisition::RadialKSpace& ks, const Image& sample_weights,
                                const GriddingConfig& cfg);

/// Density-compensated gridding with per-view weights, renormalized so the weights
/// average to 1 over views; magnitude image of size matrix x matrix.
Image grid_recon(const acquisition::RadialKSpace& ks, const std::vector<double>& view_weights,
                 const GriddingConfig& cfg = {});

/// All views, unit weights.
Image composite(const acquisition::RadialKSpace& ks, const GriddingConfig& cfg = {});

struct EchoImageSet {
  std::vector<Image> images;
  std::vector<double> te_ms;
  std::vector<int> echoes;

  void validate() const;
};

/// Echo sharing: within |k| <= kc only views of the target echo contribute (band
/// weights renormalized); beyond kc all views are shared.
EchoImageSet te_images(const acquisition::RadialKSpace& ks, const std::vector<int>& target_echoes, double kc,
                       const GriddingConfig& cfg = {});

std::vector<int> all_echoes(int etl);

}  // namespace radseg::recon
