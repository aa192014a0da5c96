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

#include "radseg/phantom.hpp"
#include "radseg/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace radseg::acquisition {

enum class ViewOrder { interleaved, golden_angle };

struct SequenceParams {
  double tr_ms = 2500.0;
  double echo_spacing_ms = 7.3;
  int etl = 32;
  Index matrix = 64;
  Index views = 0;            ///< 0 -> Nyquist default for the matrix
  Index readout_samples = 0;  ///< 0 -> matrix
  ViewOrder order = ViewOrder::interleaved;

  /// 2*etl*ceil(matrix*pi/2 / (2*etl)): smallest multiple of 2*etl at or above radial Nyquist.
  static Index nyquist_views(Index matrix, int etl);
  /// Copy with the zero-valued defaults filled in; throws ConfigError when invalid.
  SequenceParams resolved() const;
  void validate() const;
  double te_ms(int echo) const { return (echo + 1) * echo_spacing_ms; }

  nlohmann::json to_json() const;
  static SequenceParams from_json(const nlohmann::json& j);
};

struct ViewInfo {
  double angle;  ///< radians in [0, pi)
  int echo;      ///< echo index in [0, etl)
};

/// Interleaved order: view v has echo e = v mod etl and interleave j = v div etl,
/// angle pi*(j*etl + e)/views. Golden-angle order steps by 111.246... degrees.
std::vector<ViewInfo> view_schedule(const SequenceParams& params);

/// Readout coordinate of sample s in cycles/pixel: (s - R/2)/R, covering [-0.5, 0.5).
double readout_k(Index sample, Index readout_samples);

/// Multi-echo radial k-space, views x readout samples.
struct RadialKSpace {
  ComplexImage data;
  std::vector<double> angle;
  std::vector<int> echo_index;
  SequenceParams params;

  Index views() const { return data.rows(); }
  Index samples() const { return data.cols(); }
  void validate() const;
};

/// pd * exp(-te/t2)
double echo_signal(double pd, double t2_ms, double te_ms);

/// Continuous Fourier transform of `img` (pixel centres at x - W/2, y - H/2) at (kx, ky) cycles/pixel.
Complex fourier_sample(const Image& img, double kx, double ky);

/// Multi-echo forward model by direct summation; complex white noise (std noise_sigma per
/// real/imaginary component) when noise_sigma > 0.
RadialKSpace acquire(const phantom::Phantom& ph, const SequenceParams& params, double noise_sigma,
                     std::uint64_t seed);

/// Echo image I_e = bias * pd * exp(-TE_e/T2).
Image echo_image(const phantom::Phantom& ph, const SequenceParams& params, int echo);

}  // namespace radseg::acquisition
