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

#include "radseg/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace radseg::pipeline {

enum class InputKind { composite, t2map, te_pair };

std::string to_string(InputKind k);
InputKind parse_input_kind(const std::string& s);

/// One network input slice with its label mask.
struct Sample {
  std::vector<Image> channels;
  Mask mask;
  int subject = 0;
  int slice = 0;
  InputKind kind = InputKind::composite;

  Index height() const { return mask.rows(); }
  Index width() const { return mask.cols(); }
  void validate() const;
};

// ------------------------------------------------------------ preprocessing

struct BiasCorrection {
  Image image;
  Image field;  ///< estimated multiplicative field, mean 1 over the body
  Mask body;
  Index clamped_pixels = 0;  ///< nonpositive body pixels raised to the smallest positive value
};

/// Homomorphic bias removal. The log-field is fitted in the gradient domain to a
/// low-order cosine basis whose finest half-period is `smooth_sigma` pixels; pixel
/// pairs straddling tissue edges are rejected with a robust threshold that is
/// re-estimated on every iteration. `body` defaults to pixels above 10% of the 99th
/// percentile.
BiasCorrection bias_correct_detailed(const Image& img, int iterations = 4, double smooth_sigma = 16.0,
                                     const Mask* body = nullptr);
Image bias_correct(const Image& img, int iterations = 4, double smooth_sigma = 16.0);

/// Affine map of the [p_lo, p_hi] percentile range to [0,1], clamped.
Image contrast_stretch(const Image& img, double p_lo = 1.0, double p_hi = 99.0);

/// (img - mean) / std, population std.
Image zscore(const Image& img);

/// Clamp a T2 map to [0, 500] ms.
Image clip_t2(const Image& t2_ms);

struct PreprocessConfig {
  bool bias_correction = true;
  int bias_iterations = 4;
  double bias_sigma = 16.0;
  double stretch_lo = 1.0;
  double stretch_hi = 99.0;
  bool zscore_t2 = false;

  void validate() const;
  nlohmann::json to_json() const;
  static PreprocessConfig from_json(const nlohmann::json& j);
};

/// Composite / TE image recipe: bias_correct -> contrast_stretch -> zscore.
Image preprocess_weighted(const Image& img, const PreprocessConfig& cfg);
/// T2 map recipe: clip_t2, then zscore when cfg.zscore_t2.
Image preprocess_t2(const Image& t2_ms, const PreprocessConfig& cfg);

// ------------------------------------------------------------- augmentation

/// Shift every channel and the mask by (dx, dy); vacated pixels become 0.
Sample augment_translate(const Sample& s, int dx, int dy);

/// Gaussian blur of the input channels; mask untouched.
Sample augment_blur(const Sample& s, double sigma);

/// Dense displacement = Gaussian-smoothed uniform noise rescaled so the largest
/// component magnitude equals `alpha` pixels. Bilinear resampling for channels,
/// nearest neighbour for the mask, one field for all of them.
Sample augment_elastic(const Sample& s, double alpha, double sigma, std::uint64_t seed);

struct AugmentConfig {
  bool enabled = true;
  int max_shift = 8;
  double blur_sigma_max = 1.5;
  double elastic_alpha = 8.0;
  double elastic_sigma = 4.0;

  void validate() const;
  nlohmann::json to_json() const;
  static AugmentConfig from_json(const nlohmann::json& j);
};

/// Translation, blur and elastic deformation with parameters drawn from `seed`.
Sample augment_random(const Sample& s, const AugmentConfig& cfg, std::uint64_t seed);

}  // namespace radseg::pipeline
