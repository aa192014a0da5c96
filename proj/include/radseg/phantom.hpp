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
#include <optional>
#include <string>
#include <vector>

namespace radseg::phantom {

struct TissueClass {
  std::string name;
  double pd = 1.0;     ///< proton density, arbitrary units
  double t2_ms = 50.0;

  void validate() const;
};

/// easy: distractor organs have their natural PD/T2.
/// t2_only: one distractor shares the liver PD and another is matched to the liver's
/// all-echo (composite) brightness; both differ from the liver in T2 by >= 30%.
enum class Difficulty { easy, t2_only };

Difficulty parse_difficulty(const std::string& s);
std::string to_string(Difficulty d);

/// Default tissue properties, typical 1.5T magnitudes.
struct TissueDefaults {
  TissueClass soft_tissue{"soft_tissue", 0.55, 30.0};
  TissueClass liver{"liver", 0.80, 45.0};
  TissueClass spleen{"spleen", 0.85, 80.0};
  TissueClass kidney{"kidney", 0.90, 65.0};
  TissueClass fat{"fat", 1.00, 90.0};
  TissueClass fluid{"fluid", 1.00, 300.0};
  double jitter = 0.08;  ///< relative per-phantom T2/PD jitter
};

struct PhantomOptions {
  TissueDefaults tissues;
  double bias_amplitude = 0.0;  ///< 0 disables the bias field
  /// Echo timing used to match the composite brightness of t2_only distractors.
  double echo_spacing_ms = 7.3;
  int etl = 32;
};

/// Label 0 is air outside the body and carries no signal; label k >= 1 maps to tissues[k-1].
struct Phantom {
  LabelMap labels;
  std::vector<TissueClass> tissues;
  std::uint8_t liver_id = 0;
  std::optional<Image> bias;

  Index size() const { return labels.rows(); }
  const TissueClass& tissue(std::uint8_t label) const { return tissues.at(label - 1u); }
  Mask liver_mask() const { return (labels == liver_id).cast<std::uint8_t>(); }
  Mask body_mask() const { return (labels != 0).cast<std::uint8_t>(); }
  void validate() const;

  nlohmann::json describe() const;
};

/// Pure function of its arguments. `size` must be >= 32 and divisible by 16.
Phantom generate_phantom(std::uint64_t seed, Index size, Difficulty difficulty, const PhantomOptions& options = {});

/// Smooth multiplicative field from low-order harmonics: mean 1, values in [1-a, 1+a].
Image synth_bias_field(std::uint64_t seed, Index size, double amplitude);

struct PhantomImages {
  Image pd;
  Image t2;  ///< true T2 in ms, 0 outside the body
  Mask liver;
};

PhantomImages pd_t2_images(const Phantom& ph);

/// Mean over the echo train of exp(-TE/T2): relative brightness of a tissue in an all-echo image.
double composite_weight(double t2_ms, double echo_spacing_ms, int etl);

}  // namespace radseg::phantom
