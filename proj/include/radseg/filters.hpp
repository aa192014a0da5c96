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

#include <vector>

namespace radseg {

/// Normalized 1-D Gaussian taps, radius ceil(3 sigma). sigma = 0 gives {1}.
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur with mirror (half-sample symmetric) boundaries.
Image gaussian_blur(const Image& img, double sigma);

/// Blur restricted to `mask`: sum(w * img) / sum(w) over masked neighbours.
/// Pixels with no masked neighbour keep their input value.
Image masked_gaussian_blur(const Image& img, const Mask& mask, double sigma);

/// Linear-interpolated percentile, q in [0,100].
double percentile(const Image& img, double q);
double percentile(std::vector<double> values, double q);

}  // namespace radseg
