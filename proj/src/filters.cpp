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

#include "radseg/filters.hpp"

#include "radseg/errors.hpp"

#include <algorithm>
#include <cmath>

namespace radseg {

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma < 0) throw ValidationError("gaussian sigma must be nonnegative");
  if (sigma == 0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  return k;
}

namespace {

Index mirror(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace

Image gaussian_blur(const Image& img, double sigma) {
  const auto k = gaussian_kernel(sigma);
  if (k.size() == 1) return img;
  const Index r = static_cast<Index>(k.size() / 2), H = img.rows(), W = img.cols();
  Image tmp(H, W), out(H, W);
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x) {
      double s = 0.0;
      for (Index j = -r; j <= r; ++j) s += k[static_cast<std::size_t>(j + r)] * img(y, mirror(x + j, W));
      tmp(y, x) = s;
    }
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x) {
      double s = 0.0;
      for (Index j = -r; j <= r; ++j) s += k[static_cast<std::size_t>(j + r)] * tmp(mirror(y + j, H), x);
      out(y, x) = s;
    }
  return out;
}

Image masked_gaussian_blur(const Image& img, const Mask& mask, double sigma) {
  const Image w = mask.cast<double>();
  const Image num = gaussian_blur(img * w, sigma);
  const Image den = gaussian_blur(w, sigma);
  return (den > 1e-12).select(num / den.max(1e-12), img);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("percentile of empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double percentile(const Image& img, double q) {
  return percentile(std::vector<double>(img.data(), img.data() + img.size()), q);
}

}  // namespace radseg
