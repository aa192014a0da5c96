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

#include "radseg/loss.hpp"

namespace radseg::loss {

using radseg::Index;

GdlMode parse_gdl_mode(const std::string& s) {
  if (s == "corrected") return GdlMode::corrected;
  if (s == "as_written") return GdlMode::as_written;
  throw ConfigError("unknown gdl mode '" + s + "' (expected corrected | as_written)");
}

std::string to_string(GdlMode m) { return m == GdlMode::corrected ? "corrected" : "as_written"; }

template <typename S>
ForegroundLoss<S> foreground_gdl(const nn::Tensor<S>& probs, const nn::Tensor<S>& labels,
                                 const GdlVariant& variant) {
  nn::require_nchw(probs, "foreground_gdl probabilities");
  nn::require_nchw(labels, "foreground_gdl labels");
  const Index N = probs.dim(0), K = probs.dim(1), HW = probs.dim(2) * probs.dim(3);
  if (K < 2) throw ShapeError("foreground_gdl needs at least two classes");
  if (labels.shape() != nn::Shape{N, 1, probs.dim(2), probs.dim(3)})
    throw ShapeError("foreground_gdl: labels " + nn::to_string(labels.shape()) + " vs probabilities " +
                     nn::to_string(probs.shape()));

  Eigen::Array<S, Eigen::Dynamic, 1> fg(N * HW);
  for (Index n = 0; n < N; ++n) fg.segment(n * HW, HW) = probs.values().segment((n * K + 1) * HW, HW);
  // Softmax output can round a hair outside [0,1] in float.
  fg = fg.max(S(0)).min(S(1));

  ForegroundLoss<S> out{gdl(fg, labels.values(), variant), nn::Tensor<S>(probs.shape())};
  const Eigen::ArrayXd g = gdl_gradient(fg, labels.values(), variant);
  for (Index n = 0; n < N; ++n)
    out.grad_probs.values().segment((n * K + 1) * HW, HW) = g.segment(n * HW, HW).template cast<S>();
  return out;
}

template ForegroundLoss<float> foreground_gdl(const nn::Tensor<float>&, const nn::Tensor<float>&, const GdlVariant&);
template ForegroundLoss<double> foreground_gdl(const nn::Tensor<double>&, const nn::Tensor<double>&,
                                               const GdlVariant&);

}  // namespace radseg::loss
