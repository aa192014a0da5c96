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

// Generalized dice loss over a foreground probability map p and binary labels r:
//
//   GDL = 1 - sum(p r) / (sum p + sum r + eps) - sum((1-p)(1-r)) / D_bg
//
// with D_bg = sum p + sum r + eps in the as_written variant and
// D_bg = sum(1-p) + sum(1-r) + eps in the corrected variant.

#include "radseg/errors.hpp"
#include "radseg/types.hpp"
#include "radseg/nn/layers.hpp"
#include "radseg/nn/tensor.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace radseg::loss {

enum class GdlMode { as_written, corrected };

struct GdlVariant {
  GdlMode mode = GdlMode::corrected;
  double epsilon = 1e-7;

  void validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("gdl epsilon must be positive");
  }
};

GdlMode parse_gdl_mode(const std::string& s);
std::string to_string(GdlMode m);

namespace detail {

template <typename P, typename R>
void check_operands(const Eigen::ArrayBase<P>& p, const Eigen::ArrayBase<R>& r) {
  if (p.size() != r.size())
    throw ShapeError("gdl: prediction has " + std::to_string(p.size()) + " values, labels " +
                     std::to_string(r.size()));
  if (!((r == 0) || (r == 1)).all()) throw ValidationError("gdl: labels must be binary");
  if (!((p >= 0) && (p <= 1)).all()) throw ValidationError("gdl: probabilities must lie in [0,1]");
}

struct GdlSums {
  double overlap, fg_denominator, background, bg_denominator;
};

template <typename P, typename R>
GdlSums sums(const Eigen::ArrayBase<P>& p_in, const Eigen::ArrayBase<R>& r_in, const GdlVariant& v) {
  const auto p = p_in.template cast<double>();
  const auto r = r_in.template cast<double>();
  const double n = static_cast<double>(p.size());
  const double sp = p.sum(), sr = r.sum();
  GdlSums s;
  s.overlap = (p * r).sum();
  s.fg_denominator = sp + sr + v.epsilon;
  s.background = ((1.0 - p) * (1.0 - r)).sum();
  s.bg_denominator = v.mode == GdlMode::corrected ? (n - sp) + (n - sr) + v.epsilon : s.fg_denominator;
  return s;
}

}  // namespace detail

template <typename P, typename R>
double gdl(const Eigen::ArrayBase<P>& p, const Eigen::ArrayBase<R>& r, const GdlVariant& variant = {}) {
  variant.validate();
  detail::check_operands(p, r);
  const auto s = detail::sums(p, r, variant);
  return 1.0 - s.overlap / s.fg_denominator - s.background / s.bg_denominator;
}

/// dGDL/dp, same length as p.
template <typename P, typename R>
Eigen::ArrayXd gdl_gradient(const Eigen::ArrayBase<P>& p_in, const Eigen::ArrayBase<R>& r_in,
                            const GdlVariant& variant = {}) {
  variant.validate();
  detail::check_operands(p_in, r_in);
  const auto s = detail::sums(p_in, r_in, variant);
  const Eigen::ArrayXd r = r_in.template cast<double>();
  const double d1 = s.fg_denominator, d2 = s.bg_denominator;
  // d(A/D1)/dp = (r D1 - A) / D1^2,  dB/dp = -(1-r)
  Eigen::ArrayXd g = -(r * d1 - s.overlap) / (d1 * d1);
  if (variant.mode == GdlMode::corrected)
    g -= (s.background - (1.0 - r) * d2) / (d2 * d2);  // dD2/dp = -1
  else
    g -= (-(1.0 - r) * d2 - s.background) / (d2 * d2);  // D2 = D1, dD1/dp = +1
  return g;
}

/// (lambda/2) * sum(w^2)
template <typename W>
double l2_penalty(const Eigen::ArrayBase<W>& w, double lambda) {
  if (lambda < 0) throw ConfigError("l2 penalty lambda must be nonnegative");
  return 0.5 * lambda * w.template cast<double>().square().sum();
}

/// Sum of the penalty over decayed parameters (conv/upconv weights; BN and biases excluded).
/// With `accumulate_grad`, adds lambda*w into each parameter's gradient buffer.
template <typename S>
double l2_penalty(const std::vector<nn::Parameter<S>>& params, double lambda, bool accumulate_grad = false) {
  double total = 0.0;
  for (const auto& p : params) {
    if (!p.decay) continue;
    total += l2_penalty(p.tensor->values(), lambda);
    if (accumulate_grad) p.tensor->grad() += static_cast<S>(lambda) * p.tensor->values();
  }
  return total;
}

/// Loss on the foreground channel (index 1) of network probabilities against a
/// binary label tensor [N,1,H,W]; returns the loss and dLoss/dProbabilities.
template <typename S>
struct ForegroundLoss {
  double value;
  nn::Tensor<S> grad_probs;
};

template <typename S>
ForegroundLoss<S> foreground_gdl(const nn::Tensor<S>& probs, const nn::Tensor<S>& labels,
                                 const GdlVariant& variant = {});

}  // namespace radseg::loss
