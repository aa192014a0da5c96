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

#include "radseg/nn/tensor.hpp"
#include "radseg/random.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>

namespace radseg::testing {

using nn::Index;
using nn::Tensor;

inline Tensor<double> random_tensor(nn::Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.values()[i] = scale * rng.normal();
  return t;
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
  const double scale = std::max(a.matrix().norm(), b.matrix().norm());
  return scale == 0.0 ? 0.0 : (a - b).matrix().norm() / scale;
}

/// Central differences of `f` with respect to every entry of `x`.
inline Eigen::ArrayXd numeric_gradient(Tensor<double>& x, const std::function<double()>& f, double h = 1e-6) {
  Eigen::ArrayXd g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double keep = x.values()[i];
    x.values()[i] = keep + h;
    const double up = f();
    x.values()[i] = keep - h;
    const double down = f();
    x.values()[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Same, over a plain array.
inline Eigen::ArrayXd numeric_gradient(Eigen::ArrayXd& x, const std::function<double()>& f, double h = 1e-6) {
  Eigen::ArrayXd g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// <a, w>: projects a tensor output onto fixed random weights to get a scalar.
inline double project(const Tensor<double>& a, const Tensor<double>& w) { return (a.values() * w.values()).sum(); }

}  // namespace radseg::testing
