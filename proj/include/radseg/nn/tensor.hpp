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

#include "radseg/errors.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace radseg::nn {

using Index = Eigen::Index;

/// Tensor extents. Image tensors use batch x channels x height x width.
using Shape = std::vector<Index>;

std::string to_string(const Shape& shape);

inline Index element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

/// Dense row-major tensor with an optional gradient buffer of the same shape.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)), values_(Array::Constant(element_count(shape_), fill)) {}
  Tensor(Shape shape, Array values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != element_count(shape_))
      throw ShapeError("value count " + std::to_string(values_.size()) + " does not match " + to_string(shape_));
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Index size() const { return values_.size(); }

  Array& values() { return values_; }
  const Array& values() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  bool has_grad() const { return grad_.has_value(); }
  /// Gradient buffer, allocated (zeroed) on first access.
  Array& grad() {
    if (!grad_) grad_ = Array::Zero(values_.size());
    return *grad_;
  }
  const Array& grad() const {
    if (!grad_) throw StateError("tensor has no gradient buffer");
    return *grad_;
  }
  void zero_grad() {
    if (grad_) grad_->setZero();
  }
  void drop_grad() { grad_.reset(); }

  // NCHW element access.
  Scalar& operator()(Index n, Index c, Index h, Index w) { return values_[offset(n, c, h, w)]; }
  Scalar operator()(Index n, Index c, Index h, Index w) const { return values_[offset(n, c, h, w)]; }
  Index offset(Index n, Index c, Index h, Index w) const {
    return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  bool all_finite() const { return values_.isFinite().all(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, values_.template cast<Other>().eval());
  }

 private:
  Shape shape_;
  Array values_;
  std::optional<Array> grad_;
};

/// Throws ShapeError unless `t` is rank 4.
template <typename Scalar>
void require_nchw(const Tensor<Scalar>& t, const char* what) {
  if (t.rank() != 4) throw ShapeError(std::string(what) + " expects NCHW, got " + to_string(t.shape()));
}

}  // namespace radseg::nn
