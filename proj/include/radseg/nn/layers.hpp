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

// Forward/backward kernels for the layer set of the segmentation network.
// Every kernel is a free function over NCHW tensors; the *Layer classes
// below own parameters and cache what their backward pass needs.

#include "radseg/nn/tensor.hpp"

#include <cstdint>
#include "radseg/random.hpp"
#include <string>
#include <vector>

namespace radseg::nn {

enum class Mode { train, eval };

/// Zero padding that preserves spatial size for an odd kernel; ConfigError for even kernels.
Index same_padding(Index kernel);

// ---------------------------------------------------------------- convolution

/// Cross-correlation with zero padding `pad` and stride 1.
/// input [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout] -> [N,Cout,H+2p-kh+1,W+2p-kw+1].
template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias, Index pad);

template <typename S>
struct Conv2dGrads {
  Tensor<S> input, weight, bias;
};

template <typename S>
Conv2dGrads<S> conv2d_backward(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& grad_out, Index pad);

// ----------------------------------------------------------------- batch norm

template <typename S>
struct BatchNormState {
  using Array = Eigen::Array<S, Eigen::Dynamic, 1>;
  Array running_mean;
  Array running_var;
  bool has_stats = false;
  double momentum = 0.9;  ///< weight kept on the previous running value
  double eps = 1e-5;

  explicit BatchNormState(Index channels = 0)
      : running_mean(Array::Zero(channels)), running_var(Array::Ones(channels)) {}
};

/// Saved by the forward pass for batchnorm_backward.
template <typename S>
struct BatchNormCache {
  Tensor<S> normalized;
  Eigen::Array<S, Eigen::Dynamic, 1> inv_std;
  Mode mode = Mode::train;
};

template <typename S>
Tensor<S> batchnorm(const Tensor<S>& input, const Tensor<S>& gamma, const Tensor<S>& beta, BatchNormState<S>& state,
                    Mode mode, BatchNormCache<S>* cache = nullptr);

template <typename S>
struct BatchNormGrads {
  Tensor<S> input, gamma, beta;
};

template <typename S>
BatchNormGrads<S> batchnorm_backward(const BatchNormCache<S>& cache, const Tensor<S>& gamma,
                                     const Tensor<S>& grad_out);

// -------------------------------------------------------------- elementwise

template <typename S>
Tensor<S> relu(const Tensor<S>& input);

/// Passes gradient where input > 0.
template <typename S>
Tensor<S> relu_backward(const Tensor<S>& input, const Tensor<S>& grad_out);

// ------------------------------------------------------------------ pooling

/// 2x2 stride-2 max pool. Ties resolve to the first element in row-major window order.
/// When `argmax` is given it receives, per output element, the flat input offset of the winner.
template <typename S>
Tensor<S> maxpool2(const Tensor<S>& input, std::vector<Index>* argmax = nullptr);

template <typename S>
Tensor<S> maxpool2_backward(const Shape& input_shape, const std::vector<Index>& argmax, const Tensor<S>& grad_out);

// ----------------------------------------------------------------- upsampling

/// Stride-2 transposed convolution, kernel 2x2, no padding, no bias.
/// input [N,C,H,W], weight [C,Cout,2,2] -> [N,Cout,2H,2W].
template <typename S>
Tensor<S> upconv2(const Tensor<S>& input, const Tensor<S>& weight);

template <typename S>
struct UpConvGrads {
  Tensor<S> input, weight;
};

template <typename S>
UpConvGrads<S> upconv2_backward(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& grad_out);

/// Nearest-neighbour x2 upsampling.
template <typename S>
Tensor<S> upsample_nearest2(const Tensor<S>& input);

template <typename S>
Tensor<S> upsample_nearest2_backward(const Tensor<S>& grad_out);

// -------------------------------------------------------------------- concat

/// Stacks channels of `a` then `b`.
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b);

/// Splits grad_out back into the `a` and `b` channel blocks.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> concat_channels_backward(const Tensor<S>& grad_out, Index channels_a);

// ------------------------------------------------------------------- softmax

/// Per-pixel softmax across channels, max-subtracted.
template <typename S>
Tensor<S> softmax_channels(const Tensor<S>& logits);

template <typename S>
Tensor<S> softmax_channels_backward(const Tensor<S>& probs, const Tensor<S>& grad_out);

// ==================================================================== layers

/// Named reference to a trainable tensor.
template <typename S>
struct Parameter {
  std::string name;
  Tensor<S>* tensor;
  bool decay;  ///< subject to weight decay (conv/upconv weights only)
};

template <typename S>
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  /// Kaiming (fan-in) normal init; bias zero.
  Conv2dLayer(Index in_channels, Index out_channels, Index kernel, Rng& rng);

  Tensor<S> forward(const Tensor<S>& x);
  Tensor<S> backward(const Tensor<S>& grad_out);
  void collect(const std::string& prefix, std::vector<Parameter<S>>& out);

  Tensor<S> weight, bias;
  Index pad = 0;

 private:
  Tensor<S> input_;
  bool ready_ = false;
};

template <typename S>
class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  BatchNormLayer(Index channels, double momentum, double eps);

  Tensor<S> forward(const Tensor<S>& x, Mode mode);
  Tensor<S> backward(const Tensor<S>& grad_out);
  void collect(const std::string& prefix, std::vector<Parameter<S>>& out);

  Tensor<S> gamma, beta;
  BatchNormState<S> state;

 private:
  BatchNormCache<S> cache_;
  bool ready_ = false;
};

template <typename S>
class UpConvLayer {
 public:
  UpConvLayer() = default;
  UpConvLayer(Index in_channels, Index out_channels, Rng& rng);

  Tensor<S> forward(const Tensor<S>& x);
  Tensor<S> backward(const Tensor<S>& grad_out);
  void collect(const std::string& prefix, std::vector<Parameter<S>>& out);

  Tensor<S> weight;

 private:
  Tensor<S> input_;
  bool ready_ = false;
};

}  // namespace radseg::nn
