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

#include "radseg/nn/layers.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace radseg::nn {

enum class UpsampleMode { transposed, nearest_conv };

struct NetConfig {
  Index in_channels = 1;  ///< 1 for single-channel inputs, 2 for the TE pair
  Index base_features = 8;
  Index levels = 4;
  Index classes = 2;
  UpsampleMode upsample = UpsampleMode::transposed;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;

  void validate() const;
  /// Height and width must be multiples of this.
  Index size_multiple() const { return Index{1} << levels; }

  nlohmann::json to_json() const;
  static NetConfig from_json(const nlohmann::json& j);
};

/// conv3x3 -> batch norm -> relu
template <typename S>
struct ConvBlock {
  Conv2dLayer<S> conv;
  BatchNormLayer<S> bn;
  Tensor<S> pre_relu;

  ConvBlock() = default;
  ConvBlock(Index in, Index out, const NetConfig& cfg, Rng& rng);
  Tensor<S> forward(const Tensor<S>& x, Mode mode);
  Tensor<S> backward(const Tensor<S>& grad_out);
};

/// U-shaped segmentation network: `levels` resolution levels, two conv blocks per
/// level, skip concatenation on the expanding path, 1x1 head and channel softmax.
/// Every convolution (3x3, upsampling and head) is followed by batch norm.
template <typename S>
class UNet {
 public:
  UNet(const NetConfig& config, std::uint64_t seed);

  /// Returns per-pixel class probabilities [N,classes,H,W].
  Tensor<S> forward(const Tensor<S>& input, Mode mode);
  /// Accumulates parameter gradients from dLoss/dProbabilities; returns dLoss/dInput.
  Tensor<S> backward(const Tensor<S>& grad_probs);

  std::vector<Parameter<S>> parameters();
  /// Batch-norm layers in parameter order (their running statistics are persisted).
  std::vector<BatchNormLayer<S>*> batchnorms();
  void zero_grad();

  const NetConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }

 private:
  struct Level {
    ConvBlock<S> first, second;
  };
  struct Up {
    UpConvLayer<S> upconv;  // transposed mode
    Conv2dLayer<S> conv;    // nearest_conv mode
    BatchNormLayer<S> bn;
    Index skip_channels = 0;
    Level level;
  };

  NetConfig config_;
  std::uint64_t seed_;
  std::vector<Level> down_;  // down_[levels-1] is the bottom
  std::vector<Up> up_;       // up_[l] produces level l, l = levels-2 .. 0
  Conv2dLayer<S> head_;
  BatchNormLayer<S> head_bn_;

  std::vector<Tensor<S>> skips_;
  std::vector<std::vector<Index>> pool_argmax_;
  std::vector<Shape> pool_shapes_;
  Tensor<S> probs_;
  bool forward_done_ = false;
};

/// Writes config, seed, every parameter and batch-norm running statistic to one file:
/// 8-byte magic, u64 LE manifest length, JSON manifest, then LE float32 blobs in manifest order.
template <typename S>
void save_network(UNet<S>& net, const std::filesystem::path& path);

template <typename S>
UNet<S> load_network(const std::filesystem::path& path);

}  // namespace radseg::nn
