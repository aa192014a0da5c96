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

#include "radseg/nn/unet.hpp"

#include "radseg/io.hpp"

#include <fstream>

namespace radseg::nn {

void NetConfig::validate() const {
  if (in_channels < 1) throw ConfigError("net.in_channels must be positive");
  if (base_features < 1) throw ConfigError("net.base_features must be positive");
  if (levels < 2 || levels > 8) throw ConfigError("net.levels must be in [2,8]");
  if (classes < 2) throw ConfigError("net.classes must be at least 2");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw ConfigError("net.bn_momentum must be in [0,1)");
  if (!(bn_eps > 0.0)) throw ConfigError("net.bn_eps must be positive");
}

nlohmann::json NetConfig::to_json() const {
  return {{"in_channels", in_channels},
          {"base_features", base_features},
          {"levels", levels},
          {"classes", classes},
          {"upsample", upsample == UpsampleMode::transposed ? "transposed" : "nearest_conv"},
          {"bn_momentum", bn_momentum},
          {"bn_eps", bn_eps}};
}

NetConfig NetConfig::from_json(const nlohmann::json& j) {
  NetConfig c;
  c.in_channels = j.at("in_channels").get<Index>();
  c.base_features = j.at("base_features").get<Index>();
  c.levels = j.at("levels").get<Index>();
  c.classes = j.at("classes").get<Index>();
  const auto up = j.at("upsample").get<std::string>();
  if (up == "transposed")
    c.upsample = UpsampleMode::transposed;
  else if (up == "nearest_conv")
    c.upsample = UpsampleMode::nearest_conv;
  else
    throw ConfigError("unknown upsample mode '" + up + "'");
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.bn_eps = j.at("bn_eps").get<double>();
  c.validate();
  return c;
}

template <typename S>
ConvBlock<S>::ConvBlock(Index in, Index out, const NetConfig& cfg, Rng& rng)
    : conv(in, out, 3, rng), bn(out, cfg.bn_momentum, cfg.bn_eps) {}

template <typename S>
Tensor<S> ConvBlock<S>::forward(const Tensor<S>& x, Mode mode) {
  pre_relu = bn.forward(conv.forward(x), mode);
  return relu(pre_relu);
}

template <typename S>
Tensor<S> ConvBlock<S>::backward(const Tensor<S>& grad_out) {
  return conv.backward(bn.backward(relu_backward(pre_relu, grad_out)));
}

template <typename S>
UNet<S>::UNet(const NetConfig& config, std::uint64_t seed) : config_(config), seed_(seed) {
  config_.validate();
  Rng rng(seed);
  const Index L = config_.levels, f = config_.base_features;
  Index in = config_.in_channels;
  for (Index l = 0; l < L; ++l) {
    const Index width = f << l;
    Level lv;
    lv.first = ConvBlock<S>(in, width, config_, rng);
    lv.second = ConvBlock<S>(width, width, config_, rng);
    down_.push_back(std::move(lv));
    in = width;
  }
  up_.resize(static_cast<std::size_t>(L - 1));
  for (Index l = L - 2; l >= 0; --l) {
    const Index width = f << l, below = f << (l + 1);
    Up& u = up_[static_cast<std::size_t>(l)];
    if (config_.upsample == UpsampleMode::transposed)
      u.upconv = UpConvLayer<S>(below, width, rng);
    else
      u.conv = Conv2dLayer<S>(below, width, 3, rng);
    u.bn = BatchNormLayer<S>(width, config_.bn_momentum, config_.bn_eps);
    u.skip_channels = width;
    u.level.first = ConvBlock<S>(2 * width, width, config_, rng);
    u.level.second = ConvBlock<S>(width, width, config_, rng);
  }
  head_ = Conv2dLayer<S>(f, config_.classes, 1, rng);
  head_bn_ = BatchNormLayer<S>(config_.classes, config_.bn_momentum, config_.bn_eps);
}

template <typename S>
Tensor<S> UNet<S>::forward(const Tensor<S>& input, Mode mode) {
  require_nchw(input, "network input");
  if (input.dim(1) != config_.in_channels)
    throw ShapeError("network expects " + std::to_string(config_.in_channels) + " input channels, got " +
                     std::to_string(input.dim(1)));
  const Index m = config_.size_multiple();
  if (input.dim(2) % m || input.dim(3) % m)
    throw ShapeError("network input height/width must be divisible by " + std::to_string(m) + ", got " +
                     to_string(input.shape()));
  const Index L = config_.levels;
  skips_.assign(static_cast<std::size_t>(L - 1), {});
  pool_argmax_.assign(static_cast<std::size_t>(L - 1), {});
  pool_shapes_.assign(static_cast<std::size_t>(L - 1), {});

  Tensor<S> x = input;
  for (Index l = 0; l < L; ++l) {
    auto& lv = down_[static_cast<std::size_t>(l)];
    x = lv.second.forward(lv.first.forward(x, mode), mode);
    if (l < L - 1) {
      const auto i = static_cast<std::size_t>(l);
      skips_[i] = x;
      pool_shapes_[i] = x.shape();
      x = maxpool2(x, &pool_argmax_[i]);
    }
  }
  for (Index l = L - 2; l >= 0; --l) {
    Up& u = up_[static_cast<std::size_t>(l)];
    Tensor<S> up = config_.upsample == UpsampleMode::transposed ? u.upconv.forward(x)
                                                                 : u.conv.forward(upsample_nearest2(x));
    up = u.bn.forward(up, mode);
    x = concat_channels(skips_[static_cast<std::size_t>(l)], up);
    x = u.level.second.forward(u.level.first.forward(x, mode), mode);
  }
  probs_ = softmax_channels(head_bn_.forward(head_.forward(x), mode));
  forward_done_ = true;
  return probs_;
}

template <typename S>
Tensor<S> UNet<S>::backward(const Tensor<S>& grad_probs) {
  if (!forward_done_) throw StateError("network backward before forward");
  if (grad_probs.shape() != probs_.shape())
    throw ShapeError("network backward: gradient " + to_string(grad_probs.shape()) + " vs output " +
                     to_string(probs_.shape()));
  const Index L = config_.levels;
  Tensor<S> g = head_.backward(head_bn_.backward(softmax_channels_backward(probs_, grad_probs)));
  std::vector<Tensor<S>> skip_grads(static_cast<std::size_t>(L - 1));
  for (Index l = 0; l <= L - 2; ++l) {
    Up& u = up_[static_cast<std::size_t>(l)];
    g = u.level.first.backward(u.level.second.backward(g));
    auto [gskip, gup] = concat_channels_backward(g, u.skip_channels);
    skip_grads[static_cast<std::size_t>(l)] = std::move(gskip);
    gup = u.bn.backward(gup);
    g = config_.upsample == UpsampleMode::transposed ? u.upconv.backward(gup)
                                                      : upsample_nearest2_backward(u.conv.backward(gup));
  }
  for (Index l = L - 1; l >= 0; --l) {
    const auto i = static_cast<std::size_t>(l);
    if (l < L - 1) {
      g = maxpool2_backward(pool_shapes_[i], pool_argmax_[i], g);
      g.values() += skip_grads[i].values();
    }
    auto& lv = down_[i];
    g = lv.first.backward(lv.second.backward(g));
  }
  return g;
}

template <typename S>
std::vector<Parameter<S>> UNet<S>::parameters() {
  std::vector<Parameter<S>> out;
  auto block = [&](const std::string& name, ConvBlock<S>& b) {
    b.conv.collect(name + ".conv", out);
    b.bn.collect(name + ".bn", out);
  };
  for (std::size_t l = 0; l < down_.size(); ++l) {
    const std::string p = "down" + std::to_string(l);
    block(p + ".a", down_[l].first);
    block(p + ".b", down_[l].second);
  }
  for (std::size_t l = up_.size(); l-- > 0;) {
    const std::string p = "up" + std::to_string(l);
    if (config_.upsample == UpsampleMode::transposed)
      up_[l].upconv.collect(p + ".upconv", out);
    else
      up_[l].conv.collect(p + ".upconv", out);
    up_[l].bn.collect(p + ".upbn", out);
    block(p + ".a", up_[l].level.first);
    block(p + ".b", up_[l].level.second);
  }
  head_.collect("head.conv", out);
  head_bn_.collect("head.bn", out);
  return out;
}

template <typename S>
std::vector<BatchNormLayer<S>*> UNet<S>::batchnorms() {
  std::vector<BatchNormLayer<S>*> out;
  for (auto& lv : down_) {
    out.push_back(&lv.first.bn);
    out.push_back(&lv.second.bn);
  }
  for (std::size_t l = up_.size(); l-- > 0;) {
    out.push_back(&up_[l].bn);
    out.push_back(&up_[l].level.first.bn);
    out.push_back(&up_[l].level.second.bn);
  }
  out.push_back(&head_bn_);
  return out;
}

template <typename S>
void UNet<S>::zero_grad() {
  for (auto& p : parameters()) p.tensor->zero_grad();
}

// ------------------------------------------------------------ serialization

namespace {
constexpr char kMagic[8] = {'R', 'S', 'E', 'G', 'N', 'E', 'T', '1'};
}

template <typename S>
void save_network(UNet<S>& net, const std::filesystem::path& path) {
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<float> blob;
  auto add = [&](const std::string& name, const Shape& shape, const S* data, Index count) {
    tensors.push_back({{"name", name}, {"shape", shape}, {"offset", blob.size()}, {"count", count}});
    for (Index i = 0; i < count; ++i) blob.push_back(static_cast<float>(data[i]));
  };
  for (const auto& p : net.parameters()) add(p.name, p.tensor->shape(), p.tensor->data(), p.tensor->size());
  const auto params = net.parameters();
  std::size_t bn_index = 0;
  nlohmann::json stats = nlohmann::json::array();
  for (auto* bn : net.batchnorms()) {
    const std::string name = "bn" + std::to_string(bn_index++);
    const Index c = bn->state.running_mean.size();
    add(name + ".running_mean", {c}, bn->state.running_mean.data(), c);
    add(name + ".running_var", {c}, bn->state.running_var.data(), c);
    stats.push_back(bn->state.has_stats);
  }
  nlohmann::json manifest = {{"format", "radseg-network"},
                             {"version", 1},
                             {"dtype", "float32"},
                             {"byte_order", "little"},
                             {"config", net.config().to_json()},
                             {"seed", net.seed()},
                             {"has_stats", stats},
                             {"tensors", tensors}};
  const std::string text = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write network file " + path.string());
  out.write(kMagic, sizeof(kMagic));
  io::write_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  io::write_le_array(out, blob.data(), blob.size());
  if (!out) throw DataError("failed writing network file " + path.string());
}

template <typename S>
UNet<S> load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open network file " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) throw DataError("not a network file: " + path.string());
  const auto len = io::read_le<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const auto manifest = nlohmann::json::parse(text);
  std::size_t total = 0;
  for (const auto& t : manifest.at("tensors")) total += t.at("count").get<std::size_t>();
  std::vector<float> blob(total);
  io::read_le_array(in, blob.data(), blob.size());
  if (!in) throw DataError("truncated network file " + path.string());

  UNet<S> net(NetConfig::from_json(manifest.at("config")), manifest.at("seed").get<std::uint64_t>());
  std::size_t k = 0;
  const auto& tensors = manifest.at("tensors");
  auto fill = [&](const std::string& name, S* dst, Index count) {
    const auto& t = tensors.at(k++);
    if (t.at("name").get<std::string>() != name || t.at("count").get<Index>() != count)
      throw DataError("network file layout mismatch at '" + name + "'");
    const auto off = t.at("offset").get<std::size_t>();
    for (Index i = 0; i < count; ++i) dst[i] = static_cast<S>(blob[off + static_cast<std::size_t>(i)]);
  };
  for (auto& p : net.parameters()) fill(p.name, p.tensor->data(), p.tensor->size());
  std::size_t bn_index = 0;
  const auto& stats = manifest.at("has_stats");
  for (auto* bn : net.batchnorms()) {
    const std::string name = "bn" + std::to_string(bn_index);
    const Index c = bn->state.running_mean.size();
    fill(name + ".running_mean", bn->state.running_mean.data(), c);
    fill(name + ".running_var", bn->state.running_var.data(), c);
    bn->state.has_stats = stats.at(bn_index).get<bool>();
    ++bn_index;
  }
  return net;
}

template struct ConvBlock<float>;
template struct ConvBlock<double>;
template class UNet<float>;
template class UNet<double>;
template void save_network(UNet<float>&, const std::filesystem::path&);
template void save_network(UNet<double>&, const std::filesystem::path&);
template UNet<float> load_network(const std::filesystem::path&);
template UNet<double> load_network(const std::filesystem::path&);

}  // namespace radseg::nn
