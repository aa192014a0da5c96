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

#include "radseg/nn/layers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace radseg::nn {

std::string to_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Index same_padding(Index kernel) {
  if (kernel <= 0 || kernel % 2 == 0)
    throw ConfigError("size-preserving convolution needs an odd kernel, got " + std::to_string(kernel));
  return (kernel - 1) / 2;
}

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// cols[(c*kh + i)*kw + j, y*Wo + x] = in[c, y+i-pad, x+j-pad]
template <typename S>
void im2col(const S* in, Index C, Index H, Index W, Index kh, Index kw, Index pad, Index Ho, Index Wo,
            RowMat<S>& cols) {
  cols.resize(C * kh * kw, Ho * Wo);
  for (Index c = 0; c < C; ++c) {
    const S* plane = in + c * H * W;
    for (Index i = 0; i < kh; ++i) {
      for (Index j = 0; j < kw; ++j) {
        S* row = cols.data() + ((c * kh + i) * kw + j) * Ho * Wo;
        for (Index y = 0; y < Ho; ++y) {
          const Index iy = y + i - pad;
          S* dst = row + y * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wo, S(0));
            continue;
          }
          const S* src = plane + iy * W;
          for (Index x = 0; x < Wo; ++x) {
            const Index ix = x + j - pad;
            dst[x] = (ix >= 0 && ix < W) ? src[ix] : S(0);
          }
        }
      }
    }
  }
}

template <typename S>
void col2im(const RowMat<S>& cols, Index C, Index H, Index W, Index kh, Index kw, Index pad, Index Ho, Index Wo,
            S* out) {
  for (Index c = 0; c < C; ++c) {
    S* plane = out + c * H * W;
    for (Index i = 0; i < kh; ++i) {
      for (Index j = 0; j < kw; ++j) {
        const S* row = cols.data() + ((c * kh + i) * kw + j) * Ho * Wo;
        for (Index y = 0; y < Ho; ++y) {
          const Index iy = y + i - pad;
          if (iy < 0 || iy >= H) continue;
          const S* src = row + y * Wo;
          S* dst = plane + iy * W;
          for (Index x = 0; x < Wo; ++x) {
            const Index ix = x + j - pad;
            if (ix >= 0 && ix < W) dst[ix] += src[x];
          }
        }
      }
    }
  }
}

template <typename S>
void check_conv_shapes(const Tensor<S>& input, const Tensor<S>& weight, Index pad) {
  require_nchw(input, "conv2d input");
  require_nchw(weight, "conv2d weight");
  if (weight.dim(1) != input.dim(1))
    throw ShapeError("conv2d: input has " + std::to_string(input.dim(1)) + " channels, weight expects " +
                     std::to_string(weight.dim(1)));
  if (pad < 0) throw ConfigError("conv2d: negative padding");
  if (input.dim(2) + 2 * pad < weight.dim(2) || input.dim(3) + 2 * pad < weight.dim(3))
    throw ShapeError("conv2d: kernel larger than padded input");
}

}  // namespace

template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias, Index pad) {
  check_conv_shapes(input, weight, pad);
  const Index N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const Index Co = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (bias.size() != Co) throw ShapeError("conv2d: bias length " + std::to_string(bias.size()));
  const Index Ho = H + 2 * pad - kh + 1, Wo = W + 2 * pad - kw + 1;

  Tensor<S> out({N, Co, Ho, Wo});
  Eigen::Map<const RowMat<S>> wmat(weight.data(), Co, C * kh * kw);
  Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> b(bias.data(), Co);
  RowMat<S> cols;
  for (Index n = 0; n < N; ++n) {
    im2col(input.data() + n * C * H * W, C, H, W, kh, kw, pad, Ho, Wo, cols);
    Eigen::Map<RowMat<S>> y(out.data() + n * Co * Ho * Wo, Co, Ho * Wo);
    y.noalias() = wmat * cols;
    y.colwise() += b;
  }
  return out;
}

template <typename S>
Conv2dGrads<S> conv2d_backward(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& grad_out,
                               Index pad) {
  check_conv_shapes(input, weight, pad);
  const Index N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const Index Co = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const Index Ho = H + 2 * pad - kh + 1, Wo = W + 2 * pad - kw + 1;
  if (grad_out.shape() != Shape{N, Co, Ho, Wo}) throw ShapeError("conv2d_backward: grad " + to_string(grad_out.shape()));

  Conv2dGrads<S> g{Tensor<S>(input.shape()), Tensor<S>(weight.shape()), Tensor<S>({Co})};
  Eigen::Map<const RowMat<S>> wmat(weight.data(), Co, C * kh * kw);
  Eigen::Map<RowMat<S>> dw(g.weight.data(), Co, C * kh * kw);
  Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> db(g.bias.data(), Co);
  RowMat<S> cols, dcols;
  for (Index n = 0; n < N; ++n) {
    im2col(input.data() + n * C * H * W, C, H, W, kh, kw, pad, Ho, Wo, cols);
    Eigen::Map<const RowMat<S>> gy(grad_out.data() + n * Co * Ho * Wo, Co, Ho * Wo);
    dw.noalias() += gy * cols.transpose();
    db += gy.rowwise().sum();
    dcols.noalias() = wmat.transpose() * gy;
    col2im(dcols, C, H, W, kh, kw, pad, Ho, Wo, g.input.data() + n * C * H * W);
  }
  return g;
}

// ---------------------------------------------------------------- batch norm

template <typename S>
Tensor<S> batchnorm(const Tensor<S>& input, const Tensor<S>& gamma, const Tensor<S>& beta, BatchNormState<S>& state,
                    Mode mode, BatchNormCache<S>* cache) {
  require_nchw(input, "batchnorm input");
  const Index N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  if (gamma.size() != C || beta.size() != C) throw ShapeError("batchnorm: gamma/beta length vs " + std::to_string(C));
  if (state.running_mean.size() != C) throw ShapeError("batchnorm: running statistics length");
  const Index count = N * HW;

  Eigen::Array<S, Eigen::Dynamic, 1> mean(C), inv_std(C);
  if (mode == Mode::train) {
    if (count < 2) throw ShapeError("batchnorm in train mode needs at least 2 values per channel");
    for (Index c = 0; c < C; ++c) {
      double sum = 0.0;
      for (Index n = 0; n < N; ++n) {
        const S* p = input.data() + (n * C + c) * HW;
        for (Index i = 0; i < HW; ++i) sum += p[i];
      }
      const double mu = sum / static_cast<double>(count);
      double ss = 0.0;
      for (Index n = 0; n < N; ++n) {
        const S* p = input.data() + (n * C + c) * HW;
        for (Index i = 0; i < HW; ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(count);
      mean[c] = static_cast<S>(mu);
      inv_std[c] = static_cast<S>(1.0 / std::sqrt(var + state.eps));
      const double unbiased = ss / static_cast<double>(count - 1);
      if (state.has_stats) {
        state.running_mean[c] = static_cast<S>(state.momentum * state.running_mean[c] + (1.0 - state.momentum) * mu);
        state.running_var[c] =
            static_cast<S>(state.momentum * state.running_var[c] + (1.0 - state.momentum) * unbiased);
      } else {
        state.running_mean[c] = static_cast<S>(mu);
        state.running_var[c] = static_cast<S>(unbiased);
      }
    }
    state.has_stats = true;
  } else {
    if (!state.has_stats) throw StateError("batchnorm eval mode before any running statistics were recorded");
    mean = state.running_mean;
    for (Index c = 0; c < C; ++c)
      inv_std[c] = static_cast<S>(1.0 / std::sqrt(static_cast<double>(state.running_var[c]) + state.eps));
  }

  Tensor<S> out(input.shape());
  Tensor<S> normalized(input.shape());
  for (Index n = 0; n < N; ++n) {
    for (Index c = 0; c < C; ++c) {
      const Index off = (n * C + c) * HW;
      auto xhat = normalized.values().segment(off, HW);
      xhat = (input.values().segment(off, HW) - mean[c]) * inv_std[c];
      out.values().segment(off, HW) = gamma.values()[c] * xhat + beta.values()[c];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = inv_std;
    cache->mode = mode;
  }
  return out;
}

template <typename S>
BatchNormGrads<S> batchnorm_backward(const BatchNormCache<S>& cache, const Tensor<S>& gamma,
                                     const Tensor<S>& grad_out) {
  const Tensor<S>& xhat = cache.normalized;
  if (grad_out.shape() != xhat.shape()) throw ShapeError("batchnorm_backward: grad " + to_string(grad_out.shape()));
  const Index N = xhat.dim(0), C = xhat.dim(1), HW = xhat.dim(2) * xhat.dim(3);
  const double count = static_cast<double>(N * HW);

  BatchNormGrads<S> g{Tensor<S>(xhat.shape()), Tensor<S>({C}), Tensor<S>({C})};
  for (Index c = 0; c < C; ++c) {
    double dgamma = 0.0, dbeta = 0.0;
    for (Index n = 0; n < N; ++n) {
      const Index off = (n * C + c) * HW;
      for (Index i = 0; i < HW; ++i) {
        dgamma += static_cast<double>(grad_out.data()[off + i]) * xhat.data()[off + i];
        dbeta += grad_out.data()[off + i];
      }
    }
    g.gamma.values()[c] = static_cast<S>(dgamma);
    g.beta.values()[c] = static_cast<S>(dbeta);
    const double scale = static_cast<double>(gamma.values()[c]) * cache.inv_std[c];
    for (Index n = 0; n < N; ++n) {
      const Index off = (n * C + c) * HW;
      for (Index i = 0; i < HW; ++i) {
        const double gy = grad_out.data()[off + i];
        double dx;
        if (cache.mode == Mode::train)
          dx = scale * (gy - dbeta / count - xhat.data()[off + i] * dgamma / count);
        else
          dx = scale * gy;
        g.input.data()[off + i] = static_cast<S>(dx);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------- relu

template <typename S>
Tensor<S> relu(const Tensor<S>& input) {
  return Tensor<S>(input.shape(), input.values().max(S(0)).eval());
}

template <typename S>
Tensor<S> relu_backward(const Tensor<S>& input, const Tensor<S>& grad_out) {
  if (grad_out.shape() != input.shape()) throw ShapeError("relu_backward: grad shape");
  return Tensor<S>(input.shape(), (input.values() > S(0)).select(grad_out.values(), S(0)).eval());
}

// ---------------------------------------------------------------- pooling

template <typename S>
Tensor<S> maxpool2(const Tensor<S>& input, std::vector<Index>* argmax) {
  require_nchw(input, "maxpool2 input");
  const Index N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H % 2 || W % 2) throw ShapeError("maxpool2 needs even height and width, got " + to_string(input.shape()));
  const Index Ho = H / 2, Wo = W / 2;
  Tensor<S> out({N, C, Ho, Wo});
  if (argmax) argmax->assign(static_cast<std::size_t>(out.size()), 0);
  Index o = 0;
  for (Index nc = 0; nc < N * C; ++nc) {
    const Index base = nc * H * W;
    for (Index y = 0; y < Ho; ++y) {
      for (Index x = 0; x < Wo; ++x, ++o) {
        Index best = base + 2 * y * W + 2 * x;
        S v = input.data()[best];
        const Index cand[3] = {best + 1, best + W, best + W + 1};
        for (Index k : cand) {
          if (input.data()[k] > v) {
            v = input.data()[k];
            best = k;
          }
        }
        out.data()[o] = v;
        if (argmax) (*argmax)[static_cast<std::size_t>(o)] = best;
      }
    }
  }
  return out;
}

template <typename S>
Tensor<S> maxpool2_backward(const Shape& input_shape, const std::vector<Index>& argmax, const Tensor<S>& grad_out) {
  if (static_cast<Index>(argmax.size()) != grad_out.size()) throw ShapeError("maxpool2_backward: argmax length");
  Tensor<S> g(input_shape);
  for (Index o = 0; o < grad_out.size(); ++o) g.data()[argmax[static_cast<std::size_t>(o)]] += grad_out.data()[o];
  return g;
}

// ---------------------------------------------------------------- upsampling

// weight [C,Co,2,2] viewed as a C x (Co*4) matrix; z = w^T x gives, per input
// pixel, the Co*4 values of its 2x2 output block.
template <typename S>
Tensor<S> upconv2(const Tensor<S>& input, const Tensor<S>& weight) {
  require_nchw(input, "upconv2 input");
  require_nchw(weight, "upconv2 weight");
  if (weight.dim(0) != input.dim(1) || weight.dim(2) != 2 || weight.dim(3) != 2)
    throw ShapeError("upconv2: weight " + to_string(weight.shape()) + " vs input " + to_string(input.shape()));
  const Index N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3), Co = weight.dim(1);
  Tensor<S> out({N, Co, 2 * H, 2 * W});
  Eigen::Map<const RowMat<S>> wmat(weight.data(), C, Co * 4);
  RowMat<S> z;
  for (Index n = 0; n < N; ++n) {
    Eigen::Map<const RowMat<S>> x(input.data() + n * C * H * W, C, H * W);
    z.noalias() = wmat.transpose() * x;  // (Co*4) x HW
    S* dst = out.data() + n * Co * 4 * H * W;
    for (Index co = 0; co < Co; ++co) {
      for (Index a = 0; a < 2; ++a) {
        for (Index b = 0; b < 2; ++b) {
          const S* row = z.data() + ((co * 2 + a) * 2 + b) * H * W;
          for (Index y = 0; y < H; ++y)
            for (Index x2 = 0; x2 < W; ++x2) dst[(co * 2 * H + 2 * y + a) * 2 * W + 2 * x2 + b] = row[y * W + x2];
        }
      }
    }
  }
  return out;
}

template <typename S>
UpConvGrads<S> upconv2_backward(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& grad_out) {
  const Index N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3), Co = weight.dim(1);
  if (grad_out.shape() != Shape{N, Co, 2 * H, 2 * W}) throw ShapeError("upconv2_backward: grad shape");
  UpConvGrads<S> g{Tensor<S>(input.shape()), Tensor<S>(weight.shape())};
  Eigen::Map<const RowMat<S>> wmat(weight.data(), C, Co * 4);
  Eigen::Map<RowMat<S>> dw(g.weight.data(), C, Co * 4);
  RowMat<S> dz(Co * 4, H * W);
  for (Index n = 0; n < N; ++n) {
    const S* src = grad_out.data() + n * Co * 4 * H * W;
    for (Index co = 0; co < Co; ++co)
      for (Index a = 0; a < 2; ++a)
        for (Index b = 0; b < 2; ++b) {
          S* row = dz.data() + ((co * 2 + a) * 2 + b) * H * W;
          for (Index y = 0; y < H; ++y)
            for (Index x2 = 0; x2 < W; ++x2) row[y * W + x2] = src[(co * 2 * H + 2 * y + a) * 2 * W + 2 * x2 + b];
        }
    Eigen::Map<const RowMat<S>> x(input.data() + n * C * H * W, C, H * W);
    Eigen::Map<RowMat<S>> dx(g.input.data() + n * C * H * W, C, H * W);
    dx.noalias() = wmat * dz;
    dw.noalias() += x * dz.transpose();
  }
  return g;
}

template <typename S>
Tensor<S> upsample_nearest2(const Tensor<S>& input) {
  require_nchw(input, "upsample_nearest2 input");
  const Index N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  Tensor<S> out({N, C, 2 * H, 2 * W});
  for (Index nc = 0; nc < N * C; ++nc)
    for (Index y = 0; y < 2 * H; ++y)
      for (Index x = 0; x < 2 * W; ++x)
        out.data()[(nc * 2 * H + y) * 2 * W + x] = input.data()[(nc * H + y / 2) * W + x / 2];
  return out;
}

template <typename S>
Tensor<S> upsample_nearest2_backward(const Tensor<S>& grad_out) {
  const Index N = grad_out.dim(0), C = grad_out.dim(1), H = grad_out.dim(2) / 2, W = grad_out.dim(3) / 2;
  Tensor<S> g({N, C, H, W});
  for (Index nc = 0; nc < N * C; ++nc)
    for (Index y = 0; y < 2 * H; ++y)
      for (Index x = 0; x < 2 * W; ++x)
        g.data()[(nc * H + y / 2) * W + x / 2] += grad_out.data()[(nc * 2 * H + y) * 2 * W + x];
  return g;
}

// ---------------------------------------------------------------- concat

template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  require_nchw(a, "concat_channels a");
  require_nchw(b, "concat_channels b");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ShapeError("concat_channels: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  const Index N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), HW = a.dim(2) * a.dim(3);
  Tensor<S> out({N, Ca + Cb, a.dim(2), a.dim(3)});
  for (Index n = 0; n < N; ++n) {
    out.values().segment(n * (Ca + Cb) * HW, Ca * HW) = a.values().segment(n * Ca * HW, Ca * HW);
    out.values().segment((n * (Ca + Cb) + Ca) * HW, Cb * HW) = b.values().segment(n * Cb * HW, Cb * HW);
  }
  return out;
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> concat_channels_backward(const Tensor<S>& grad_out, Index channels_a) {
  require_nchw(grad_out, "concat_channels_backward grad");
  const Index N = grad_out.dim(0), C = grad_out.dim(1), H = grad_out.dim(2), W = grad_out.dim(3), HW = H * W;
  const Index Ca = channels_a, Cb = C - channels_a;
  if (Ca < 0 || Cb < 0) throw ShapeError("concat_channels_backward: split point");
  Tensor<S> ga({N, Ca, H, W}), gb({N, Cb, H, W});
  for (Index n = 0; n < N; ++n) {
    ga.values().segment(n * Ca * HW, Ca * HW) = grad_out.values().segment(n * C * HW, Ca * HW);
    gb.values().segment(n * Cb * HW, Cb * HW) = grad_out.values().segment((n * C + Ca) * HW, Cb * HW);
  }
  return {std::move(ga), std::move(gb)};
}

// ---------------------------------------------------------------- softmax

template <typename S>
Tensor<S> softmax_channels(const Tensor<S>& logits) {
  require_nchw(logits, "softmax_channels input");
  const Index N = logits.dim(0), K = logits.dim(1), HW = logits.dim(2) * logits.dim(3);
  Tensor<S> out(logits.shape());
  for (Index n = 0; n < N; ++n) {
    const S* in = logits.data() + n * K * HW;
    S* o = out.data() + n * K * HW;
    for (Index i = 0; i < HW; ++i) {
      S m = in[i];
      for (Index k = 1; k < K; ++k) m = std::max(m, in[k * HW + i]);
      S sum = 0;
      for (Index k = 0; k < K; ++k) {
        o[k * HW + i] = std::exp(in[k * HW + i] - m);
        sum += o[k * HW + i];
      }
      for (Index k = 0; k < K; ++k) o[k * HW + i] /= sum;
    }
  }
  return out;
}

template <typename S>
Tensor<S> softmax_channels_backward(const Tensor<S>& probs, const Tensor<S>& grad_out) {
  if (grad_out.shape() != probs.shape()) throw ShapeError("softmax_channels_backward: grad shape");
  const Index N = probs.dim(0), K = probs.dim(1), HW = probs.dim(2) * probs.dim(3);
  Tensor<S> g(probs.shape());
  for (Index n = 0; n < N; ++n) {
    const S* p = probs.data() + n * K * HW;
    const S* gy = grad_out.data() + n * K * HW;
    S* gx = g.data() + n * K * HW;
    for (Index i = 0; i < HW; ++i) {
      S dot = 0;
      for (Index k = 0; k < K; ++k) dot += p[k * HW + i] * gy[k * HW + i];
      for (Index k = 0; k < K; ++k) gx[k * HW + i] = p[k * HW + i] * (gy[k * HW + i] - dot);
    }
  }
  return g;
}

// ==================================================================== layers

namespace {

template <typename S>
Tensor<S> kaiming(Shape shape, Index fan_in, Rng& rng) {
  Tensor<S> t(std::move(shape));
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(rng.normal(0.0, stddev));
  return t;
}

template <typename S>
void accumulate(Tensor<S>& param, const Tensor<S>& grad) {
  param.grad() += grad.values();
}

}  // namespace

template <typename S>
Conv2dLayer<S>::Conv2dLayer(Index in_channels, Index out_channels, Index kernel, Rng& rng)
    : weight(kaiming<S>({out_channels, in_channels, kernel, kernel}, in_channels * kernel * kernel, rng)),
      bias(Shape{out_channels}),
      pad(same_padding(kernel)) {}

template <typename S>
Tensor<S> Conv2dLayer<S>::forward(const Tensor<S>& x) {
  input_ = x;
  ready_ = true;
  return conv2d(x, weight, bias, pad);
}

template <typename S>
Tensor<S> Conv2dLayer<S>::backward(const Tensor<S>& grad_out) {
  if (!ready_) throw StateError("conv2d backward before forward");
  auto g = conv2d_backward(input_, weight, grad_out, pad);
  accumulate(weight, g.weight);
  accumulate(bias, g.bias);
  return std::move(g.input);
}

template <typename S>
void Conv2dLayer<S>::collect(const std::string& prefix, std::vector<Parameter<S>>& out) {
  out.push_back({prefix + ".weight", &weight, true});
  out.push_back({prefix + ".bias", &bias, false});
}

template <typename S>
BatchNormLayer<S>::BatchNormLayer(Index channels, double momentum, double eps)
    : gamma(Shape{channels}, S(1)), beta(Shape{channels}), state(channels) {
  state.momentum = momentum;
  state.eps = eps;
}

template <typename S>
Tensor<S> BatchNormLayer<S>::forward(const Tensor<S>& x, Mode mode) {
  ready_ = true;
  return batchnorm(x, gamma, beta, state, mode, &cache_);
}

template <typename S>
Tensor<S> BatchNormLayer<S>::backward(const Tensor<S>& grad_out) {
  if (!ready_) throw StateError("batchnorm backward before forward");
  auto g = batchnorm_backward(cache_, gamma, grad_out);
  accumulate(gamma, g.gamma);
  accumulate(beta, g.beta);
  return std::move(g.input);
}

template <typename S>
void BatchNormLayer<S>::collect(const std::string& prefix, std::vector<Parameter<S>>& out) {
  out.push_back({prefix + ".gamma", &gamma, false});
  out.push_back({prefix + ".beta", &beta, false});
}

template <typename S>
UpConvLayer<S>::UpConvLayer(Index in_channels, Index out_channels, Rng& rng)
    : weight(kaiming<S>({in_channels, out_channels, 2, 2}, in_channels, rng)) {}

template <typename S>
Tensor<S> UpConvLayer<S>::forward(const Tensor<S>& x) {
  input_ = x;
  ready_ = true;
  return upconv2(x, weight);
}

template <typename S>
Tensor<S> UpConvLayer<S>::backward(const Tensor<S>& grad_out) {
  if (!ready_) throw StateError("upconv2 backward before forward");
  auto g = upconv2_backward(input_, weight, grad_out);
  accumulate(weight, g.weight);
  return std::move(g.input);
}

template <typename S>
void UpConvLayer<S>::collect(const std::string& prefix, std::vector<Parameter<S>>& out) {
  out.push_back({prefix + ".weight", &weight, true});
}

#define RADSEG_INSTANTIATE_LAYERS(S)                                                                           \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Index);                     \
  template Conv2dGrads<S> conv2d_backward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Index);       \
  template Tensor<S> batchnorm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, BatchNormState<S>&, Mode, \
                               BatchNormCache<S>*);                                                            \
  template BatchNormGrads<S> batchnorm_backward(const BatchNormCache<S>&, const Tensor<S>&, const Tensor<S>&); \
  template Tensor<S> relu(const Tensor<S>&);                                                                   \
  template Tensor<S> relu_backward(const Tensor<S>&, const Tensor<S>&);                                        \
  template Tensor<S> maxpool2(const Tensor<S>&, std::vector<Index>*);                                          \
  template Tensor<S> maxpool2_backward(const Shape&, const std::vector<Index>&, const Tensor<S>&);             \
  template Tensor<S> upconv2(const Tensor<S>&, const Tensor<S>&);                                              \
  template UpConvGrads<S> upconv2_backward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);              \
  template Tensor<S> upsample_nearest2(const Tensor<S>&);                                                      \
  template Tensor<S> upsample_nearest2_backward(const Tensor<S>&);                                             \
  template Tensor<S> concat_channels(const Tensor<S>&, const Tensor<S>&);                                      \
  template std::pair<Tensor<S>, Tensor<S>> concat_channels_backward(const Tensor<S>&, Index);                  \
  template Tensor<S> softmax_channels(const Tensor<S>&);                                                       \
  template Tensor<S> softmax_channels_backward(const Tensor<S>&, const Tensor<S>&);                            \
  template class Conv2dLayer<S>;                                                                               \
  template class BatchNormLayer<S>;                                                                            \
  template class UpConvLayer<S>;

RADSEG_INSTANTIATE_LAYERS(float)
RADSEG_INSTANTIATE_LAYERS(double)

}  // namespace radseg::nn
