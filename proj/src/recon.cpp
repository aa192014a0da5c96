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

#include "radseg/recon.hpp"

#include "radseg/errors.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>

namespace radseg::recon {

using acquisition::RadialKSpace;
using acquisition::readout_k;

double GriddingConfig::beta() const {
  if (kernel_beta > 0) return kernel_beta;
  const double w = kernel_width, a = oversample;
  const double arg = (w / a) * (w / a) * (a - 0.5) * (a - 0.5) - 0.8;
  return kPi * std::sqrt(std::max(arg, 0.0));
}

void GriddingConfig::validate(Index matrix) const {
  if (!(oversample >= 1.0)) throw ConfigError("recon.oversample must be >= 1");
  const double g = oversample * static_cast<double>(matrix);
  if (std::abs(g - std::round(g)) > 1e-9) throw ConfigError("recon.oversample * matrix must be an integer");
  if (static_cast<Index>(std::round(g)) % 2) throw ConfigError("recon.oversample * matrix must be even");
  if (kernel_width < 2 || kernel_width % 2) throw ConfigError("recon.kernel_width must be even and >= 2");
  if (kernel_beta < 0) throw ConfigError("recon.kernel_beta must be nonnegative");
  if (!(deapod_floor > 0)) throw ConfigError("recon.deapod_floor must be positive");
}

nlohmann::json GriddingConfig::to_json() const {
  return {{"oversample", oversample},
          {"kernel_width", kernel_width},
          {"kernel_beta", kernel_beta},
          {"deapod_floor", deapod_floor}};
}

GriddingConfig GriddingConfig::from_json(const nlohmann::json& j) {
  GriddingConfig c;
  c.oversample = j.at("oversample").get<double>();
  c.kernel_width = j.at("kernel_width").get<int>();
  c.kernel_beta = j.at("kernel_beta").get<double>();
  c.deapod_floor = j.at("deapod_floor").get<double>();
  return c;
}

double kb_kernel(double d, int width, double beta) {
  const double x = 2.0 * d / width;
  if (std::abs(x) > 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - x * x)) / std::cyl_bessel_i(0.0, beta);
}

double kb_transform(double t, int width, double beta) {
  const double z = beta * beta - (kPi * width * t) * (kPi * width * t);
  double shape;
  if (z > 1e-12) {
    const double r = std::sqrt(z);
    shape = std::sinh(r) / r;
  } else if (z < -1e-12) {
    const double r = std::sqrt(-z);
    shape = std::sin(r) / r;
  } else {
    shape = 1.0;
  }
  return width * shape / std::cyl_bessel_i(0.0, beta);
}

Image density_weights(const RadialKSpace& ks) {
  const Index V = ks.views(), R = ks.samples(), N = ks.params.matrix;
  const double dk = static_cast<double>(N) / static_cast<double>(R);  // sample spacing in Nyquist cells
  Image w(V, R);
  for (Index r = 0; r < R; ++r) {
    const double radius = std::abs(readout_k(r, R)) * static_cast<double>(N);
    // Ring of width dk shared by the 2V half-spokes at this radius; the centre disk of
    // radius dk/2 is shared by all V views.
    const double area = radius > 0 ? kPi * radius * dk / static_cast<double>(V)
                                   : kPi * 0.25 * dk * dk / static_cast<double>(V);
    w.col(r).setConstant(area);
  }
  w *= (kPi * static_cast<double>(N * N) / 4.0) / w.sum();
  return w;
}

namespace {

// Kernel sampled on a fine grid over [0, W/2], linear interpolation in between.
class KernelTable {
 public:
  KernelTable(int width, double beta) : half_(width / 2.0), step_(half_ / kSamples), table_(kSamples + 2, 0.0) {
    for (int i = 0; i <= kSamples; ++i) table_[static_cast<std::size_t>(i)] = kb_kernel(i * step_, width, beta);
  }
  double operator()(double d) const {
    const double a = std::abs(d);
    if (a >= half_) return 0.0;
    const double pos = a / step_;
    const auto i = static_cast<std::size_t>(pos);
    const double f = pos - static_cast<double>(i);
    return table_[i] + f * (table_[i + 1] - table_[i]);
  }

 private:
  static constexpr int kSamples = 8192;
  double half_, step_;
  std::vector<double> table_;
};

void fftshift2(Eigen::MatrixXcd& a) {
  const Index h = a.rows(), w = a.cols();
  Eigen::MatrixXcd b(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) b((y + h / 2) % h, (x + w / 2) % w) = a(y, x);
  a.swap(b);
}

// Unscaled centred 2-D inverse DFT (even sizes).
void centered_ifft2(Eigen::MatrixXcd& a) {
  fftshift2(a);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  Eigen::VectorXcd in, out;
  for (Index y = 0; y < a.rows(); ++y) {
    in = a.row(y).transpose();
    fft.inv(out, in);
    a.row(y) = out.transpose();
  }
  for (Index x = 0; x < a.cols(); ++x) {
    in = a.col(x);
    fft.inv(out, in);
    a.col(x) = out;
  }
  fftshift2(a);
}

// Adds the weighted samples, convolved with the kernel, onto the oversampled grid.
// Views with view_mask[v] == false are skipped.
void accumulate(const RadialKSpace& ks, const Image& sample_weights, const GriddingConfig& cfg, Eigen::MatrixXcd& grid,
                const KernelTable& kernel) {
  const Index N = ks.params.matrix, V = ks.views(), R = ks.samples();
  const double alpha = cfg.oversample;
  const int W = cfg.kernel_width;
  const Index G = grid.rows();
  std::vector<double> wx(static_cast<std::size_t>(W + 1)), wy(static_cast<std::size_t>(W + 1));
  for (Index v = 0; v < V; ++v) {
    const double c = std::cos(ks.angle[static_cast<std::size_t>(v)]);
    const double s = std::sin(ks.angle[static_cast<std::size_t>(v)]);
    for (Index r = 0; r < R; ++r) {
      const double w = sample_weights(v, r);
      if (w == 0.0) continue;
      const Complex val = w * ks.data(v, r);
      const double kappa = readout_k(r, R) * static_cast<double>(N);
      const double ux = kappa * c * alpha + static_cast<double>(G / 2);
      const double uy = kappa * s * alpha + static_cast<double>(G / 2);
      const Index x0 = static_cast<Index>(std::ceil(ux - W / 2.0));
      const Index y0 = static_cast<Index>(std::ceil(uy - W / 2.0));
      for (int i = 0; i <= W; ++i) {
        wx[static_cast<std::size_t>(i)] = kernel(static_cast<double>(x0 + i) - ux);
        wy[static_cast<std::size_t>(i)] = kernel(static_cast<double>(y0 + i) - uy);
      }
      for (int j = 0; j <= W; ++j) {
        const double ky = wy[static_cast<std::size_t>(j)];
        if (ky == 0.0) continue;
        const Index gy = ((y0 + j) % G + G) % G;
        for (int i = 0; i <= W; ++i) {
          const double kx = wx[static_cast<std::size_t>(i)];
          if (kx == 0.0) continue;
          grid(gy, ((x0 + i) % G + G) % G) += val * (kx * ky);
        }
      }
    }
  }
}

Index grid_size(const RadialKSpace& ks, const GriddingConfig& cfg) {
  return static_cast<Index>(std::llround(cfg.oversample * static_cast<double>(ks.params.matrix)));
}

// Inverse FFT, crop and deapodize.
ComplexImage finish(Eigen::MatrixXcd grid, Index N, const GriddingConfig& cfg) {
  const Index G = grid.rows();
  const double beta = cfg.beta();
  const int W = cfg.kernel_width;
  centered_ifft2(grid);
  ComplexImage img(N, N);
  const double norm = 1.0 / static_cast<double>(N * N);
  std::vector<double> deapod(static_cast<std::size_t>(N));
  for (Index i = 0; i < N; ++i) {
    const double p = static_cast<double>(i - N / 2);
    deapod[static_cast<std::size_t>(i)] = std::max(kb_transform(p / static_cast<double>(G), W, beta), cfg.deapod_floor);
  }
  for (Index y = 0; y < N; ++y)
    for (Index x = 0; x < N; ++x)
      img(y, x) = grid(y - N / 2 + G / 2, x - N / 2 + G / 2) * norm /
                  (deapod[static_cast<std::size_t>(y)] * deapod[static_cast<std::size_t>(x)]);
  return img;
}

}  // namespace

ComplexImage grid_recon_complex(const RadialKSpace& ks, const Image& sample_weights, const GriddingConfig& cfg) {
  const Index N = ks.params.matrix;
  cfg.validate(N);
  if (sample_weights.rows() != ks.views() || sample_weights.cols() != ks.samples())
    throw ShapeError("sample weights vs k-space shape");
  const Index G = grid_size(ks, cfg);
  const KernelTable kernel(cfg.kernel_width, cfg.beta());
  Eigen::MatrixXcd grid = Eigen::MatrixXcd::Zero(G, G);
  accumulate(ks, sample_weights, cfg, grid, kernel);
  return finish(std::move(grid), N, cfg);
}

Image grid_recon(const RadialKSpace& ks, const std::vector<double>& view_weights, const GriddingConfig& cfg) {
  const Index V = ks.views();
  if (static_cast<Index>(view_weights.size()) != V)
    throw ShapeError("view weights length " + std::to_string(view_weights.size()) + " vs " + std::to_string(V) +
                     " views");
  double total = 0.0;
  for (double w : view_weights) {
    if (!(w >= 0) || !std::isfinite(w)) throw ValidationError("view weights must be finite and nonnegative");
    total += w;
  }
  if (total == 0.0) throw ValidationError("all view weights are zero");
  Image weights = density_weights(ks);
  const double renorm = static_cast<double>(V) / total;
  for (Index v = 0; v < V; ++v) weights.row(v) *= view_weights[static_cast<std::size_t>(v)] * renorm;
  return grid_recon_complex(ks, weights, cfg).abs();
}

Image composite(const RadialKSpace& ks, const GriddingConfig& cfg) {
  return grid_recon(ks, std::vector<double>(static_cast<std::size_t>(ks.views()), 1.0), cfg);
}

void EchoImageSet::validate() const {
  if (images.empty()) throw ValidationError("echo image set is empty");
  if (images.size() != te_ms.size()) throw ShapeError("echo image set: images vs te_ms length");
  for (const auto& img : images)
    if (img.rows() != images[0].rows() || img.cols() != images[0].cols())
      throw ShapeError("echo image set: images differ in size");
  for (std::size_t i = 1; i < te_ms.size(); ++i)
    if (!(te_ms[i] > te_ms[i - 1])) throw ValidationError("echo image set: te must be strictly increasing");
}

std::vector<int> all_echoes(int etl) {
  std::vector<int> e(static_cast<std::size_t>(etl));
  for (int i = 0; i < etl; ++i) e[static_cast<std::size_t>(i)] = i;
  return e;
}

EchoImageSet te_images(const RadialKSpace& ks, const std::vector<int>& target_echoes, double kc,
                       const GriddingConfig& cfg) {
  const auto& p = ks.params;
  const Index V = ks.views(), R = ks.samples();
  if (target_echoes.empty()) throw ValidationError("te_images: no target echoes");
  if (!(kc > 0.0 && kc < 0.5)) throw ValidationError("te_images: kc must lie in (0, 0.5)");
  if (kc < 1.0 / static_cast<double>(R))
    throw ValidationError("te_images: kc below the first readout ring leaves the exclusive band empty");
  for (std::size_t i = 0; i < target_echoes.size(); ++i) {
    if (target_echoes[i] < 0 || target_echoes[i] >= p.etl) throw ValidationError("te_images: echo out of range");
    if (i && target_echoes[i] <= target_echoes[i - 1])
      throw ValidationError("te_images: target echoes must be strictly increasing");
  }

  const Image dcf = density_weights(ks);
  std::vector<bool> in_band(static_cast<std::size_t>(R));
  double band_all = 0.0;
  for (Index r = 0; r < R; ++r) {
    in_band[static_cast<std::size_t>(r)] = std::abs(readout_k(r, R)) <= kc;
    if (in_band[static_cast<std::size_t>(r)]) band_all += dcf.col(r).sum();
  }

  // Out-of-band samples are common to every target echo: grid them once.
  cfg.validate(p.matrix);
  const Index G = grid_size(ks, cfg);
  const KernelTable kernel(cfg.kernel_width, cfg.beta());
  Image shared_w = dcf;
  for (Index r = 0; r < R; ++r)
    if (in_band[static_cast<std::size_t>(r)]) shared_w.col(r).setZero();
  Eigen::MatrixXcd shared = Eigen::MatrixXcd::Zero(G, G);
  accumulate(ks, shared_w, cfg, shared, kernel);

  EchoImageSet out;
  for (int e : target_echoes) {
    double band_echo = 0.0;
    for (Index v = 0; v < V; ++v) {
      if (ks.echo_index[static_cast<std::size_t>(v)] != e) continue;
      for (Index r = 0; r < R; ++r)
        if (in_band[static_cast<std::size_t>(r)]) band_echo += dcf(v, r);
    }
    if (band_echo == 0.0) throw ValidationError("te_images: echo " + std::to_string(e) + " has no views");
    const double renorm = band_all / band_echo;
    Image w = Image::Zero(V, R);
    for (Index v = 0; v < V; ++v) {
      if (ks.echo_index[static_cast<std::size_t>(v)] != e) continue;
      for (Index r = 0; r < R; ++r)
        if (in_band[static_cast<std::size_t>(r)]) w(v, r) = dcf(v, r) * renorm;
    }
    Eigen::MatrixXcd grid = shared;
    accumulate(ks, w, cfg, grid, kernel);
    out.images.push_back(finish(std::move(grid), p.matrix, cfg).abs());
    out.te_ms.push_back(p.te_ms(e));
    out.echoes.push_back(e);
  }
  return out;
}

}  // namespace radseg::recon
