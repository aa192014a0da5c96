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

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion.

#include "gradcheck.hpp"

#include "radseg/acquisition.hpp"
#include "radseg/experiment.hpp"
#include "radseg/loss.hpp"
#include "radseg/nn/layers.hpp"
#include "radseg/nn/unet.hpp"
#include "radseg/phantom.hpp"
#include "radseg/recon.hpp"
#include "radseg/t2map.hpp"

#include <CLI11.hpp>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

namespace {

using namespace radseg;
using radseg::testing::numeric_gradient;
using radseg::testing::project;
using radseg::testing::random_tensor;
using radseg::testing::relative_error;
using nn::Tensor;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void note(const std::string& what) {
    if (detail.tellp() > 0) detail << "; ";
    detail << what;
  }
  // Records a named measurement against its bound.
  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    note(what + (ok ? "" : " [over bound]"));
  }
};

std::string num(double v, int precision = 3) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ------------------------------------------------------------ 1: gradients

void gradients(Outcome& o) {
  constexpr double kLayer = 1e-4, kLoss = 1e-6;
  Rng rng(101);
  double worst_layer = 0, worst_loss = 0;
  auto layer = [&](const Eigen::ArrayXd& a, const Eigen::ArrayXd& n) {
    worst_layer = std::max(worst_layer, relative_error(a, n));
  };

  {
    auto x = random_tensor({2, 2, 5, 4}, rng), w = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
    const auto g = random_tensor({2, 3, 5, 4}, rng);
    auto f = [&] { return project(nn::conv2d(x, w, b, 1), g); };
    const auto a = nn::conv2d_backward(x, w, g, 1);
    layer(a.input.values(), numeric_gradient(x, f));
    layer(a.weight.values(), numeric_gradient(w, f));
    layer(a.bias.values(), numeric_gradient(b, f));
  }
  for (auto mode : {nn::Mode::train, nn::Mode::eval}) {
    auto x = random_tensor({3, 2, 3, 4}, rng, 2.0), gamma = random_tensor({2}, rng), beta = random_tensor({2}, rng);
    const auto g = random_tensor({3, 2, 3, 4}, rng);
    nn::BatchNormState<double> state(2);
    if (mode == nn::Mode::eval) {
      state.running_mean << 0.3, -0.2;
      state.running_var << 2.0, 0.5;
      state.has_stats = true;
    }
    auto f = [&] { return project(nn::batchnorm(x, gamma, beta, state, mode), g); };
    nn::BatchNormCache<double> cache;
    nn::batchnorm(x, gamma, beta, state, mode, &cache);
    const auto a = nn::batchnorm_backward(cache, gamma, g);
    layer(a.input.values(), numeric_gradient(x, f));
    layer(a.gamma.values(), numeric_gradient(gamma, f));
    layer(a.beta.values(), numeric_gradient(beta, f));
  }
  {
    auto x = random_tensor({2, 3, 4, 6}, rng);
    const auto g = random_tensor({2, 3, 2, 3}, rng);
    std::vector<Index> argmax;
    nn::maxpool2(x, &argmax);
    auto f = [&] { return project(nn::maxpool2(x), g); };
    layer(nn::maxpool2_backward(x.shape(), argmax, g).values(), numeric_gradient(x, f));
  }
  {
    auto x = random_tensor({2, 3, 2, 2}, rng), w = random_tensor({3, 2, 2, 2}, rng);
    const auto g = random_tensor({2, 2, 4, 4}, rng);
    auto f = [&] { return project(nn::upconv2(x, w), g); };
    const auto a = nn::upconv2_backward(x, w, g);
    layer(a.input.values(), numeric_gradient(x, f));
    layer(a.weight.values(), numeric_gradient(w, f));
  }
  {
    auto a = random_tensor({2, 2, 3, 3}, rng), b = random_tensor({2, 3, 3, 3}, rng);
    const auto g = random_tensor({2, 5, 3, 3}, rng);
    auto f = [&] { return project(nn::concat_channels(a, b), g); };
    const auto [ga, gb] = nn::concat_channels_backward(g, 2);
    layer(ga.values(), numeric_gradient(a, f));
    layer(gb.values(), numeric_gradient(b, f));
  }
  {
    auto x = random_tensor({2, 3, 2, 3}, rng, 3.0);
    const auto g = random_tensor({2, 3, 2, 3}, rng);
    auto f = [&] { return project(nn::softmax_channels(x), g); };
    layer(nn::softmax_channels_backward(nn::softmax_channels(x), g).values(), numeric_gradient(x, f));
  }
  {
    auto x = random_tensor({2, 2, 3, 3}, rng);
    const auto g = random_tensor({2, 2, 3, 3}, rng);
    auto f = [&] { return project(nn::relu(x), g); };
    layer(nn::relu_backward(x, g).values(), numeric_gradient(x, f));
  }

  // Assembled tiny network, both upsampling paths. Tensors with an identically zero
  // gradient (conv biases ahead of a train-mode batch norm) are checked in absolute terms.
  bool zero_ok = true;
  for (auto up : {nn::UpsampleMode::transposed, nn::UpsampleMode::nearest_conv}) {
    nn::NetConfig c;
    c.in_channels = 2;
    c.base_features = 2;
    c.levels = 2;
    c.upsample = up;
    nn::UNet<double> net(c, 21);
    auto x = random_tensor({2, 2, 4, 4}, rng);
    const auto g = random_tensor({2, 2, 4, 4}, rng);
    auto f = [&] { return project(net.forward(x, nn::Mode::train), g); };
    net.zero_grad();
    net.forward(x, nn::Mode::train);
    layer(net.backward(g).values(), numeric_gradient(x, f));
    for (auto& p : net.parameters()) {
      const Eigen::ArrayXd analytic = p.tensor->grad();
      const Eigen::ArrayXd numeric = numeric_gradient(*p.tensor, f);
      if (numeric.matrix().norm() < 1e-7)
        zero_ok = zero_ok && analytic.abs().maxCoeff() < 1e-9;
      else
        layer(analytic, numeric);
    }
  }

  for (auto mode : {loss::GdlMode::corrected, loss::GdlMode::as_written}) {
    Eigen::ArrayXd p(64), r(64);
    for (Index i = 0; i < 64; ++i) {
      p[i] = rng.uniform(0.05, 0.95);
      r[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
    }
    loss::GdlVariant v{mode, 1e-7};
    auto f = [&] { return loss::gdl(p, r, v); };
    worst_loss = std::max(worst_loss, relative_error(loss::gdl_gradient(p, r, v), numeric_gradient(p, f)));
  }
  {
    auto w = random_tensor({3, 2, 3, 3}, rng);
    Tensor<double> b({3});
    std::vector<nn::Parameter<double>> params{{"c.weight", &w, true}, {"c.bias", &b, false}};
    auto f = [&] { return loss::l2_penalty(params, 0.1); };
    w.zero_grad();
    loss::l2_penalty(params, 0.1, true);
    worst_loss = std::max(worst_loss, relative_error(w.grad(), numeric_gradient(w, f)));
  }

  o.check(worst_layer < kLayer, "layers+net max rel err " + num(worst_layer) + " < 1e-4");
  o.check(zero_ok, "zero-gradient tensors exact");
  o.check(worst_loss < kLoss, "GDL both variants + L2 max rel err " + num(worst_loss) + " < 1e-6");
}

// ------------------------------------------------------- 2: loss identities

void loss_identities(Outcome& o) {
  double worst = 0;
  for (Index n : {400, 1000, 4096})
    for (Index fg : {Index{200}, n / 2, n - 200}) {
      Eigen::ArrayXd r = Eigen::ArrayXd::Zero(n);
      r.head(fg).setOnes();
      worst = std::max(worst, std::abs(loss::gdl(r, r)));
    }
  o.check(worst <= 1e-9, "corrected GDL on perfect predictions max |L| " + num(worst) + " <= 1e-9");

  const loss::GdlVariant as_written{loss::GdlMode::as_written, 1e-15};
  Eigen::ArrayXd two(4), one(4);
  two << 1, 1, 0, 0;
  one << 1, 0, 0, 0;
  const double a = loss::gdl(two, two, as_written), b = loss::gdl(one, one, as_written);
  o.check(std::abs(a) <= 1e-9, "as-written N=4,F=2 perfect = " + num(a, 12) + " (hand 0)");
  o.check(std::abs(b + 1.0) <= 1e-9,
          "as-written N=4,F=1 perfect = " + num(b, 12) + " (hand -1: background term over the foreground denominator)");
}

// ---------------------------------------------------- 3: gridding fidelity

acquisition::RadialKSpace sample_image(const Image& img, const acquisition::SequenceParams& p) {
  acquisition::RadialKSpace ks;
  ks.params = p;
  ks.data.resize(p.views, p.readout_samples);
  const auto sched = acquisition::view_schedule(p);
  for (Index v = 0; v < p.views; ++v) {
    const auto& s = sched[static_cast<std::size_t>(v)];
    ks.angle.push_back(s.angle);
    ks.echo_index.push_back(s.echo);
    for (Index r = 0; r < p.readout_samples; ++r) {
      const double k = acquisition::readout_k(r, p.readout_samples);
      ks.data(v, r) = acquisition::fourier_sample(img, k * std::cos(s.angle), k * std::sin(s.angle));
    }
  }
  return ks;
}

// Density-weighted inverse DFT of the radial samples, pixel by pixel.
Image direct_oracle(const acquisition::RadialKSpace& ks) {
  const Index N = ks.params.matrix, R = ks.samples();
  const Image w = recon::density_weights(ks);
  Image out(N, N);
  for (Index y = 0; y < N; ++y)
    for (Index x = 0; x < N; ++x) {
      Complex acc = 0;
      for (Index v = 0; v < ks.views(); ++v) {
        const double c = std::cos(ks.angle[static_cast<std::size_t>(v)]);
        const double s = std::sin(ks.angle[static_cast<std::size_t>(v)]);
        for (Index r = 0; r < R; ++r) {
          const double k = acquisition::readout_k(r, R);
          acc += w(v, r) * ks.data(v, r) *
                 std::polar(1.0, 2 * kPi * k * (c * static_cast<double>(x - N / 2) + s * static_cast<double>(y - N / 2)));
        }
      }
      out(y, x) = std::abs(acc) / static_cast<double>(N * N);
    }
  return out;
}

void gridding(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  acquisition::SequenceParams p;
  p = p.resolved();  // 64 matrix, Nyquist views
  const auto ph = phantom::generate_phantom(5, 64, phantom::Difficulty::t2_only);
  Image pd = Image::Zero(64, 64);
  for (Index i = 0; i < pd.size(); ++i)
    if (ph.labels.data()[i]) pd.data()[i] = ph.tissue(ph.labels.data()[i]).pd;
  const auto ks = sample_image(pd, p);
  const Image rec = recon::composite(ks), ref = direct_oracle(ks);
  const double err = std::sqrt((rec - ref).square().sum() / ref.square().sum());
  o.check(err < 0.05, "NRMSE vs direct oracle " + num(err) + " < 0.05 at " + std::to_string(p.views) + " views");

  Image point = Image::Zero(64, 64);
  point(32, 32) = 1.0;
  const Image prec = recon::composite(sample_image(point, p));
  Index py, px;
  prec.maxCoeff(&py, &px);
  o.check(py == 32 && px == 32, "point-source peak at (" + std::to_string(py) + "," + std::to_string(px) + ")");
  const double t = seconds_since(t0);
  o.check(t < 60, "runtime " + num(t) + " s < 60 s");
}

// ---------------------------------------------------------- 4: T2 fitting

void t2_fidelity(Outcome& o) {
  std::vector<double> te;
  for (int e = 0; e < 32; ++e) te.push_back((e + 1) * 7.3);
  auto decay = [&](double t2) {
    std::vector<double> s;
    for (double t : te) s.push_back(std::exp(-t / t2));
    return s;
  };
  double worst = 0;
  bool all_valid = true;
  for (double t2 = 20; t2 <= 300; t2 += 5) {
    const auto fit = t2map::fit_pixel(decay(t2), te, 0.0);
    all_valid = all_valid && fit.valid;
    worst = std::max(worst, std::abs(fit.t2_ms / t2 - 1));
  }
  o.check(all_valid && worst < 0.01, "noiseless max rel err " + num(worst) + " < 1% over 20..300 ms");

  Rng rng(4);
  std::vector<double> err;
  for (int i = 0; i < 1000; ++i) {
    const double t2 = rng.uniform(20, 300);
    auto s = decay(t2);
    for (auto& v : s) v += rng.normal(0.0, 1.0 / 30);
    const auto fit = t2map::fit_pixel(s, te, 3.0 / 30);
    err.push_back(fit.valid ? std::abs(fit.t2_ms / t2 - 1) : 1.0);
  }
  std::nth_element(err.begin(), err.begin() + 500, err.end());
  o.check(err[500] < 0.05, "SNR-30 median rel err " + num(err[500]) + " < 5%");

  Image m(1, 5);
  m << -3.0, 0.0, 250.0, 500.0, 1e6;
  const Image c = t2map::clip_t2(m);
  o.check(c(0, 0) == 0.0 && c(0, 1) == 0.0 && c(0, 2) == 250.0 && c(0, 3) == 500.0 && c(0, 4) == 500.0,
          "clip to [0, 500] ms exact");
}

// -------------------------------------------------------- 5: echo sharing

Mask eroded(const Mask& m, int r) {
  Mask out = Mask::Zero(m.rows(), m.cols());
  for (Index y = r; y < m.rows() - r; ++y)
    for (Index x = r; x < m.cols() - r; ++x) {
      bool in = true;
      for (int dy = -r; dy <= r && in; ++dy)
        for (int dx = -r; dx <= r && in; ++dx) in = m(y + dy, x + dx) != 0;
      out(y, x) = in;
    }
  return out;
}

void echo_sharing(Outcome& o) {
  const double t2 = 60.0, kc = 0.49;
  phantom::Phantom ph;
  ph.labels = LabelMap::Zero(64, 64);
  for (Index y = 0; y < 64; ++y)
    for (Index x = 0; x < 64; ++x)
      if (std::hypot(x - 31.5, y - 31.5) < 22) ph.labels(y, x) = 1;
  ph.tissues = {{"liver", 1.0, t2}};
  ph.liver_id = 1;
  const auto p = experiment::DatasetConfig::default_sequence().resolved();
  const std::vector<std::pair<int, int>> pairs{{1, 13}, {0, 7}, {0, 15}, {4, 24}};
  std::set<int> echoes;
  for (auto [a, b] : pairs) echoes.insert({a, b});
  const auto set = recon::te_images(acquisition::acquire(ph, p, 0.0, 0), {echoes.begin(), echoes.end()}, kc);
  auto image_of = [&](int e) -> const Image& {
    return set.images[static_cast<std::size_t>(std::find(set.echoes.begin(), set.echoes.end(), e) - set.echoes.begin())];
  };
  const Mask roi = eroded(ph.body_mask(), 3);
  auto roi_mean = [&](const Image& img) {
    double s = 0;
    for (Index i = 0; i < roi.size(); ++i) s += roi.data()[i] ? img.data()[i] : 0.0;
    return s / roi.cast<double>().sum();
  };
  for (auto [a, b] : pairs) {
    const double expected = std::exp(-(p.te_ms(b) - p.te_ms(a)) / t2);
    const double ratio = roi_mean(image_of(b)) / roi_mean(image_of(a));
    const double err = std::abs(ratio / expected - 1);
    o.check(err < 0.05, "TE" + num(p.te_ms(b)) + "/TE" + num(p.te_ms(a)) + " ROI ratio err " + num(err) + " < 5%");
  }
}

// ---------------------------------------------------------- 6: overfitting

void overfit(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  experiment::DatasetConfig dc;
  dc.n_subjects = 4;
  dc.slices_per_subject = 2;
  const auto ds = experiment::make_dataset(dc);
  auto data = experiment::select(ds.train, pipeline::InputKind::composite);
  data.resize(4);

  experiment::TrainConfig tc;
  tc.iterations = 2000;
  tc.augment.enabled = false;
  double best = 0;
  int best_at = 0;
  experiment::TrainHooks hooks;
  hooks.checkpoint_every = 100;
  hooks.on_checkpoint = [&](int it, const nn::UNet<float>& net) {
    const double d = experiment::snapshot_dice(net, data, tc.batch);
    if (d > best) best = d, best_at = it;
  };
  auto r = experiment::train(experiment::NetKind::sc_composite, data, tc, hooks);
  double final_dice = 0;
  for (const auto& d : experiment::evaluate(r.net, data, "overfit")) final_dice += d.dice / 4.0;
  o.check(best > 0.95, "best train Dice " + num(best, 4) + " at iteration " + std::to_string(best_at) +
                           " > 0.95 (final " + num(final_dice, 4) + ")");
  const double t = seconds_since(t0);
  o.check(t < 600, "runtime " + num(t) + " s < 600 s");
}

// ------------------------------------------------------------ 7: ordering

void ordering(Outcome& o, const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  int t2_wins = 0, mc_wins = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    experiment::DatasetConfig dc;
    dc.seed = seed;
    experiment::TrainConfig tc;
    tc.seed = seed;
    const auto out = work / "ordering" / ("seed" + std::to_string(seed));
    fs::remove_all(out);
    const auto result = experiment::run_comparison(dc, tc, out);
    const double comp = result.report.mean("SC-UNET-Composite");
    const double t2 = result.report.mean("SC-UNET-T2");
    const double mc = result.report.mean("MC-UNET");
    t2_wins += t2 >= comp;
    mc_wins += mc >= comp;
    std::cout << "  seed " << seed << ": composite " << num(comp, 4) << ", T2 " << num(t2, 4) << ", MC " << num(mc, 4)
              << std::endl;
    o.note("seed " + std::to_string(seed) + " C/T2/MC " + num(comp) + "/" + num(t2) + "/" + num(mc));
  }
  o.check(t2_wins >= 2, "SC-T2 >= composite in " + std::to_string(t2_wins) + "/3 seeds");
  o.check(mc_wins >= 2, "MC >= composite in " + std::to_string(mc_wins) + "/3 seeds");
  const double t = seconds_since(t0);
  o.check(t < 4 * 3600, "runtime " + num(t / 60) + " min < 240 min");
}

// -------------------------------------------------------- 8: determinism

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + RADSEG_CLI_PATH + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void determinism(Outcome& o, const fs::path& work) {
  const auto root = work / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto cfg = root / "config.json";
  std::ofstream(cfg) << R"({"experiment": {"n_subjects": 4, "slices_per_subject": 2},
 "train": {"iterations": 40, "base_features": 4, "batch": 2}})";
  std::vector<std::string> stages{"synth", "recon", "fit", "train --all", "eval", "report"};
  for (const char* rep : {"a", "b"})
    for (const auto& stage : stages) {
      const int rc = run_cli("--config " + cfg.string() + " --out " + (root / rep).string() + " " + stage, root / "log.txt");
      if (rc != 0) {
        o.check(false, "'" + stage + "' exited " + std::to_string(rc) + " (see " + (root / "log.txt").string() + ")");
        return;
      }
    }
  int compared = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (e.path().extension() != ".csv") continue;
    const auto rel = fs::relative(e.path(), root / "a");
    ++compared;
    if (!fs::exists(root / "b" / rel) || slurp(e.path()) != slurp(root / "b" / rel)) {
      ++differing;
      o.note(rel.string() + " differs");
    }
  }
  o.check(compared >= 5 && differing == 0,
          std::to_string(compared) + " CSV outputs compared across repeats, " + std::to_string(differing) + " differ");
}

// ------------------------------------------------------------ 9: Dice oracle

void dice_oracle(Outcome& o) {
  Rng rng(909);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index h = rng.integer(1, 32), w = rng.integer(1, 32);
    const double fp = rng.uniform(), fr = rng.uniform();
    Mask p(h, w), r(h, w);
    for (Index i = 0; i < p.size(); ++i) {
      p.data()[i] = rng.uniform() < fp;
      r.data()[i] = rng.uniform() < fr;
    }
    long inter = 0, np = 0, nr = 0;
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        np += p(y, x);
        nr += r(y, x);
        inter += p(y, x) & r(y, x);
      }
    const double expected = np + nr == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(np + nr);
    mismatches += experiment::dice(p, r) != expected;
  }
  o.check(mismatches == 0, std::to_string(mismatches) + " of 1000 random pairs differ from set counts");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work", work, "scratch directory for outputs")->capture_default_str();
  app.add_option("--only", only, "run just these criteria");
  CLI11_PARSE(app, argc, argv);
  const fs::path root(work);
  fs::create_directories(root);

  struct Criterion {
    int id;
    const char* name;
    std::function<void(Outcome&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient suite", gradients},
      {2, "loss identities", loss_identities},
      {3, "reconstruction fidelity", gridding},
      {4, "T2 fidelity", t2_fidelity},
      {5, "echo-sharing physics", echo_sharing},
      {6, "overfit smoke", overfit},
      {7, "T2 and multi-echo inputs beat the composite", [&](Outcome& o) { ordering(o, root); }},
      {8, "determinism", [&](Outcome& o) { determinism(o, root); }},
      {9, "Dice oracle", dice_oracle},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::cout << "criterion " << c.id << " " << (o.pass ? "PASS" : "FAIL") << " " << c.name << " ("
              << num(seconds_since(t0), 3) << " s): " << o.detail.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
