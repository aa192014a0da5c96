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

#include "radseg/experiment.hpp"

#include "radseg/io.hpp"
#include "radseg/parallel.hpp"
#include "radseg/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace radseg::experiment {

namespace fs = std::filesystem;
using nlohmann::json;
using pipeline::InputKind;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

json tissue_json(const phantom::TissueClass& t) { return {{"pd", t.pd}, {"t2_ms", t.t2_ms}}; }

void tissue_from(const json& j, phantom::TissueClass& t) {
  t.pd = j.at("pd").get<double>();
  t.t2_ms = j.at("t2_ms").get<double>();
  t.validate();
}

}  // namespace

// ------------------------------------------------------------------ dataset

phantom::PhantomOptions DatasetConfig::default_phantom() {
  phantom::PhantomOptions o;
  o.bias_amplitude = 0.2;
  return o;
}

acquisition::SequenceParams DatasetConfig::default_sequence() {
  acquisition::SequenceParams s;
  s.views = 512;
  return s;
}

void DatasetConfig::validate() const {
  if (n_subjects < 4) throw ConfigError("experiment.n_subjects must be at least 4");
  if (slices_per_subject < 1) throw ConfigError("experiment.slices_per_subject must be positive");
  if (!(noise_sigma >= 0)) throw ConfigError("acquisition.noise_sigma must be nonnegative");
  if (!(phantom.bias_amplitude >= 0 && phantom.bias_amplitude < 1))
    throw ConfigError("phantom.bias_amplitude must lie in [0, 1)");
  const auto seq = sequence.resolved();
  if (seq.matrix < 32 || seq.matrix % 16) throw ConfigError("sequence.matrix must be >= 32 and divisible by 16");
  gridding.validate(seq.matrix);
  if (!(kc > 0 && kc < 0.5)) throw ConfigError("recon.kc must lie in (0, 0.5)");
  if (te_pair.size() != 2) throw ConfigError("recon.te_pair must name exactly two echoes");
  for (int e : te_pair)
    if (e < 0 || e >= seq.etl) throw ConfigError("recon.te_pair echo out of range");
  if (te_pair[0] == te_pair[1]) throw ConfigError("recon.te_pair echoes must differ");
  for (int e : fit_echoes)
    if (e < 0 || e >= seq.etl) throw ConfigError("fit.echoes entry out of range");
  if (resolved_fit_echoes().size() < 3) throw ConfigError("fit.echoes needs at least three echoes");
  fit.validate();
  preprocess.validate();
}

std::vector<int> DatasetConfig::resolved_fit_echoes() const {
  std::set<int> s(fit_echoes.begin(), fit_echoes.end());
  if (s.empty())
    for (int e = 0; e < sequence.etl; ++e) s.insert(e);
  return {s.begin(), s.end()};
}

json DatasetConfig::to_json() const {
  const auto& t = phantom.tissues;
  return {
      {"experiment", {{"n_subjects", n_subjects}, {"slices_per_subject", slices_per_subject}, {"seed", seed}}},
      {"phantom",
       {{"difficulty", phantom::to_string(difficulty)},
        {"bias_amplitude", phantom.bias_amplitude},
        {"jitter", t.jitter},
        {"tissues",
         {{"soft_tissue", tissue_json(t.soft_tissue)},
          {"liver", tissue_json(t.liver)},
          {"spleen", tissue_json(t.spleen)},
          {"kidney", tissue_json(t.kidney)},
          {"fat", tissue_json(t.fat)},
          {"fluid", tissue_json(t.fluid)}}}}},
      {"sequence", sequence.to_json()},
      {"acquisition", {{"noise_sigma", noise_sigma}}},
      {"recon", {{"gridding", gridding.to_json()}, {"kc", kc}, {"te_pair", te_pair}}},
      {"fit", {{"echoes", fit_echoes}, {"config", fit.to_json()}}},
      {"preprocess", preprocess.to_json()},
  };
}

DatasetConfig DatasetConfig::from_json(const json& j) {
  DatasetConfig c;
  const auto& e = j.at("experiment");
  c.n_subjects = e.at("n_subjects").get<int>();
  c.slices_per_subject = e.at("slices_per_subject").get<int>();
  c.seed = e.at("seed").get<std::uint64_t>();
  const auto& p = j.at("phantom");
  c.difficulty = phantom::parse_difficulty(p.at("difficulty").get<std::string>());
  c.phantom.bias_amplitude = p.at("bias_amplitude").get<double>();
  auto& t = c.phantom.tissues;
  t.jitter = p.at("jitter").get<double>();
  const auto& tj = p.at("tissues");
  tissue_from(tj.at("soft_tissue"), t.soft_tissue);
  tissue_from(tj.at("liver"), t.liver);
  tissue_from(tj.at("spleen"), t.spleen);
  tissue_from(tj.at("kidney"), t.kidney);
  tissue_from(tj.at("fat"), t.fat);
  tissue_from(tj.at("fluid"), t.fluid);
  c.sequence = acquisition::SequenceParams::from_json(j.at("sequence"));
  c.phantom.echo_spacing_ms = c.sequence.echo_spacing_ms;
  c.phantom.etl = c.sequence.etl;
  c.noise_sigma = j.at("acquisition").at("noise_sigma").get<double>();
  const auto& r = j.at("recon");
  c.gridding = recon::GriddingConfig::from_json(r.at("gridding"));
  c.kc = r.at("kc").get<double>();
  c.te_pair = r.at("te_pair").get<std::vector<int>>();
  c.fit_echoes = j.at("fit").at("echoes").get<std::vector<int>>();
  c.fit = t2map::FitConfig::from_json(j.at("fit").at("config"));
  c.preprocess = pipeline::PreprocessConfig::from_json(j.at("preprocess"));
  c.validate();
  return c;
}

std::uint64_t slice_seed(std::uint64_t dataset_seed, int subject, int slice) {
  return mix_seed(dataset_seed, static_cast<std::uint64_t>(subject), static_cast<std::uint64_t>(slice));
}

const Image& SliceRecon::echo(int index) const {
  for (std::size_t i = 0; i < echoes.echoes.size(); ++i)
    if (echoes.echoes[i] == index) return echoes.images[i];
  throw DataError("echo " + std::to_string(index) + " was not reconstructed");
}

phantom::Phantom synth_slice(const DatasetConfig& cfg, int subject, int slice) {
  auto opts = cfg.phantom;
  opts.echo_spacing_ms = cfg.sequence.echo_spacing_ms;
  opts.etl = cfg.sequence.etl;
  return phantom::generate_phantom(slice_seed(cfg.seed, subject, slice), cfg.sequence.resolved().matrix,
                                   cfg.difficulty, opts);
}

acquisition::RadialKSpace acquire_slice(const DatasetConfig& cfg, const phantom::Phantom& ph, int subject,
                                        int slice) {
  return acquisition::acquire(ph, cfg.sequence, cfg.noise_sigma,
                              mix_seed(slice_seed(cfg.seed, subject, slice), 0xac9));
}

void reconstruct_slice(const DatasetConfig& cfg, SliceRecon& s) {
  s.composite = recon::composite(s.kspace, cfg.gridding);
  std::set<int> wanted(cfg.te_pair.begin(), cfg.te_pair.end());
  for (int e : cfg.resolved_fit_echoes()) wanted.insert(e);
  s.echoes = recon::te_images(s.kspace, {wanted.begin(), wanted.end()}, cfg.kc, cfg.gridding);
}

void fit_slice(const DatasetConfig& cfg, SliceRecon& s) {
  recon::EchoImageSet subset;
  for (int e : cfg.resolved_fit_echoes()) {
    subset.images.push_back(s.echo(e));
    subset.echoes.push_back(e);
    subset.te_ms.push_back(cfg.sequence.te_ms(e));
  }
  s.t2 = t2map::fit_map(subset, nullptr, cfg.fit);
}

SliceRecon simulate_slice(const DatasetConfig& cfg, int subject, int slice) {
  SliceRecon s;
  s.subject = subject;
  s.slice = slice;
  s.phantom = synth_slice(cfg, subject, slice);
  s.kspace = acquire_slice(cfg, s.phantom, subject, slice);
  reconstruct_slice(cfg, s);
  fit_slice(cfg, s);
  return s;
}

const Sample& SliceSamples::get(InputKind kind) const {
  switch (kind) {
    case InputKind::composite: return composite;
    case InputKind::t2map: return t2;
    case InputKind::te_pair: return te;
  }
  throw ConfigError("unknown input kind");
}

SliceSamples make_samples(int subject, int slice, const Image& composite, const Image& te_a, const Image& te_b,
                          const Image& t2_ms, const Mask& liver, const pipeline::PreprocessConfig& cfg) {
  auto make = [&](InputKind kind, std::vector<Image> channels) {
    Sample s;
    s.channels = std::move(channels);
    s.mask = liver;
    s.subject = subject;
    s.slice = slice;
    s.kind = kind;
    s.validate();
    return s;
  };
  SliceSamples out;
  out.composite = make(InputKind::composite, {pipeline::preprocess_weighted(composite, cfg)});
  out.t2 = make(InputKind::t2map, {pipeline::preprocess_t2(t2_ms, cfg)});
  out.te = make(InputKind::te_pair, {pipeline::preprocess_weighted(te_a, cfg), pipeline::preprocess_weighted(te_b, cfg)});
  return out;
}

SliceSamples make_samples(const DatasetConfig& cfg, const SliceRecon& s) {
  return make_samples(s.subject, s.slice, s.composite, s.echo(cfg.te_pair[0]), s.echo(cfg.te_pair[1]), s.t2.t2_ms,
                      s.phantom.liver_mask(), cfg.preprocess);
}

Split split_subjects(int n_subjects, std::uint64_t seed) {
  if (n_subjects < 4) throw ConfigError("need at least 4 subjects to split");
  const int n_test = std::max(1, static_cast<int>(std::lround(n_subjects * 3.0 / 32.0)));
  std::vector<int> ids(static_cast<std::size_t>(n_subjects));
  for (int i = 0; i < n_subjects; ++i) ids[static_cast<std::size_t>(i)] = i;
  Rng rng(mix_seed(seed, 0x5b1));
  for (std::size_t i = ids.size() - 1; i > 0; --i)
    std::swap(ids[i], ids[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i)))]);
  Split s;
  s.test.assign(ids.begin(), ids.begin() + n_test);
  s.train.assign(ids.begin() + n_test, ids.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

Dataset make_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  Dataset d;
  d.split = split_subjects(cfg.n_subjects, cfg.seed);
  const int total = cfg.n_subjects * cfg.slices_per_subject;
  std::vector<SliceSamples> all(static_cast<std::size_t>(total));
  parallel_for(total, [&](std::int64_t i) {
    const int subject = static_cast<int>(i) / cfg.slices_per_subject;
    const int slice = static_cast<int>(i) % cfg.slices_per_subject;
    all[static_cast<std::size_t>(i)] = make_samples(cfg, simulate_slice(cfg, subject, slice));
  });
  const std::set<int> test(d.split.test.begin(), d.split.test.end());
  for (auto& s : all) (test.count(s.composite.subject) ? d.test : d.train).push_back(std::move(s));
  return d;
}

std::vector<Sample> select(const std::vector<SliceSamples>& slices, InputKind kind) {
  std::vector<Sample> out;
  out.reserve(slices.size());
  for (const auto& s : slices) out.push_back(s.get(kind));
  return out;
}

// ----------------------------------------------------------------- training

std::string key(NetKind k) {
  switch (k) {
    case NetKind::sc_composite: return "sc_composite";
    case NetKind::sc_t2: return "sc_t2";
    case NetKind::mc_te: return "mc_te";
  }
  return "?";
}

std::string display_name(NetKind k) {
  switch (k) {
    case NetKind::sc_composite: return "SC-UNET-Composite";
    case NetKind::sc_t2: return "SC-UNET-T2";
    case NetKind::mc_te: return "MC-UNET";
  }
  return "?";
}

NetKind parse_net_kind(const std::string& s) {
  for (auto k : kAllKinds)
    if (s == key(k) || s == display_name(k)) return k;
  throw ConfigError("unknown network kind '" + s + "' (expected sc_composite | sc_t2 | mc_te)");
}

InputKind input_kind(NetKind k) {
  switch (k) {
    case NetKind::sc_composite: return InputKind::composite;
    case NetKind::sc_t2: return InputKind::t2map;
    case NetKind::mc_te: return InputKind::te_pair;
  }
  return InputKind::composite;
}

Index input_channels(NetKind k) { return k == NetKind::mc_te ? 2 : 1; }

double LrSchedule::at(double base_lr, int iteration) const {
  if (kind == Kind::constant) return base_lr;
  return base_lr * std::pow(gamma, iteration / step_size);
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("train.lr must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (!(weight_decay >= 0)) throw ConfigError("train.weight_decay must be nonnegative");
  if (iterations < 1) throw ConfigError("train.iterations must be positive");
  if (batch < 1) throw ConfigError("train.batch must be positive");
  if (base_features < 1) throw ConfigError("train.base_features must be positive");
  if (lr_schedule.kind == LrSchedule::Kind::step && (lr_schedule.step_size < 1 || !(lr_schedule.gamma > 0)))
    throw ConfigError("train.lr_schedule needs step_size >= 1 and gamma > 0");
  if (!(gdl.epsilon > 0)) throw ConfigError("train.gdl.epsilon must be positive");
  augment.validate();
}

nn::NetConfig TrainConfig::net_config(NetKind kind) const {
  nn::NetConfig c;
  c.in_channels = input_channels(kind);
  c.base_features = base_features;
  c.upsample = upsample;
  return c;
}

json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"momentum", momentum},
          {"weight_decay", weight_decay},
          {"iterations", iterations},
          {"batch", batch},
          {"seed", seed},
          {"lr_schedule",
           {{"kind", lr_schedule.kind == LrSchedule::Kind::constant ? "constant" : "step"},
            {"gamma", lr_schedule.gamma},
            {"step_size", lr_schedule.step_size}}},
          {"base_features", base_features},
          {"upsample", upsample == nn::UpsampleMode::transposed ? "transposed" : "nearest_conv"},
          {"gdl", {{"mode", loss::to_string(gdl.mode)}, {"epsilon", gdl.epsilon}}},
          {"augment", augment.to_json()},
          {"bn_recalibration", bn_recalibration}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.lr = j.at("lr").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.iterations = j.at("iterations").get<int>();
  c.batch = j.at("batch").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& s = j.at("lr_schedule");
  const auto kind = s.at("kind").get<std::string>();
  if (kind == "constant")
    c.lr_schedule.kind = LrSchedule::Kind::constant;
  else if (kind == "step")
    c.lr_schedule.kind = LrSchedule::Kind::step;
  else
    throw ConfigError("train.lr_schedule.kind must be constant | step");
  c.lr_schedule.gamma = s.at("gamma").get<double>();
  c.lr_schedule.step_size = s.at("step_size").get<int>();
  c.base_features = j.at("base_features").get<Index>();
  const auto up = j.at("upsample").get<std::string>();
  if (up == "transposed")
    c.upsample = nn::UpsampleMode::transposed;
  else if (up == "nearest_conv")
    c.upsample = nn::UpsampleMode::nearest_conv;
  else
    throw ConfigError("train.upsample must be transposed | nearest_conv");
  c.gdl.mode = loss::parse_gdl_mode(j.at("gdl").at("mode").get<std::string>());
  c.gdl.epsilon = j.at("gdl").at("epsilon").get<double>();
  c.augment = pipeline::AugmentConfig::from_json(j.at("augment"));
  c.bn_recalibration = j.at("bn_recalibration").get<bool>();
  c.validate();
  return c;
}

template <typename S>
void sgd_step(const std::vector<nn::Parameter<S>>& params, SgdState<S>& state, double lr, double momentum,
              double weight_decay) {
  if (state.velocity.empty())
    for (const auto& p : params) state.velocity.push_back(nn::Tensor<S>::Array::Zero(p.tensor->size()));
  if (state.velocity.size() != params.size()) throw StateError("sgd_step: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = *params[i].tensor;
    auto& v = state.velocity[i];
    if (v.size() != t.size()) throw ShapeError("sgd_step: velocity shape mismatch for " + params[i].name);
    const auto& g = t.grad();
    if (!g.isFinite().all()) throw NumericalError("non-finite gradient in parameter " + params[i].name);
    const S mu = static_cast<S>(momentum), eta = static_cast<S>(lr);
    if (params[i].decay && weight_decay != 0.0)
      v = mu * v - eta * (g + static_cast<S>(weight_decay) * t.values());
    else
      v = mu * v - eta * g;
    t.values() += v;
  }
}

template void sgd_step(const std::vector<nn::Parameter<float>>&, SgdState<float>&, double, double, double);
template void sgd_step(const std::vector<nn::Parameter<double>>&, SgdState<double>&, double, double, double);

namespace {

void fill_batch(const std::vector<const Sample*>& batch, nn::Tensor<float>& x, nn::Tensor<float>& y) {
  const Index B = static_cast<Index>(batch.size());
  const Index C = static_cast<Index>(batch[0]->channels.size());
  const Index H = batch[0]->height(), W = batch[0]->width();
  x = nn::Tensor<float>({B, C, H, W});
  y = nn::Tensor<float>({B, 1, H, W});
  for (Index b = 0; b < B; ++b) {
    const Sample& s = *batch[static_cast<std::size_t>(b)];
    for (Index c = 0; c < C; ++c)
      x.values().segment((b * C + c) * H * W, H * W) =
          Eigen::Map<const Eigen::ArrayXd>(s.channels[static_cast<std::size_t>(c)].data(), H * W).cast<float>();
    y.values().segment(b * H * W, H * W) = Eigen::Map<const Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>>(
                                               s.mask.data(), H * W)
                                               .cast<float>();
  }
}

}  // namespace

void recalibrate_batchnorm(nn::UNet<float>& net, const std::vector<Sample>& data, int batch) {
  if (data.empty()) throw DataError("recalibrate_batchnorm: no samples");
  if (batch < 1) throw ConfigError("recalibrate_batchnorm: batch must be positive");
  auto bns = net.batchnorms();
  std::vector<double> saved;
  for (auto* bn : bns) {
    saved.push_back(bn->state.momentum);
    bn->state.has_stats = false;
  }
  nn::Tensor<float> x, y;
  int k = 0;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch), ++k) {
    std::vector<const Sample*> chunk;
    for (std::size_t i = start; i < std::min(data.size(), start + static_cast<std::size_t>(batch)); ++i)
      chunk.push_back(&data[i]);
    // Momentum k/(k+1) turns the running update into a cumulative mean.
    for (auto* bn : bns) bn->state.momentum = static_cast<double>(k) / (k + 1);
    fill_batch(chunk, x, y);
    net.forward(x, nn::Mode::train);
  }
  for (std::size_t i = 0; i < bns.size(); ++i) bns[i]->state.momentum = saved[i];
}

TrainResult train(NetKind kind, const std::vector<Sample>& data, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (data.empty()) throw DataError("train: no training samples");
  const Index channels = input_channels(kind);
  for (const auto& s : data) {
    s.validate();
    if (static_cast<Index>(s.channels.size()) != channels)
      throw ShapeError("train " + key(kind) + ": sample has " + std::to_string(s.channels.size()) +
                       " channels, expected " + std::to_string(channels));
    if (s.height() != data[0].height() || s.width() != data[0].width())
      throw ShapeError("train: samples differ in size");
  }

  TrainResult result{nn::UNet<float>(cfg.net_config(kind), mix_seed(cfg.seed, 0x4e7)), {}};
  auto& net = result.net;
  const auto params = net.parameters();
  SgdState<float> state;

  Rng order_rng(mix_seed(cfg.seed, 0xba7c));
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  auto next_index = [&]() {
    if (cursor == order.size()) {
      order.resize(data.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      for (std::size_t i = order.size() - 1; i > 0; --i)
        std::swap(order[i], order[static_cast<std::size_t>(order_rng.integer(0, static_cast<std::int64_t>(i)))]);
      cursor = 0;
    }
    return order[cursor++];
  };

  nn::Tensor<float> x, y;
  std::vector<Sample> augmented(static_cast<std::size_t>(cfg.batch));
  std::vector<const Sample*> batch(static_cast<std::size_t>(cfg.batch));
  for (int it = 0; it < cfg.iterations; ++it) {
    for (int b = 0; b < cfg.batch; ++b) {
      const Sample& src = data[next_index()];
      augmented[static_cast<std::size_t>(b)] =
          pipeline::augment_random(src, cfg.augment, mix_seed(cfg.seed, static_cast<std::uint64_t>(it) + 1,
                                                               static_cast<std::uint64_t>(b)));
      batch[static_cast<std::size_t>(b)] = &augmented[static_cast<std::size_t>(b)];
    }
    fill_batch(batch, x, y);

    net.zero_grad();
    const auto probs = net.forward(x, nn::Mode::train);
    if (!probs.values().isFinite().all()) {
      result.curve.push_back({it, std::nan(""), std::nan(""), std::nan(""), cfg.lr_schedule.at(cfg.lr, it)});
      throw TrainingDiverged("training " + key(kind) + " produced non-finite outputs at iteration " +
                                 std::to_string(it),
                             result.curve);
    }
    const auto fg = loss::foreground_gdl(probs, y, cfg.gdl);
    LossRecord rec;
    rec.iteration = it;
    rec.gdl = fg.value;
    rec.penalty = loss::l2_penalty(params, cfg.weight_decay);
    rec.loss = rec.gdl + rec.penalty;
    rec.lr = cfg.lr_schedule.at(cfg.lr, it);
    if (!std::isfinite(rec.loss)) {
      result.curve.push_back(rec);
      throw TrainingDiverged("training " + key(kind) + " diverged at iteration " + std::to_string(it),
                             result.curve);
    }
    net.backward(fg.grad_probs);
    try {
      sgd_step(params, state, rec.lr, cfg.momentum, cfg.weight_decay);
    } catch (const NumericalError& e) {
      result.curve.push_back(rec);
      throw TrainingDiverged(std::string(e.what()) + " at iteration " + std::to_string(it), result.curve);
    }
    result.curve.push_back(rec);
    if (hooks.on_step) hooks.on_step(rec);
    if (hooks.on_checkpoint && hooks.checkpoint_every > 0 && (it + 1) % hooks.checkpoint_every == 0)
      hooks.on_checkpoint(it + 1, net);
  }
  if (cfg.bn_recalibration) recalibrate_batchnorm(net, data, cfg.batch);
  return result;
}

// --------------------------------------------------------------- evaluation

double dice(const Mask& pred, const Mask& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw ShapeError("dice: mask sizes differ");
  if ((pred > 1).any() || (truth > 1).any()) throw ValidationError("dice: masks must be binary");
  const auto p = pred.cast<std::int64_t>(), r = truth.cast<std::int64_t>();
  const std::int64_t inter = (p * r).sum(), total = p.sum() + r.sum();
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

Mask predict(nn::UNet<float>& net, const Sample& s) {
  nn::Tensor<float> x, y;
  fill_batch({&s}, x, y);
  const auto probs = net.forward(x, nn::Mode::eval);
  const Index H = s.height(), W = s.width();
  Mask out(H, W);
  for (Index h = 0; h < H; ++h)
    for (Index w = 0; w < W; ++w) out(h, w) = probs(0, 1, h, w) > probs(0, 0, h, w) ? 1 : 0;
  return out;
}

double snapshot_dice(const nn::UNet<float>& net, const std::vector<Sample>& data, int batch) {
  if (data.empty()) throw DataError("snapshot_dice: no samples");
  nn::UNet<float> copy = net;
  recalibrate_batchnorm(copy, data, batch);
  double total = 0.0;
  for (const auto& s : data) total += dice(predict(copy, s), s.mask);
  return total / static_cast<double>(data.size());
}

std::vector<SliceDice> evaluate(nn::UNet<float>& net, const std::vector<Sample>& test, const std::string& config) {
  std::vector<SliceDice> out;
  for (const auto& s : test) out.push_back({config, s.subject, s.slice, dice(predict(net, s), s.mask)});
  return out;
}

namespace {

Aggregate aggregate(const std::string& config, const std::string& granularity, const std::vector<double>& v) {
  Aggregate a{config, granularity, 0.0, 0.0, static_cast<int>(v.size())};
  if (v.empty()) return a;
  for (double x : v) a.mean += x;
  a.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - a.mean) * (x - a.mean);
  a.std = std::sqrt(ss / static_cast<double>(v.size()));
  return a;
}

std::vector<std::string> configs_in_order(const std::vector<SliceDice>& slices) {
  std::vector<std::string> out;
  for (const auto& s : slices)
    if (std::find(out.begin(), out.end(), s.config) == out.end()) out.push_back(s.config);
  return out;
}

}  // namespace

std::vector<Aggregate> DiceReport::summary() const {
  std::vector<Aggregate> out;
  for (const auto& config : configs_in_order(slices)) {
    std::vector<double> per_slice;
    std::map<int, std::vector<double>> per_subject;
    for (const auto& s : slices)
      if (s.config == config) {
        per_slice.push_back(s.dice);
        per_subject[s.subject].push_back(s.dice);
      }
    std::vector<double> subject_means;
    for (const auto& [subject, v] : per_subject) subject_means.push_back(aggregate("", "", v).mean);
    out.push_back(aggregate(config, "slice", per_slice));
    out.push_back(aggregate(config, "subject", subject_means));
  }
  return out;
}

double DiceReport::mean(const std::string& config) const {
  std::vector<double> v;
  for (const auto& s : slices)
    if (s.config == config) v.push_back(s.dice);
  if (v.empty()) throw DataError("no dice values for configuration " + config);
  return aggregate(config, "slice", v).mean;
}

void DiceReport::write_report_csv(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "config,subject,slice,dice\n";
  for (const auto& s : slices) out << s.config << ',' << s.subject << ',' << s.slice << ',' << fmt(s.dice) << '\n';
}

void DiceReport::write_summary_csv(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "config,granularity,mean,std,count\n";
  for (const auto& a : summary())
    out << a.config << ',' << a.granularity << ',' << fmt(a.mean) << ',' << fmt(a.std) << ',' << a.count << '\n';
}

DiceReport DiceReport::read_report_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "config,subject,slice,dice")
    throw DataError(path.string() + ": unexpected report header");
  DiceReport r;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    SliceDice s;
    std::string subject, slice, value;
    if (!std::getline(ss, s.config, ',') || !std::getline(ss, subject, ',') || !std::getline(ss, slice, ',') ||
        !std::getline(ss, value))
      throw DataError(path.string() + ": malformed row '" + line + "'");
    s.subject = std::stoi(subject);
    s.slice = std::stoi(slice);
    s.dice = std::stod(value);
    r.slices.push_back(s);
  }
  return r;
}

void write_loss_csv(const fs::path& path, const std::vector<LossRecord>& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "iteration,loss,gdl,penalty,lr\n";
  for (const auto& r : curve)
    out << r.iteration << ',' << fmt(r.loss) << ',' << fmt(r.gdl) << ',' << fmt(r.penalty) << ',' << fmt(r.lr)
        << '\n';
}

void write_preview(const fs::path& png, const Sample& s, const Mask& pred) {
  const Index H = s.height(), W = s.width();
  const Mask gray = io::to_u8(s.channels[0], io::auto_window(s.channels[0]));
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(H * W * 3 * 3));
  auto put = [&](Index y, Index x, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const auto o = static_cast<std::size_t>((y * 3 * W + x) * 3);
    rgb[o] = r;
    rgb[o + 1] = g;
    rgb[o + 2] = b;
  };
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x) {
      const std::uint8_t v = gray(y, x);
      put(y, x, v, v, v);
      const auto tint = [&](const Mask& m, Index panel, bool red) {
        if (!m(y, x)) return put(y, panel * W + x, v, v, v);
        const auto hi = static_cast<std::uint8_t>(std::min(255, v / 2 + 128));
        const auto lo = static_cast<std::uint8_t>(v / 2);
        red ? put(y, panel * W + x, hi, lo, lo) : put(y, panel * W + x, lo, hi, lo);
      };
      tint(s.mask, 1, false);
      tint(pred, 2, true);
    }
  io::write_png_rgb(png, 3 * W, H, rgb);
}

ComparisonResult run_comparison(const DatasetConfig& data_cfg, const TrainConfig& train_cfg, const fs::path& out_dir,
                                const std::function<void(NetKind, const LossRecord&)>& progress) {
  data_cfg.validate();
  train_cfg.validate();
  const Dataset ds = make_dataset(data_cfg);
  ComparisonResult result;
  if (!out_dir.empty()) fs::create_directories(out_dir / "previews");
  for (auto kind : kAllKinds) {
    const auto samples = select(ds.train, input_kind(kind));
    TrainHooks hooks;
    if (progress) hooks.on_step = [&](const LossRecord& r) { progress(kind, r); };
    auto trained = train(kind, samples, train_cfg, hooks);
    const auto test = select(ds.test, input_kind(kind));
    for (auto& d : evaluate(trained.net, test, display_name(kind))) result.report.slices.push_back(d);
    if (!out_dir.empty()) {
      write_loss_csv(out_dir / ("loss_" + key(kind) + ".csv"), trained.curve);
      for (const auto& s : test)
        write_preview(out_dir / "previews" /
                          (key(kind) + "_s" + std::to_string(s.subject) + "_" + std::to_string(s.slice) + ".png"),
                      s, predict(trained.net, s));
    }
    result.curves.push_back(std::move(trained.curve));
  }
  if (!out_dir.empty()) {
    result.report.write_report_csv(out_dir / "report.csv");
    result.report.write_summary_csv(out_dir / "summary.csv");
  }
  return result;
}

}  // namespace radseg::experiment
