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

#include "radseg/acquisition.hpp"
#include "radseg/errors.hpp"
#include "radseg/loss.hpp"
#include "radseg/nn/unet.hpp"
#include "radseg/phantom.hpp"
#include "radseg/pipeline.hpp"
#include "radseg/recon.hpp"
#include "radseg/t2map.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace radseg::experiment {

using pipeline::Sample;

// ------------------------------------------------------------------ dataset

struct DatasetConfig {
  int n_subjects = 32;
  int slices_per_subject = 8;
  std::uint64_t seed = 1;
  phantom::Difficulty difficulty = phantom::Difficulty::t2_only;
  phantom::PhantomOptions phantom = default_phantom();
  acquisition::SequenceParams sequence = default_sequence();
  double noise_sigma = 1.0;  ///< per real/imaginary k-space component
  recon::GriddingConfig gridding;
  double kc = 0.1;                ///< echo-sharing cutoff, cycles/pixel
  std::vector<int> te_pair{1, 13};  ///< echo indices of the two-channel input
  std::vector<int> fit_echoes;      ///< empty: every echo of the train
  t2map::FitConfig fit;
  pipeline::PreprocessConfig preprocess;

  /// Bias amplitude 0.2.
  static phantom::PhantomOptions default_phantom();
  /// 512 views: 16 per echo, enough for usable echo-shared images at this matrix.
  static acquisition::SequenceParams default_sequence();

  void validate() const;
  std::vector<int> resolved_fit_echoes() const;
  nlohmann::json to_json() const;
  static DatasetConfig from_json(const nlohmann::json& j);
};

/// Seed of one slice's phantom; acquisition noise uses a derived stream.
std::uint64_t slice_seed(std::uint64_t dataset_seed, int subject, int slice);

/// Raw products of one simulated slice (before preprocessing).
struct SliceRecon {
  int subject = 0;
  int slice = 0;
  phantom::Phantom phantom;
  acquisition::RadialKSpace kspace;
  Image composite;
  recon::EchoImageSet echoes;  ///< union of the fit echoes and the TE pair
  t2map::T2Map t2;

  const Image& echo(int index) const;
};

phantom::Phantom synth_slice(const DatasetConfig& cfg, int subject, int slice);
acquisition::RadialKSpace acquire_slice(const DatasetConfig& cfg, const phantom::Phantom& ph, int subject, int slice);
/// Composite and echo-shared TE images from k-space.
void reconstruct_slice(const DatasetConfig& cfg, SliceRecon& s);
void fit_slice(const DatasetConfig& cfg, SliceRecon& s);
SliceRecon simulate_slice(const DatasetConfig& cfg, int subject, int slice);

/// The three co-registered network inputs of one slice, sharing one mask.
struct SliceSamples {
  Sample composite;
  Sample t2;
  Sample te;
  const Sample& get(pipeline::InputKind kind) const;
};

SliceSamples make_samples(int subject, int slice, const Image& composite, const Image& te_a, const Image& te_b,
                          const Image& t2_ms, const Mask& liver, const pipeline::PreprocessConfig& cfg);
SliceSamples make_samples(const DatasetConfig& cfg, const SliceRecon& s);

struct Split {
  std::vector<int> train;
  std::vector<int> test;
};

/// Seeded subject-level split: 3 of 32 held out, proportional (at least one) otherwise.
Split split_subjects(int n_subjects, std::uint64_t seed);

struct Dataset {
  Split split;
  std::vector<SliceSamples> train;
  std::vector<SliceSamples> test;
};

Dataset make_dataset(const DatasetConfig& cfg);

std::vector<Sample> select(const std::vector<SliceSamples>& slices, pipeline::InputKind kind);

// ----------------------------------------------------------------- training

enum class NetKind { sc_composite, sc_t2, mc_te };

inline const std::vector<NetKind> kAllKinds{NetKind::sc_composite, NetKind::sc_t2, NetKind::mc_te};

std::string key(NetKind k);           ///< sc_composite | sc_t2 | mc_te
std::string display_name(NetKind k);  ///< SC-UNET-Composite | SC-UNET-T2 | MC-UNET
NetKind parse_net_kind(const std::string& s);
pipeline::InputKind input_kind(NetKind k);
Index input_channels(NetKind k);

struct LrSchedule {
  enum class Kind { constant, step };
  Kind kind = Kind::constant;
  double gamma = 0.1;
  int step_size = 1000;

  double at(double base_lr, int iteration) const;
};

struct TrainConfig {
  double lr = 0.001;
  double momentum = 0.99;
  double weight_decay = 0.1;
  int iterations = 3000;
  int batch = 4;
  std::uint64_t seed = 1;
  LrSchedule lr_schedule;
  Index base_features = 8;
  nn::UpsampleMode upsample = nn::UpsampleMode::transposed;
  loss::GdlVariant gdl;
  pipeline::AugmentConfig augment;
  /// Re-estimate batch-norm running statistics on the unaugmented training set after the last step.
  bool bn_recalibration = true;

  void validate() const;
  nn::NetConfig net_config(NetKind kind) const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

template <typename S>
struct SgdState {
  std::vector<typename nn::Tensor<S>::Array> velocity;
};

/// v <- momentum*v - lr*(grad + weight_decay*w); w <- w + v. Parameters with
/// decay=false skip the weight-decay term. Throws NumericalError on a non-finite
/// gradient, naming the parameter.
template <typename S>
void sgd_step(const std::vector<nn::Parameter<S>>& params, SgdState<S>& state, double lr, double momentum,
              double weight_decay);

struct LossRecord {
  int iteration = 0;
  double loss = 0.0;     ///< gdl + penalty
  double gdl = 0.0;
  double penalty = 0.0;
  double lr = 0.0;
};

/// Raised when the loss or a gradient stops being finite; carries the curve so far.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, std::vector<LossRecord> curve)
      : NumericalError(what), curve_(std::move(curve)) {}
  const std::vector<LossRecord>& curve() const { return curve_; }

 private:
  std::vector<LossRecord> curve_;
};

struct TrainResult {
  nn::UNet<float> net;
  std::vector<LossRecord> curve;
};

/// Replaces every batch-norm running statistic with the plain average of batch statistics
/// over `data` in fixed batches of `batch`, parameters frozen.
void recalibrate_batchnorm(nn::UNet<float>& net, const std::vector<Sample>& data, int batch);

using ProgressFn = std::function<void(const LossRecord&)>;
using CheckpointFn = std::function<void(int iterations_done, const nn::UNet<float>& net)>;

struct TrainHooks {
  ProgressFn on_step;
  /// Called after every `checkpoint_every` completed iterations (0 disables).
  CheckpointFn on_checkpoint;
  int checkpoint_every = 0;
};

TrainResult train(NetKind kind, const std::vector<Sample>& data, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

// --------------------------------------------------------------- evaluation

/// 2|P n R| / (|P| + |R|); 1 when both are empty.
double dice(const Mask& pred, const Mask& truth);

/// Foreground where the class-1 probability exceeds class 0 (eval mode).
Mask predict(nn::UNet<float>& net, const Sample& s);

struct SliceDice {
  std::string config;
  int subject = 0;
  int slice = 0;
  double dice = 0.0;
};

struct Aggregate {
  std::string config;
  std::string granularity;  ///< slice | subject
  double mean = 0.0;
  double std = 0.0;  ///< population standard deviation
  int count = 0;
};

struct DiceReport {
  std::vector<SliceDice> slices;

  std::vector<Aggregate> summary() const;
  double mean(const std::string& config) const;
  void write_report_csv(const std::filesystem::path& path) const;
  void write_summary_csv(const std::filesystem::path& path) const;
  static DiceReport read_report_csv(const std::filesystem::path& path);
};

/// Mean Dice of a recalibrated copy of `net` on `data`; `net` itself is untouched.
double snapshot_dice(const nn::UNet<float>& net, const std::vector<Sample>& data, int batch);

std::vector<SliceDice> evaluate(nn::UNet<float>& net, const std::vector<Sample>& test, const std::string& config);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& curve);

/// input | truth overlay | prediction overlay, one PNG per slice.
void write_preview(const std::filesystem::path& png, const Sample& s, const Mask& pred);

struct ComparisonResult {
  DiceReport report;
  std::vector<std::vector<LossRecord>> curves;  ///< in kAllKinds order
};

/// Builds the dataset once, trains the three configurations with identical
/// hyperparameters and seeds, and evaluates each on the shared test slices.
/// When `out_dir` is non-empty writes report.csv, summary.csv, loss_<key>.csv and previews.
ComparisonResult run_comparison(const DatasetConfig& data_cfg, const TrainConfig& train_cfg,
                                const std::filesystem::path& out_dir = {},
                                const std::function<void(NetKind, const LossRecord&)>& progress = {});

}  // namespace radseg::experiment
