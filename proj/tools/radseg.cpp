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

#include "radseg/config.hpp"
#include "radseg/errors.hpp"
#include "radseg/experiment.hpp"
#include "radseg/io.hpp"
#include "radseg/parallel.hpp"
#include "radseg/pipeline.hpp"
#include "radseg/store.hpp"

#include <CLI11.hpp>

#include <future>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace radseg;

namespace {

struct Globals {
  std::string config;
  std::string out = "radseg_work";
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

struct Stage {
  const char* name;
  const char* upstream;  // stage whose recorded config is inherited when --config is absent
};

fs::path stage_dir(const Globals& g, const std::string& stage) { return fs::path(g.out) / stage; }

RunConfig resolve_config(const Globals& g, const char* upstream) {
  RunConfig cfg;
  if (!g.config.empty()) {
    cfg = RunConfig::load(g.config);
  } else if (upstream) {
    const auto recorded = stage_dir(g, upstream) / "config.json";
    if (fs::exists(recorded)) cfg = RunConfig::from_json(io::read_json(recorded).at("config"));
  }
  if (g.seed) {
    cfg.data.seed = *g.seed;
    cfg.train.seed = *g.seed;
  }
  cfg.data.validate();
  cfg.train.validate();
  return cfg;
}

void record_config(const fs::path& dir, const RunConfig& cfg, const std::string& command) {
  fs::create_directories(dir);
  io::write_json(dir / "config.json",
                 {{"command", command},
                  {"seeds", {{"dataset", cfg.data.seed}, {"train", cfg.train.seed}}},
                  {"config", cfg.to_json()}});
}

struct SliceId {
  int subject, slice;
};

std::vector<SliceId> all_slices(const experiment::DatasetConfig& d) {
  std::vector<SliceId> v;
  for (int s = 0; s < d.n_subjects; ++s)
    for (int k = 0; k < d.slices_per_subject; ++k) v.push_back({s, k});
  return v;
}

Image label_image(const LabelMap& labels) { return labels.cast<double>(); }

// ------------------------------------------------------------------ stages

void cmd_synth(const Globals& g) {
  const auto cfg = resolve_config(g, nullptr);
  const auto dir = stage_dir(g, "synth");
  fs::create_directories(dir / "previews");
  const auto slices = all_slices(cfg.data);
  parallel_for(static_cast<std::int64_t>(slices.size()), [&](std::int64_t i) {
    const auto [s, k] = slices[static_cast<std::size_t>(i)];
    const auto ph = experiment::synth_slice(cfg.data, s, k);
    store::write_phantom(dir, s, k, ph);
    store::write_kspace(store::slice_file(dir, s, k, "kspace"), experiment::acquire_slice(cfg.data, ph, s, k));
    io::write_preview(dir / "previews" / (store::slice_stem(s, k) + "_labels.png"), label_image(ph.labels), "labels");
  });
  record_config(dir, cfg, "synth");
  std::cout << "synth: " << slices.size() << " slices -> " << dir.string() << "\n";
}

void cmd_recon(const Globals& g) {
  const auto cfg = resolve_config(g, "synth");
  const auto in = stage_dir(g, "synth"), dir = stage_dir(g, "recon");
  fs::create_directories(dir / "previews");
  const auto slices = all_slices(cfg.data);
  parallel_for(static_cast<std::int64_t>(slices.size()), [&](std::int64_t i) {
    const auto [s, k] = slices[static_cast<std::size_t>(i)];
    experiment::SliceRecon r;
    r.subject = s;
    r.slice = k;
    r.kspace = store::read_kspace(store::slice_file(in, s, k, "kspace"));
    experiment::reconstruct_slice(cfg.data, r);
    io::write_image(store::slice_file(dir, s, k, "composite"), r.composite, "composite");
    store::write_echoes(store::slice_file(dir, s, k, "echoes"), r.echoes);
    const auto stem = store::slice_stem(s, k);
    io::write_preview(dir / "previews" / (stem + "_composite.png"), r.composite, "composite");
    for (int e : cfg.data.te_pair)
      io::write_preview(dir / "previews" / (stem + "_te" + std::to_string(e) + ".png"), r.echo(e), "te_image");
  });
  record_config(dir, cfg, "recon");
  std::cout << "recon: " << slices.size() << " slices -> " << dir.string() << "\n";
}

void cmd_fit(const Globals& g) {
  const auto cfg = resolve_config(g, "recon");
  const auto in = stage_dir(g, "recon"), dir = stage_dir(g, "fit");
  fs::create_directories(dir / "previews");
  const auto slices = all_slices(cfg.data);
  for (const auto [s, k] : slices) {
    experiment::SliceRecon r;
    r.echoes = store::read_echoes(store::slice_file(in, s, k, "echoes"));
    experiment::fit_slice(cfg.data, r);
    store::write_t2map(store::slice_file(dir, s, k, "t2map"), store::slice_file(dir, s, k, "t2valid"), r.t2);
    io::write_preview(dir / "previews" / (store::slice_stem(s, k) + "_t2.png"), r.t2.t2_ms, "t2_ms");
  }
  record_config(dir, cfg, "fit");
  std::cout << "fit: " << slices.size() << " slices -> " << dir.string() << "\n";
}

experiment::SliceSamples load_samples(const Globals& g, const RunConfig& cfg, int s, int k) {
  const auto ph = store::read_phantom(stage_dir(g, "synth"), s, k);
  const auto recon_dir = stage_dir(g, "recon"), fit_dir = stage_dir(g, "fit");
  const auto composite_raw = store::slice_file(recon_dir, s, k, "composite");
  store::require_file(composite_raw);
  const Image composite = io::read_image(composite_raw);
  experiment::SliceRecon r;
  r.echoes = store::read_echoes(store::slice_file(recon_dir, s, k, "echoes"));
  const auto t2 = store::read_t2map(store::slice_file(fit_dir, s, k, "t2map"), store::slice_file(fit_dir, s, k, "t2valid"));
  return experiment::make_samples(s, k, composite, r.echo(cfg.data.te_pair[0]), r.echo(cfg.data.te_pair[1]), t2.t2_ms,
                                  ph.liver_mask(), cfg.data.preprocess);
}

experiment::Dataset load_dataset(const Globals& g, const RunConfig& cfg, bool train_split, bool test_split) {
  experiment::Dataset ds;
  ds.split = experiment::split_subjects(cfg.data.n_subjects, cfg.data.seed);
  if (train_split)
    for (int s : ds.split.train)
      for (int k = 0; k < cfg.data.slices_per_subject; ++k) ds.train.push_back(load_samples(g, cfg, s, k));
  if (test_split)
    for (int s : ds.split.test)
      for (int k = 0; k < cfg.data.slices_per_subject; ++k) ds.test.push_back(load_samples(g, cfg, s, k));
  return ds;
}

fs::path weights_path(const Globals& g, experiment::NetKind kind) {
  return stage_dir(g, "train") / experiment::key(kind) / "weights.bin";
}

void cmd_train(const Globals& g, const std::string& kind_name, bool all, int log_every) {
  if (all == !kind_name.empty()) throw ConfigError("train: give exactly one of --kind or --all");
  const auto cfg = resolve_config(g, "fit");
  std::vector<experiment::NetKind> kinds =
      all ? experiment::kAllKinds : std::vector<experiment::NetKind>{experiment::parse_net_kind(kind_name)};
  const auto ds = load_dataset(g, cfg, true, false);
  const auto dir = stage_dir(g, "train");
  record_config(dir, cfg, all ? "train --all" : "train --kind " + kind_name);

  auto run_one = [&](experiment::NetKind kind) {
    experiment::TrainHooks hooks;
    if (log_every > 0)
      hooks.on_step = [&, kind](const experiment::LossRecord& r) {
        if ((r.iteration + 1) % log_every == 0)
          std::clog << experiment::key(kind) << " iteration " << r.iteration + 1 << " loss " << r.loss << "\n";
      };
    try {
      auto result = experiment::train(kind, experiment::select(ds.train, experiment::input_kind(kind)), cfg.train, hooks);
      fs::create_directories(weights_path(g, kind).parent_path());
      nn::save_network(result.net, weights_path(g, kind));
      experiment::write_loss_csv(dir / ("loss_" + experiment::key(kind) + ".csv"), result.curve);
    } catch (const experiment::TrainingDiverged& e) {
      experiment::write_loss_csv(dir / ("loss_" + experiment::key(kind) + ".csv"), e.curve());
      throw;
    }
  };
  if (kinds.size() > 1 && thread_count() > 1) {
    std::vector<std::future<void>> jobs;
    for (auto kind : kinds) jobs.push_back(std::async(std::launch::async, run_one, kind));
    for (auto& j : jobs) j.get();
  } else {
    for (auto kind : kinds) run_one(kind);
  }
  std::cout << "train: " << kinds.size() << " network(s) -> " << dir.string() << "\n";
}

std::vector<experiment::NetKind> trained_kinds(const Globals& g) {
  std::vector<experiment::NetKind> kinds;
  for (auto kind : experiment::kAllKinds)
    if (fs::exists(weights_path(g, kind))) kinds.push_back(kind);
  if (kinds.empty()) throw DataError("no trained networks under " + stage_dir(g, "train").string());
  return kinds;
}

void cmd_eval(const Globals& g) {
  const auto cfg = resolve_config(g, "train");
  const auto ds = load_dataset(g, cfg, false, true);
  experiment::DiceReport report;
  for (auto kind : trained_kinds(g)) {
    auto net = nn::load_network<float>(weights_path(g, kind));
    for (auto& d : experiment::evaluate(net, experiment::select(ds.test, experiment::input_kind(kind)),
                                        experiment::display_name(kind)))
      report.slices.push_back(d);
  }
  const auto dir = stage_dir(g, "eval");
  record_config(dir, cfg, "eval");
  report.write_report_csv(dir / "report.csv");
  std::cout << "eval: " << report.slices.size() << " slice scores -> " << (dir / "report.csv").string() << "\n";
}

void cmd_report(const Globals& g) {
  const auto cfg = resolve_config(g, "eval");
  const auto report_csv = stage_dir(g, "eval") / "report.csv";
  store::require_file(report_csv);
  const auto report = experiment::DiceReport::read_report_csv(report_csv);
  const auto dir = stage_dir(g, "report");
  fs::create_directories(dir / "previews");
  record_config(dir, cfg, "report");
  report.write_summary_csv(dir / "summary.csv");
  const auto ds = load_dataset(g, cfg, false, true);
  for (auto kind : trained_kinds(g)) {
    auto net = nn::load_network<float>(weights_path(g, kind));
    for (const auto& s : experiment::select(ds.test, experiment::input_kind(kind)))
      experiment::write_preview(dir / "previews" /
                                    (experiment::key(kind) + "_" + store::slice_stem(s.subject, s.slice) + ".png"),
                                s, experiment::predict(net, s));
  }
  std::cout << "config,granularity,mean,std,count\n";
  for (const auto& a : report.summary())
    std::cout << a.config << ',' << a.granularity << ',' << a.mean << ',' << a.std << ',' << a.count << '\n';
}

// ---------------------------------------------------------------- transforms

struct TransformArgs {
  std::string op, input, output, mask;
  double p_lo = 1.0, p_hi = 99.0, sigma = -1.0, alpha = 8.0;
  int iterations = 4, dx = 0, dy = 0;
  std::uint64_t seed = 0;
};

void cmd_transform(const TransformArgs& a) {
  store::require_file(a.input);
  const Image img = io::read_image(a.input);
  const json meta = {{"op", a.op}, {"source", fs::path(a.input).filename().string()}};
  if (a.op == "bias_correct" || a.op == "contrast_stretch" || a.op == "zscore" || a.op == "clip_t2") {
    Image out;
    if (a.op == "bias_correct")
      out = pipeline::bias_correct(img, a.iterations, a.sigma < 0 ? 16.0 : a.sigma);
    else if (a.op == "contrast_stretch")
      out = pipeline::contrast_stretch(img, a.p_lo, a.p_hi);
    else if (a.op == "zscore")
      out = pipeline::zscore(img);
    else
      out = pipeline::clip_t2(img);
    io::write_image(a.output, out, a.op, meta);
    return;
  }
  pipeline::Sample s;
  s.channels = {img};
  if (!a.mask.empty()) {
    store::require_file(a.mask);
    s.mask = io::read_mask(a.mask);
  } else {
    s.mask = Mask::Zero(img.rows(), img.cols());
  }
  s.validate();
  pipeline::Sample out;
  if (a.op == "translate")
    out = pipeline::augment_translate(s, a.dx, a.dy);
  else if (a.op == "blur")
    out = pipeline::augment_blur(s, a.sigma < 0 ? 1.0 : a.sigma);
  else if (a.op == "elastic")
    out = pipeline::augment_elastic(s, a.alpha, a.sigma < 0 ? 4.0 : a.sigma, a.seed);
  else
    throw ConfigError("unknown transform '" + a.op + "'");
  io::write_image(a.output, out.channels[0], a.op, meta);
  if (!a.mask.empty()) io::write_mask(fs::path(a.output).replace_extension(".mask.raw"), out.mask, a.op + "_mask", meta);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"radseg: radial TSE simulation, reconstruction, T2 mapping and liver segmentation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON run configuration (defaults when omitted)");
  app.add_option("--out", g.out, "workspace directory")->capture_default_str();
  app.add_option("--seed", g.seed, "override the dataset and training seeds");
  app.add_option("--threads", g.threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  auto* defaults = app.add_subcommand("defaults", "print the default configuration");
  auto* synth = app.add_subcommand("synth", "generate phantoms and radial k-space");
  auto* recon = app.add_subcommand("recon", "reconstruct composite and TE images");
  auto* fit = app.add_subcommand("fit", "fit T2 maps");
  auto* train = app.add_subcommand("train", "train segmentation networks");
  std::string kind;
  bool all = false;
  int log_every = 0;
  train->add_option("--kind", kind, "sc_composite | sc_t2 | mc_te");
  train->add_flag("--all", all, "train all three networks");
  train->add_option("--log-every", log_every, "print the loss every N iterations");
  auto* eval = app.add_subcommand("eval", "score trained networks on the test subjects");
  auto* report = app.add_subcommand("report", "summary tables and previews");
  auto* run = app.add_subcommand("run", "synth, recon, fit, train --all, eval and report in sequence");
  run->add_option("--log-every", log_every, "print the loss every N iterations");
  auto* transform = app.add_subcommand("transform", "apply one preprocessing or augmentation step to an image");
  TransformArgs ta;
  transform->add_option("--op", ta.op, "bias_correct | contrast_stretch | zscore | clip_t2 | translate | blur | elastic")
      ->required();
  transform->add_option("--input", ta.input, "input image (.raw with sidecar)")->required();
  transform->add_option("--output", ta.output, "output image")->required();
  transform->add_option("--mask", ta.mask, "mask carried through geometric transforms");
  transform->add_option("--p-lo", ta.p_lo);
  transform->add_option("--p-hi", ta.p_hi);
  transform->add_option("--iterations", ta.iterations);
  transform->add_option("--sigma", ta.sigma);
  transform->add_option("--alpha", ta.alpha);
  transform->add_option("--dx", ta.dx);
  transform->add_option("--dy", ta.dy);
  transform->add_option("--transform-seed", ta.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::config);
  }

  try {
    set_thread_count(g.threads);
    if (*defaults) {
      std::cout << RunConfig{}.to_json().dump(2) << "\n";
    } else if (*synth) {
      cmd_synth(g);
    } else if (*recon) {
      cmd_recon(g);
    } else if (*fit) {
      cmd_fit(g);
    } else if (*train) {
      cmd_train(g, kind, all, log_every);
    } else if (*eval) {
      cmd_eval(g);
    } else if (*report) {
      cmd_report(g);
    } else if (*run) {
      cmd_synth(g);
      cmd_recon(g);
      cmd_fit(g);
      cmd_train(g, "", true, log_every);
      cmd_eval(g);
      cmd_report(g);
    } else if (*transform) {
      cmd_transform(ta);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::data);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed sidecar or manifest: " << e.what() << "\n";
    return static_cast<int>(ExitCode::data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
