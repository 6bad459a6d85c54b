// Copyright 2026 The hdnn-audio Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.


// Run configuration: a JSON document merged over built-in defaults, with
// dotted-path overrides and a hyperparameter fingerprint.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hdnn/common.hpp"
#include "hdnn/data.hpp"
#include "hdnn/features.hpp"
#include "hdnn/gmm.hpp"
#include "hdnn/hierarchy.hpp"
#include "hdnn/pipeline.hpp"

namespace hdnn {

using Json = nlohmann::json;

/// Every recognized key with its default value.
inline Json DefaultConfigJson() {
  return Json::parse(R"({
    "seed": 1,
    "threads": 1,
    "corpus": {"dir": "corpus", "annotations": "annotations.csv", "train_fraction": 0.8},
    "synth": {"num_concepts": 8, "clips_per_concept": 25, "clip_seconds_min": 2.0,
              "clip_seconds_max": 4.0, "sample_rate": 16000, "noise_db": 10.0,
              "gain_range_db": 6.0, "tilt_max": 0.0},
    "features": {"sample_rate": 16000, "frame_length_ms": 25.0, "frame_shift_ms": 10.0,
                 "preemphasis": 0.97, "fft_size": 512, "num_mel_bins": 26, "num_ceps": 13,
                 "low_hz": 0.0, "high_hz": 8000.0, "log_floor": 1e-10},
    "schedule": {"initial_lr": 0.002, "ramp_improvement_threshold": 0.5,
                 "stop_improvement_threshold": 0.1, "minibatch_frames": 1024,
                 "cv_fraction": 0.1, "max_epochs": 50},
    "pretrain": {"gb_lr": 0.005, "gb_epochs": 10, "bb_lr": 0.05, "bb_epochs": 5,
                 "minibatch": 1024, "monitor_rows": 2048},
    "nn": {"deltas": false, "context": {"width": 9, "dct": false, "dct_keep_per_band": 33},
           "normalize_input": true, "hidden": [1000], "pretrain": false},
    "hdnn": {"deltas": false, "context": {"width": 49, "dct": true, "dct_keep_per_band": 33},
             "normalize_input": true, "first_hidden": [2000, 2000, 2000], "first_pretrain": true,
             "offsets": [-10, -5, 0, 5, 10], "second_hidden": [1000, 1000]},
    "gmm": {"deltas": false, "context_width": 5, "components": 256, "iterations": 20,
            "min_gain_per_frame": 1e-4, "kmeans_subsample": 20000},
    "sweep": {"system": "nn", "widths": [1, 9, 17, 25, 33]},
    "grid": {"depths": [1, 2, 3, 4], "widths": [500, 1000, 2000], "pretrain": [false, true]}
  })");
}

namespace config_detail {

inline bool SameKind(const Json &def, const Json &val) {
  if (def.is_number_float()) return val.is_number();
  if (def.is_number_integer()) return val.is_number_integer();
  if (def.is_array()) return val.is_array();
  return def.type() == val.type();
}

/// Recursively overlays `user` on `base`, rejecting unknown keys and type
/// changes.
inline void Merge(Json &base, const Json &user, const std::string &path) {
  Require(user.is_object(), ErrorKind::kConfig, (path.empty() ? "config" : path) + " must be an object");
  for (const auto &[key, value] : user.items()) {
    const std::string at = path.empty() ? key : path + "." + key;
    Require(base.contains(key), ErrorKind::kConfig, "unknown config key '" + at + "'");
    Json &slot = base[key];
    if (slot.is_object()) {
      Merge(slot, value, at);
    } else {
      Require(SameKind(slot, value), ErrorKind::kConfig,
              "config key '" + at + "' expects " + std::string(slot.type_name()));
      slot = value;
    }
  }
}

}  // namespace config_detail

/// Parses `key=value`; the value is JSON when it parses, a string otherwise.
inline void ApplyOverride(Json &config, const std::string &assignment) {
  const auto eq = assignment.find('=');
  Require(eq != std::string::npos && eq > 0, ErrorKind::kConfig, "override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  Json patch = value;
  std::size_t end = key.size();
  while (true) {
    const auto dot = key.rfind('.', end - 1);
    const std::string part = key.substr(dot == std::string::npos ? 0 : dot + 1,
                                        end - (dot == std::string::npos ? 0 : dot + 1));
    Require(!part.empty(), ErrorKind::kConfig, "empty component in override key '" + key + "'");
    patch = Json{{part, patch}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  config_detail::Merge(config, patch, "");
}

/// Typed view of a resolved configuration.
struct RunConfig {
  Json resolved;
  uint64_t seed = 1;
  int threads = 1;
  std::filesystem::path corpus_dir;
  std::filesystem::path annotations;
  double train_fraction = 0.8;
  SynthConfig synth;
  MfccOptions mfcc;
  TrainSchedule schedule;
  PretrainConfig pretrain;
  FrontEndConfig nn_front_end;
  NetworkConfig nn;
  FrontEndConfig hdnn_front_end;
  CascadeConfig cascade;
  bool gmm_deltas = false;
  int gmm_context_width = 5;
  GmmTrainConfig gmm;
  std::string sweep_system = "nn";
  std::vector<int> sweep_widths;
  std::vector<int> grid_depths;
  std::vector<int> grid_widths;
  std::vector<bool> grid_pretrain;

  /// FNV-1a of the canonical JSON with `threads` removed.
  std::string Fingerprint() const {
    Json j = resolved;
    j.erase("threads");
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(Fnv1a64(j.dump())));
    return buf;
  }

  FrontEndConfig GmmFrontEndConfig(int width) const { return GmmFrontEnd(gmm_deltas, width); }
};

namespace config_detail {

inline FrontEndConfig FrontEndFrom(const Json &j) {
  FrontEndConfig fe;
  fe.deltas = j.at("deltas").get<bool>();
  fe.context.width = j.at("context").at("width").get<int>();
  fe.context.dct_enabled = j.at("context").at("dct").get<bool>();
  fe.context.dct_keep_per_band = j.at("context").at("dct_keep_per_band").get<int>();
  fe.normalize_input = j.at("normalize_input").get<bool>();
  return fe;
}

}  // namespace config_detail

/// Builds the typed view and validates every section.
inline RunConfig ResolveConfig(const Json &resolved) {
  RunConfig rc;
  rc.resolved = resolved;
  const Json &j = resolved;
  try {
    rc.seed = j.at("seed").get<uint64_t>();
    rc.threads = j.at("threads").get<int>();
    Require(rc.threads >= 1, ErrorKind::kConfig, "threads must be >= 1");
    rc.corpus_dir = j.at("corpus").at("dir").get<std::string>();
    rc.annotations = rc.corpus_dir / j.at("corpus").at("annotations").get<std::string>();
    rc.train_fraction = j.at("corpus").at("train_fraction").get<double>();
    Require(rc.train_fraction > 0.0 && rc.train_fraction < 1.0, ErrorKind::kConfig,
            "corpus.train_fraction must be in (0, 1)");

    const Json &s = j.at("synth");
    rc.synth.num_concepts = s.at("num_concepts").get<int>();
    rc.synth.clips_per_concept = s.at("clips_per_concept").get<int>();
    rc.synth.clip_seconds_min = s.at("clip_seconds_min").get<double>();
    rc.synth.clip_seconds_max = s.at("clip_seconds_max").get<double>();
    rc.synth.sample_rate = s.at("sample_rate").get<int>();
    rc.synth.noise_db = s.at("noise_db").get<double>();
    rc.synth.gain_range_db = s.at("gain_range_db").get<double>();
    rc.synth.tilt_max = s.at("tilt_max").get<double>();
    rc.synth.rng_seed = DeriveSeed(rc.seed, "synth");
    rc.synth.Validate();

    const Json &f = j.at("features");
    rc.mfcc.sample_rate = f.at("sample_rate").get<int>();
    rc.mfcc.frame_length_ms = f.at("frame_length_ms").get<double>();
    rc.mfcc.frame_shift_ms = f.at("frame_shift_ms").get<double>();
    rc.mfcc.preemphasis = f.at("preemphasis").get<double>();
    rc.mfcc.fft_size = f.at("fft_size").get<int>();
    rc.mfcc.num_mel_bins = f.at("num_mel_bins").get<int>();
    rc.mfcc.num_ceps = f.at("num_ceps").get<int>();
    rc.mfcc.low_hz = f.at("low_hz").get<double>();
    rc.mfcc.high_hz = f.at("high_hz").get<double>();
    rc.mfcc.log_floor = f.at("log_floor").get<double>();
    Require(rc.mfcc.sample_rate > 0 && rc.mfcc.frame_length_ms > 0 && rc.mfcc.frame_shift_ms > 0,
            ErrorKind::kConfig, "feature rates and frame sizes must be positive");
    Require(rc.mfcc.num_ceps >= 1 && rc.mfcc.num_ceps <= rc.mfcc.num_mel_bins, ErrorKind::kConfig,
            "need 1 <= num_ceps <= num_mel_bins");
    Require(rc.mfcc.low_hz >= 0 && rc.mfcc.low_hz < rc.mfcc.high_hz &&
                rc.mfcc.high_hz <= rc.mfcc.sample_rate / 2.0,
            ErrorKind::kConfig, "need 0 <= low_hz < high_hz <= sample_rate / 2");
    Require(rc.mfcc.log_floor > 0, ErrorKind::kConfig, "log_floor must be positive");

    const Json &t = j.at("schedule");
    rc.schedule.initial_lr = t.at("initial_lr").get<double>();
    rc.schedule.ramp_improvement_threshold = t.at("ramp_improvement_threshold").get<double>();
    rc.schedule.stop_improvement_threshold = t.at("stop_improvement_threshold").get<double>();
    rc.schedule.minibatch_frames = t.at("minibatch_frames").get<int>();
    rc.schedule.cv_fraction = t.at("cv_fraction").get<double>();
    rc.schedule.max_epochs = t.at("max_epochs").get<int>();
    rc.schedule.Validate();

    const Json &p = j.at("pretrain");
    rc.pretrain.gb_lr = p.at("gb_lr").get<double>();
    rc.pretrain.gb_epochs = p.at("gb_epochs").get<int>();
    rc.pretrain.bb_lr = p.at("bb_lr").get<double>();
    rc.pretrain.bb_epochs = p.at("bb_epochs").get<int>();
    rc.pretrain.minibatch = p.at("minibatch").get<int>();
    rc.pretrain.monitor_rows = p.at("monitor_rows").get<int>();
    rc.pretrain.Validate();

    const Json &n = j.at("nn");
    rc.nn_front_end = config_detail::FrontEndFrom(n);
    rc.nn_front_end.context.Validate();
    rc.nn.hidden = n.at("hidden").get<std::vector<int>>();
    rc.nn.pretrain = n.at("pretrain").get<bool>();
    rc.nn.schedule = rc.schedule;
    rc.nn.schedule.rng_seed = DeriveSeed(rc.seed, "nn-schedule");
    rc.nn.rbm = rc.pretrain;
    rc.nn.rbm.rng_seed = DeriveSeed(rc.seed, "nn-rbm");

    const Json &h = j.at("hdnn");
    rc.hdnn_front_end = config_detail::FrontEndFrom(h);
    rc.hdnn_front_end.context.Validate();
    rc.cascade.first = {h.at("first_hidden").get<std::vector<int>>(), h.at("first_pretrain").get<bool>(),
                        rc.schedule, rc.pretrain};
    rc.cascade.first.schedule.rng_seed = DeriveSeed(rc.seed, "stage-1-schedule");
    rc.cascade.first.rbm.rng_seed = DeriveSeed(rc.seed, "stage-1-rbm");
    rc.cascade.second = {h.at("second_hidden").get<std::vector<int>>(), false, rc.schedule, rc.pretrain};
    rc.cascade.second.schedule.rng_seed = DeriveSeed(rc.seed, "stage-2-schedule");
    rc.cascade.sparse.offsets = h.at("offsets").get<std::vector<int>>();
    rc.cascade.sparse.Validate();
    rc.cascade.seed = rc.seed;
    for (const auto *dims : {&rc.nn.hidden, &rc.cascade.first.hidden, &rc.cascade.second.hidden})
      for (int d : *dims) Require(d >= 1, ErrorKind::kConfig, "hidden layer widths must be positive");

    const Json &g = j.at("gmm");
    rc.gmm_deltas = g.at("deltas").get<bool>();
    rc.gmm_context_width = g.at("context_width").get<int>();
    Require(rc.gmm_context_width >= 1 && rc.gmm_context_width % 2 == 1, ErrorKind::kConfig,
            "gmm.context_width must be odd and >= 1");
    rc.gmm.components = g.at("components").get<int>();
    rc.gmm.iterations = g.at("iterations").get<int>();
    rc.gmm.min_gain_per_frame = g.at("min_gain_per_frame").get<double>();
    rc.gmm.kmeans_subsample = g.at("kmeans_subsample").get<int>();
    rc.gmm.seed = DeriveSeed(rc.seed, "gmm");
    Require(rc.gmm.components >= 1 && rc.gmm.iterations >= 0 && rc.gmm.kmeans_subsample >= 1,
            ErrorKind::kConfig, "gmm components/iterations/kmeans_subsample out of range");

    rc.sweep_system = j.at("sweep").at("system").get<std::string>();
    Require(rc.sweep_system == "nn" || rc.sweep_system == "gmm", ErrorKind::kConfig,
            "sweep.system must be 'nn' or 'gmm'");
    rc.sweep_widths = j.at("sweep").at("widths").get<std::vector<int>>();
    Require(!rc.sweep_widths.empty(), ErrorKind::kConfig, "sweep.widths must not be empty");
    for (int w : rc.sweep_widths) Require(w >= 1 && w % 2 == 1, ErrorKind::kConfig, "sweep widths must be odd");
    rc.grid_depths = j.at("grid").at("depths").get<std::vector<int>>();
    rc.grid_widths = j.at("grid").at("widths").get<std::vector<int>>();
    rc.grid_pretrain = j.at("grid").at("pretrain").get<std::vector<bool>>();
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorKind::kConfig, std::string("config: ") + e.what());
  }
  return rc;
}

/// Defaults, then the file (if any), then overrides in order.
inline RunConfig LoadRunConfig(const std::filesystem::path &path, const std::vector<std::string> &overrides = {}) {
  Json config = DefaultConfigJson();
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorKind::kConfig, "cannot open config " + path.string());
    Json user = Json::parse(is, nullptr, false);
    Require(!user.is_discarded(), ErrorKind::kConfig, "config " + path.string() + " is not valid JSON");
    config_detail::Merge(config, user, "");
  }
  for (const auto &o : overrides) ApplyOverride(config, o);
  return ResolveConfig(config);
}

/// Writes config.json and fingerprint.txt into the run directory.
inline void WriteRunSnapshot(const std::filesystem::path &run_dir, const RunConfig &config) {
  std::filesystem::create_directories(run_dir);
  std::ofstream c(run_dir / "config.json");
  std::ofstream f(run_dir / "fingerprint.txt");
  if (!c || !f) throw Error(ErrorKind::kIo, "cannot write run snapshot in " + run_dir.string());
  c << config.resolved.dump(2) << '\n';
  f << config.Fingerprint() << '\n';
}

}  // namespace hdnn
