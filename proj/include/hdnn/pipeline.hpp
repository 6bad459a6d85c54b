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

// End-to-end systems: corpus loading, a fitted feature front-end, and the
// NN / cascade / GMM classifiers built on top of it.

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hdnn/common.hpp"
#include "hdnn/data.hpp"
#include "hdnn/eval.hpp"
#include "hdnn/features.hpp"
#include "hdnn/gmm.hpp"
#include "hdnn/hierarchy.hpp"
#include "hdnn/mlp.hpp"

namespace hdnn {

/// Base MFCC clips of a corpus, split into train and test.
struct Corpus {
  std::vector<std::string> labels;
  std::vector<LabeledClip> train;
  std::vector<LabeledClip> test;
  /// label -> generator family, when a generator manifest is present.
  std::map<std::string, std::string> families;
};

inline AudioClip LoadSegmentAudio(const std::filesystem::path &base_dir, const AnnotatedSegment &seg, int rate) {
  AudioLoader loader(base_dir, rate);
  return loader.Load(seg);
}

inline std::vector<LabeledClip> ExtractClips(const std::filesystem::path &base_dir,
                                             const std::vector<AnnotatedSegment> &segments,
                                             const std::vector<std::string> &labels, const MfccOptions &mfcc,
                                             int threads = 1) {
  const MfccComputer computer(mfcc);
  std::vector<LabeledClip> clips(segments.size());
  ParallelFor(segments.size(), threads, [&](std::size_t i) {
    const auto &seg = segments[i];
    LabeledClip c;
    c.id = seg.clip_path + "@" + std::to_string(seg.start_s);
    c.label = LabelIndex(labels, seg.label);
    c.features = computer.Sequence(LoadSegmentAudio(base_dir, seg, mfcc.sample_rate));
    clips[i] = std::move(c);
  });
  return clips;
}

/// Loads annotations, splits them (seeded, stratified) and extracts MFCCs.
inline Corpus LoadCorpus(const std::filesystem::path &annotations, const MfccOptions &mfcc, double train_fraction,
                         uint64_t seed, int threads = 1) {
  const AnnotationSet set = load_annotations(annotations);
  Require(!set.segments.empty(), ErrorKind::kEmptyInput, "no annotated segments in " + annotations.string());
  Corpus corpus;
  corpus.labels = ConceptTable(set.segments);
  const auto [train, test] = split_dataset(set.segments, train_fraction, seed);
  corpus.train = ExtractClips(set.base_dir, train, corpus.labels, mfcc, threads);
  corpus.test = ExtractClips(set.base_dir, test, corpus.labels, mfcc, threads);
  const auto manifest = set.base_dir / "manifest.jsonl";
  if (std::filesystem::exists(manifest)) corpus.families = ReadManifestFamilies(manifest);
  return corpus;
}

struct FrontEndConfig {
  bool deltas = false;
  ContextConfig context{1, false, 33};
  /// Re-normalize the final (stacked / DCT) vector with training statistics.
  bool normalize_input = true;
};

/// MFCC clip -> system input: optional deltas, mean/variance normalization,
/// context stacking, optional temporal DCT, optional input normalization.
struct FrontEnd {
  FrontEndConfig config;
  NormStats base_stats;
  std::optional<NormStats> input_stats;

  FeatureSequence Base(const FeatureSequence &mfcc) const {
    return config.deltas ? append_deltas(mfcc) : mfcc;
  }

  FeatureSequence Transform(const FeatureSequence &mfcc) const {
    FeatureSequence x = build_context_input(apply_norm(Base(mfcc), base_stats), config.context);
    if (input_stats) x = apply_norm(x, *input_stats);
    return x;
  }

  std::vector<LabeledClip> TransformAll(std::span<const LabeledClip> clips, int threads = 1) const {
    std::vector<LabeledClip> out(clips.size());
    ParallelFor(clips.size(), threads, [&](std::size_t i) {
      out[i] = {Transform(clips[i].features), clips[i].label, clips[i].id};
    });
    return out;
  }

  /// Fits the statistics on `train` and returns the transformed clips.
  static std::pair<FrontEnd, std::vector<LabeledClip>> Fit(const FrontEndConfig &config,
                                                           std::span<const LabeledClip> train, int threads = 1) {
    config.context.Validate();
    FrontEnd fe;
    fe.config = config;
    std::vector<FeatureSequence> base(train.size());
    ParallelFor(train.size(), threads, [&](std::size_t i) { base[i] = fe.Base(train[i].features); });
    fe.base_stats = fit_norm_stats(base);
    std::vector<LabeledClip> out(train.size());
    ParallelFor(train.size(), threads, [&](std::size_t i) {
      out[i] = {build_context_input(apply_norm(base[i], fe.base_stats), config.context), train[i].label, train[i].id};
    });
    if (config.normalize_input) {
      std::vector<FeatureSequence> seqs;
      seqs.reserve(out.size());
      for (const auto &c : out) seqs.push_back(c.features);
      fe.input_stats = fit_norm_stats(seqs);
      for (auto &c : out) c.features = apply_norm(c.features, *fe.input_stats);
    }
    return {std::move(fe), std::move(out)};
  }

  int InputDim(int base_dim) const { return config.context.OutputDim(config.deltas ? 3 * base_dim : base_dim); }
};

inline nlohmann::json StatsToJson(const NormStats &s) {
  return {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
          {"std", std::vector<double>(s.std.data(), s.std.data() + s.std.size())}};
}

inline NormStats StatsFromJson(const nlohmann::json &j) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto sd = j.at("std").get<std::vector<double>>();
  Require(mean.size() == sd.size(), ErrorKind::kFormat, "normalization stats size mismatch");
  NormStats s;
  s.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  s.std = Eigen::Map<const Vector>(sd.data(), static_cast<Eigen::Index>(sd.size()));
  return s;
}

inline nlohmann::json FrontEndToJson(const FrontEnd &fe) {
  nlohmann::json j{{"deltas", fe.config.deltas},
                   {"context",
                    {{"width", fe.config.context.width},
                     {"dct", fe.config.context.dct_enabled},
                     {"dct_keep_per_band", fe.config.context.dct_keep_per_band}}},
                   {"normalize_input", fe.config.normalize_input},
                   {"base_stats", StatsToJson(fe.base_stats)}};
  if (fe.input_stats) j["input_stats"] = StatsToJson(*fe.input_stats);
  return j;
}

inline FrontEnd FrontEndFromJson(const nlohmann::json &j) {
  try {
    FrontEnd fe;
    fe.config.deltas = j.at("deltas").get<bool>();
    fe.config.context.width = j.at("context").at("width").get<int>();
    fe.config.context.dct_enabled = j.at("context").at("dct").get<bool>();
    fe.config.context.dct_keep_per_band = j.at("context").at("dct_keep_per_band").get<int>();
    fe.config.normalize_input = j.at("normalize_input").get<bool>();
    fe.base_stats = StatsFromJson(j.at("base_stats"));
    if (j.contains("input_stats")) fe.input_stats = StatsFromJson(j.at("input_stats"));
    return fe;
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorKind::kFormat, std::string("front-end description: ") + e.what());
  }
}

enum class SystemKind { kNn, kCascade, kGmm };

/// A trained classifier together with the front-end it expects.
struct System {
  SystemKind kind = SystemKind::kNn;
  FrontEnd front_end;
  MlpModel nn;
  CascadeModel cascade;
  GmmConceptBank gmm;

  Labels ClassifyInput(const FeatureSequence &input) const {
    switch (kind) {
      case SystemKind::kNn: return predict_frames(nn, input.frames);
      case SystemKind::kCascade: return classify(cascade, input);
      case SystemKind::kGmm: return gmm.Classify(input.frames);
    }
    return {};
  }

  Labels Classify(const FeatureSequence &mfcc) const { return ClassifyInput(front_end.Transform(mfcc)); }

  Classifier AsClassifier() const {
    return [this](const FeatureSequence &mfcc) { return Classify(mfcc); };
  }
};

inline const char *ModelFileName(SystemKind kind) {
  switch (kind) {
    case SystemKind::kNn: return "model.acnn";
    case SystemKind::kCascade: return "model.achd";
    case SystemKind::kGmm: return "model.acgm";
  }
  return "model.bin";
}

inline void SaveSystem(const std::filesystem::path &dir, const System &system) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "frontend.json");
    if (!os) throw Error(ErrorKind::kIo, "cannot write " + (dir / "frontend.json").string());
    os << FrontEndToJson(system.front_end).dump(2) << '\n';
  }
  const auto path = dir / ModelFileName(system.kind);
  switch (system.kind) {
    case SystemKind::kNn: SaveMlp(path, system.nn); break;
    case SystemKind::kCascade: SaveCascade(path, system.cascade); break;
    case SystemKind::kGmm: SaveBank(path, system.gmm); break;
  }
}

/// Loads whichever model file the run directory holds.
inline System LoadSystem(const std::filesystem::path &dir) {
  System system;
  std::ifstream is(dir / "frontend.json");
  if (!is) throw Error(ErrorKind::kIo, "no frontend.json in " + dir.string());
  try {
    system.front_end = FrontEndFromJson(nlohmann::json::parse(is));
  } catch (const nlohmann::json::parse_error &e) {
    throw Error(ErrorKind::kFormat, std::string("frontend.json: ") + e.what());
  }
  if (std::filesystem::exists(dir / ModelFileName(SystemKind::kCascade))) {
    system.kind = SystemKind::kCascade;
    system.cascade = LoadCascade(dir / ModelFileName(SystemKind::kCascade));
  } else if (std::filesystem::exists(dir / ModelFileName(SystemKind::kNn))) {
    system.kind = SystemKind::kNn;
    system.nn = LoadMlp(dir / ModelFileName(SystemKind::kNn));
  } else if (std::filesystem::exists(dir / ModelFileName(SystemKind::kGmm))) {
    system.kind = SystemKind::kGmm;
    system.gmm = LoadBank(dir / ModelFileName(SystemKind::kGmm));
  } else {
    throw Error(ErrorKind::kIo, "no model file in " + dir.string());
  }
  return system;
}

struct NnSystemResult {
  System system;
  std::vector<EpochRecord> history;
  std::vector<PretrainedLayer> pretrained;
};

inline NnSystemResult TrainNnSystem(const Corpus &corpus, const FrontEndConfig &fe_config, const NetworkConfig &net,
                                    uint64_t seed, int threads = 1) {
  auto [fe, inputs] = FrontEnd::Fit(fe_config, corpus.train, threads);
  const FrameSet data = PoolFrames(inputs, static_cast<int>(corpus.labels.size()));
  NetworkTrainResult trained = train_network(data, net, DeriveSeed(seed, "nn-init"));
  NnSystemResult result;
  result.system.kind = SystemKind::kNn;
  result.system.front_end = std::move(fe);
  result.system.nn = std::move(trained.model);
  result.history = std::move(trained.history);
  result.pretrained = std::move(trained.pretrained);
  return result;
}

struct CascadeSystemResult {
  System cascade;
  /// The first stage alone, with the same front-end: the DNN baseline.
  System first_stage;
  CascadeTrainResult training;
};

inline CascadeSystemResult TrainCascadeSystem(const Corpus &corpus, const FrontEndConfig &fe_config,
                                              const CascadeConfig &config, int threads = 1) {
  auto [fe, inputs] = FrontEnd::Fit(fe_config, corpus.train, threads);
  CascadeSystemResult result;
  result.training = train_cascade(inputs, static_cast<int>(corpus.labels.size()), config);
  result.cascade.kind = SystemKind::kCascade;
  result.cascade.front_end = fe;
  result.cascade.cascade = result.training.model;
  result.first_stage.kind = SystemKind::kNn;
  result.first_stage.front_end = std::move(fe);
  result.first_stage.nn = result.training.model.first_stage;
  return result;
}

struct GmmSystemResult {
  System system;
  std::vector<double> ubm_log_likelihoods;
};

/// GMM front-ends stack normalized frames without DCT or re-normalization.
inline FrontEndConfig GmmFrontEnd(bool deltas, int context_width) {
  return {deltas, {context_width, false, 1}, false};
}

inline GmmSystemResult TrainGmmSystem(const Corpus &corpus, const FrontEndConfig &fe_config,
                                      const GmmTrainConfig &config, int threads = 1) {
  auto [fe, inputs] = FrontEnd::Fit(fe_config, corpus.train, threads);
  BankTrainResult trained = train_concept_bank(inputs, corpus.labels, config, threads);
  GmmSystemResult result;
  result.system.kind = SystemKind::kGmm;
  result.system.front_end = std::move(fe);
  result.system.gmm = std::move(trained.bank);
  result.ubm_log_likelihoods = std::move(trained.ubm_log_likelihoods);
  return result;
}

}  // namespace hdnn
