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

// Two-stage cascade. A short-term network maps context-window features to
// per-frame concept posteriors; a long-term network classifies each frame
// from those posteriors sampled at sparse temporal offsets.

#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include "hdnn/common.hpp"
#include "hdnn/features.hpp"
#include "hdnn/mlp.hpp"
#include "hdnn/rbm.hpp"

namespace hdnn {

struct SparseContextConfig {
  std::vector<int> offsets{-10, -5, 0, 5, 10};

  void Validate() const {
    Require(!offsets.empty(), ErrorKind::kConfig, "sparse offsets must not be empty");
    for (std::size_t i = 1; i < offsets.size(); ++i)
      Require(offsets[i] > offsets[i - 1], ErrorKind::kConfig, "sparse offsets must be strictly increasing");
    Require(std::find(offsets.begin(), offsets.end(), 0) != offsets.end(), ErrorKind::kConfig,
            "sparse offsets must contain 0");
  }
};

struct CascadeModel {
  MlpModel first_stage;
  SparseContextConfig sparse;
  MlpModel second_stage;

  void Validate() const {
    first_stage.Validate();
    second_stage.Validate();
    sparse.Validate();
    Require(second_stage.input_dim() ==
                static_cast<Eigen::Index>(sparse.offsets.size()) * first_stage.output_dim(),
            ErrorKind::kDimensionMismatch, "second stage input must equal |offsets| x classes");
  }

  bool operator==(const CascadeModel &o) const {
    return first_stage == o.first_stage && sparse.offsets == o.sparse.offsets && second_stage == o.second_stage;
  }
};

inline FeatureSequence posteriorgram(const MlpModel &first_stage, const FeatureSequence &seq) {
  FeatureSequence out;
  out.frames = Posteriors(first_stage, seq.frames);
  out.frame_shift_ms = seq.frame_shift_ms;
  out.frame_length_ms = seq.frame_length_ms;
  out.kind = FeatureKind::kPosterior;
  return out;
}

/// Row t concatenates rows t + offset (clamped to the clip) in offset order.
inline Matrix sparse_stack(const Matrix &post, const SparseContextConfig &config) {
  config.Validate();
  const Eigen::Index rows = post.rows(), dim = post.cols();
  Matrix out(rows, dim * static_cast<Eigen::Index>(config.offsets.size()));
  for (Eigen::Index t = 0; t < rows; ++t)
    for (std::size_t j = 0; j < config.offsets.size(); ++j) {
      const Eigen::Index src = std::clamp<Eigen::Index>(t + config.offsets[j], 0, rows - 1);
      out.block(t, static_cast<Eigen::Index>(j) * dim, 1, dim) = post.row(src);
    }
  return out;
}

inline Matrix SecondStageInput(const CascadeModel &cascade, const FeatureSequence &seq) {
  return sparse_stack(posteriorgram(cascade.first_stage, seq).frames, cascade.sparse);
}

inline Matrix CascadePosteriors(const CascadeModel &cascade, const FeatureSequence &seq) {
  return Posteriors(cascade.second_stage, SecondStageInput(cascade, seq));
}

inline Labels classify(const CascadeModel &cascade, const FeatureSequence &seq) {
  return predict_frames(cascade.second_stage, SecondStageInput(cascade, seq));
}

/// Settings for one network: hidden widths, optional RBM pre-training, SGD
/// schedule.
struct NetworkConfig {
  std::vector<int> hidden{1000};
  bool pretrain = false;
  TrainSchedule schedule;
  PretrainConfig rbm;
};

struct NetworkTrainResult {
  MlpModel model;
  std::vector<EpochRecord> history;
  std::vector<PretrainedLayer> pretrained;
};

/// Pre-trains (optionally) and fine-tunes one classifier network.
inline NetworkTrainResult train_network(const FrameSet &data, const NetworkConfig &config, uint64_t init_seed,
                                        const TrainOptions &options = {}) {
  NetworkTrainResult result;
  const int input_dim = static_cast<int>(data.features.cols());
  if (config.pretrain && !config.hidden.empty()) {
    result.pretrained = pretrain_stack(config.hidden, data.features, config.rbm);
    result.model = MlpFromPretrained(result.pretrained, input_dim, data.num_classes, init_seed);
  } else {
    result.model = RandomModel(ArchitectureSpecs(input_dim, config.hidden, data.num_classes), init_seed);
  }
  TrainResult trained = train(result.model, data, config.schedule, options);
  result.model = std::move(trained.model);
  result.history = std::move(trained.history);
  return result;
}

struct CascadeConfig {
  NetworkConfig first{{2000, 2000, 2000}, true, {}, {}};
  NetworkConfig second{{1000, 1000}, false, {}, {}};
  SparseContextConfig sparse;
  uint64_t seed = 1;
};

struct CascadeTrainResult {
  CascadeModel model;
  NetworkTrainResult first;
  NetworkTrainResult second;
};

/// Builds the second-stage training set: the frozen first stage applied to
/// every training clip, sparsely stacked, labels unchanged.
inline FrameSet SecondStageFrames(const MlpModel &first_stage, std::span<const LabeledClip> clips,
                                  const SparseContextConfig &sparse, int num_classes) {
  std::vector<LabeledClip> stacked;
  stacked.reserve(clips.size());
  for (const auto &clip : clips) {
    LabeledClip c;
    c.label = clip.label;
    c.id = clip.id;
    c.features.kind = FeatureKind::kPosterior;
    c.features.frames = sparse_stack(posteriorgram(first_stage, clip.features).frames, sparse);
    stacked.push_back(std::move(c));
  }
  return PoolFrames(stacked, num_classes);
}

/// Stage 1 is trained (with pre-training if configured) on the clips'
/// features and frozen; stage 2 is randomly initialized and trained on
/// stage-1 posteriors of the same clips.
inline CascadeTrainResult train_cascade(std::span<const LabeledClip> clips, int num_classes,
                                        const CascadeConfig &config) {
  config.sparse.Validate();
  CascadeTrainResult result;
  const FrameSet first_data = PoolFrames(clips, num_classes);
  result.first = train_network(first_data, config.first, DeriveSeed(config.seed, "stage-1-init"));
  const FrameSet second_data = SecondStageFrames(result.first.model, clips, config.sparse, num_classes);
  result.second = train_network(second_data, config.second, DeriveSeed(config.seed, "stage-2-init"));
  result.model = {result.first.model, config.sparse, result.second.model};
  return result;
}

// Cascade file: "ACHD", u32 version, u32 num_offsets, i32 offsets, then the
// two ACNN model blocks (first stage, second stage).
inline constexpr uint32_t kCascadeFormatVersion = 1;

inline void WriteCascade(std::ostream &os, const CascadeModel &cascade) {
  io::WriteMagic(os, "ACHD");
  io::WritePod<uint32_t>(os, kCascadeFormatVersion);
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(cascade.sparse.offsets.size()));
  for (int o : cascade.sparse.offsets) io::WritePod<int32_t>(os, o);
  WriteMlp(os, cascade.first_stage);
  WriteMlp(os, cascade.second_stage);
}

inline CascadeModel ReadCascade(std::istream &is) {
  io::ExpectMagic(is, "ACHD");
  Require(io::ReadPod<uint32_t>(is) == kCascadeFormatVersion, ErrorKind::kFormat, "unsupported ACHD version");
  CascadeModel cascade;
  cascade.sparse.offsets.resize(io::ReadPod<uint32_t>(is));
  for (auto &o : cascade.sparse.offsets) o = io::ReadPod<int32_t>(is);
  cascade.first_stage = ReadMlp(is);
  cascade.second_stage = ReadMlp(is);
  cascade.Validate();
  return cascade;
}

inline void SaveCascade(const std::filesystem::path &path, const CascadeModel &cascade) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  WriteCascade(os, cascade);
}

inline CascadeModel LoadCascade(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return ReadCascade(is);
}

}  // namespace hdnn
