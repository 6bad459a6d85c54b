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

// Sigmoid/softmax feed-forward networks, cross-entropy backpropagation and
// the cross-validation driven ("newbob") learning-rate schedule.

#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <vector>

#include "hdnn/common.hpp"
#include "hdnn/features.hpp"

namespace hdnn {

enum class Activation : uint8_t { kSigmoid = 0, kSoftmax = 1 };

struct LayerSpec {
  int in_dim = 0;
  int out_dim = 0;
  Activation activation = Activation::kSigmoid;
};

struct Layer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::kSigmoid;

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }
};

struct MlpModel {
  std::vector<Layer> layers;

  Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  Eigen::Index output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  std::vector<LayerSpec> Specs() const {
    std::vector<LayerSpec> specs;
    for (const auto &l : layers)
      specs.push_back({static_cast<int>(l.in_dim()), static_cast<int>(l.out_dim()), l.activation});
    return specs;
  }

  /// Throws unless dims chain, only the last layer is softmax and every
  /// parameter is finite.
  void Validate() const {
    Require(!layers.empty(), ErrorKind::kDimensionMismatch, "model has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto &l = layers[i];
      Require(l.bias.size() == l.out_dim(), ErrorKind::kDimensionMismatch, "bias size mismatch");
      if (i > 0)
        Require(l.in_dim() == layers[i - 1].out_dim(), ErrorKind::kDimensionMismatch,
                "layer " + std::to_string(i) + " input does not chain");
      const bool last = i + 1 == layers.size();
      Require((l.activation == Activation::kSoftmax) == last, ErrorKind::kDimensionMismatch,
              "softmax must be exactly the final layer");
      Require(l.weights.allFinite() && l.bias.allFinite(), ErrorKind::kNonFinite,
              "non-finite parameters in layer " + std::to_string(i));
    }
  }

  bool operator==(const MlpModel &other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto &a = layers[i], &b = other.layers[i];
      if (a.activation != b.activation || a.weights.rows() != b.weights.rows() ||
          a.weights.cols() != b.weights.cols() || a.weights != b.weights || a.bias != b.bias)
        return false;
    }
    return true;
  }
};

/// Sigmoid hidden layers of the given widths followed by a softmax layer.
inline std::vector<LayerSpec> ArchitectureSpecs(int input_dim, const std::vector<int> &hidden, int num_classes) {
  std::vector<LayerSpec> specs;
  int in = input_dim;
  for (int h : hidden) {
    specs.push_back({in, h, Activation::kSigmoid});
    in = h;
  }
  specs.push_back({in, num_classes, Activation::kSoftmax});
  return specs;
}

inline MlpModel ZeroModel(const std::vector<LayerSpec> &specs) {
  MlpModel m;
  for (const auto &s : specs)
    m.layers.push_back({Matrix::Zero(s.out_dim, s.in_dim), Vector::Zero(s.out_dim), s.activation});
  return m;
}

/// Weights ~ U(-r, r), r = sqrt(6 / (in + out)); biases zero.
inline void RandomInitLayer(Layer &layer, Rng &rng) {
  const double r = std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
  std::uniform_real_distribution<double> dist(-r, r);
  for (Eigen::Index i = 0; i < layer.weights.rows(); ++i)
    for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) layer.weights(i, j) = dist(rng);
  layer.bias.setZero();
}

inline MlpModel RandomModel(const std::vector<LayerSpec> &specs, uint64_t seed) {
  MlpModel m = ZeroModel(specs);
  Rng rng(seed);
  for (auto &l : m.layers) RandomInitLayer(l, rng);
  return m;
}

inline void SoftmaxRowsInPlace(Matrix &z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

inline void SigmoidInPlace(Matrix &z) { z = (1.0 + (-z.array()).exp()).inverse().matrix(); }

inline Matrix ApplyLayer(const Layer &layer, const Matrix &input) {
  Matrix z = input * layer.weights.transpose();
  z.rowwise() += layer.bias.transpose();
  if (layer.activation == Activation::kSoftmax)
    SoftmaxRowsInPlace(z);
  else
    SigmoidInPlace(z);
  return z;
}

/// Activations of every layer for a B x D_in batch; back() holds the
/// B x C posteriors.
inline std::vector<Matrix> forward(const MlpModel &model, const Matrix &batch) {
  Require(!model.layers.empty(), ErrorKind::kDimensionMismatch, "empty model");
  Require(batch.cols() == model.input_dim(), ErrorKind::kDimensionMismatch,
          "batch has " + std::to_string(batch.cols()) + " columns, model expects " +
              std::to_string(model.input_dim()));
  std::vector<Matrix> acts;
  acts.reserve(model.layers.size());
  const Matrix *in = &batch;
  for (const auto &layer : model.layers) {
    acts.push_back(ApplyLayer(layer, *in));
    in = &acts.back();
  }
  return acts;
}

/// Posteriors only, evaluated in row chunks to bound memory.
inline Matrix Posteriors(const MlpModel &model, const Matrix &input, Eigen::Index chunk = 4096) {
  Require(input.cols() == model.input_dim(), ErrorKind::kDimensionMismatch,
          "input has " + std::to_string(input.cols()) + " columns, model expects " +
              std::to_string(model.input_dim()));
  Matrix out(input.rows(), model.output_dim());
  for (Eigen::Index start = 0; start < input.rows(); start += chunk) {
    const Eigen::Index n = std::min(chunk, input.rows() - start);
    Matrix h = input.middleRows(start, n);
    for (const auto &layer : model.layers) h = ApplyLayer(layer, h);
    out.middleRows(start, n) = h;
  }
  return out;
}

inline constexpr double kProbabilityClamp = 1e-12;

/// Mean of -ln p[label], with p clamped below at 1e-12.
inline double cross_entropy(const Matrix &posteriors, const Labels &labels) {
  Require(static_cast<Eigen::Index>(labels.size()) == posteriors.rows(), ErrorKind::kLengthMismatch,
          "labels and posteriors differ in length");
  Require(!labels.empty(), ErrorKind::kEmptyInput, "cross_entropy of an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    Require(y >= 0 && y < posteriors.cols(), ErrorKind::kLabelOutOfRange,
            "label " + std::to_string(y) + " outside [0, " + std::to_string(posteriors.cols()) + ")");
    total -= std::log(std::max(posteriors(static_cast<Eigen::Index>(i), y), kProbabilityClamp));
  }
  return total / static_cast<double>(labels.size());
}

struct LayerGradient {
  Matrix weights;
  Vector bias;
};

struct GradientResult {
  std::vector<LayerGradient> layers;
  double loss = 0.0;
};

/// Gradient of the mean cross-entropy over the batch.
inline GradientResult ComputeGradients(const MlpModel &model, const Matrix &batch, const Labels &labels) {
  const auto acts = forward(model, batch);
  GradientResult result;
  result.loss = cross_entropy(acts.back(), labels);
  const auto batch_size = static_cast<double>(batch.rows());
  result.layers.resize(model.layers.size());

  Matrix delta = acts.back();
  for (std::size_t i = 0; i < labels.size(); ++i) delta(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
  delta /= batch_size;

  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const Matrix &input = l == 0 ? batch : acts[l - 1];
    result.layers[l].weights.noalias() = delta.transpose() * input;
    result.layers[l].bias = delta.colwise().sum().transpose();
    if (l == 0) break;
    Matrix back = delta * model.layers[l].weights;
    delta = (back.array() * input.array() * (1.0 - input.array())).matrix();
  }
  return result;
}

/// One SGD update. The step is lr times the gradient summed over the block
/// (per-frame learning rate), i.e. lr * B * mean gradient. Returns the batch
/// loss before the update.
inline double backprop_step(MlpModel &model, const Matrix &batch, const Labels &labels, double lr) {
  GradientResult grad = ComputeGradients(model, batch, labels);
  for (const auto &g : grad.layers)
    if (!g.weights.allFinite() || !g.bias.allFinite())
      throw Error(ErrorKind::kNonFinite, "NonFiniteGradient: training diverged");
  const double scale = lr * static_cast<double>(batch.rows());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    model.layers[l].weights.noalias() -= scale * grad.layers[l].weights;
    model.layers[l].bias.noalias() -= scale * grad.layers[l].bias;
  }
  return grad.loss;
}

/// Argmax posterior per row, lowest index on ties.
inline Labels predict_frames(const MlpModel &model, const Matrix &features) {
  const Matrix post = Posteriors(model, features);
  Labels out(static_cast<std::size_t>(post.rows()));
  for (Eigen::Index t = 0; t < post.rows(); ++t) out[static_cast<std::size_t>(t)] = ArgMax(post.row(t));
  return out;
}

/// Labeled frames pooled across clips. `groups` carries the clip id of each
/// frame so the cross-validation split never cuts through a clip.
struct FrameSet {
  Matrix features;
  Labels labels;
  std::vector<int> groups;
  int num_classes = 0;

  Eigen::Index size() const { return features.rows(); }
};

/// Concatenates the frames of all clips; clip index becomes the group.
inline FrameSet PoolFrames(std::span<const LabeledClip> clips, int num_classes) {
  FrameSet set;
  set.num_classes = num_classes;
  Eigen::Index total = 0, dim = -1;
  for (const auto &c : clips) {
    total += c.features.num_frames();
    if (dim < 0) dim = c.features.dim();
    Require(c.features.dim() == dim, ErrorKind::kDimensionMismatch, "clips differ in feature dimension");
    Require(c.label >= 0 && c.label < num_classes, ErrorKind::kLabelOutOfRange, "clip label out of range");
  }
  set.features.resize(total, std::max<Eigen::Index>(dim, 0));
  set.labels.reserve(static_cast<std::size_t>(total));
  set.groups.reserve(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto &f = clips[i].features.frames;
    set.features.middleRows(row, f.rows()) = f;
    row += f.rows();
    set.labels.insert(set.labels.end(), static_cast<std::size_t>(f.rows()), clips[i].label);
    set.groups.insert(set.groups.end(), static_cast<std::size_t>(f.rows()), static_cast<int>(i));
  }
  return set;
}

struct TrainSchedule {
  double initial_lr = 0.002;
  double ramp_improvement_threshold = 0.5;  // percentage points
  double stop_improvement_threshold = 0.1;  // percentage points
  int minibatch_frames = 1024;
  double cv_fraction = 0.10;
  int max_epochs = 50;
  uint64_t rng_seed = 1;

  void Validate() const {
    Require(initial_lr >= 0.0, ErrorKind::kConfig, "initial_lr must be non-negative");
    Require(stop_improvement_threshold > 0.0 &&
                stop_improvement_threshold < ramp_improvement_threshold,
            ErrorKind::kConfig, "need 0 < stop threshold < ramp threshold");
    Require(cv_fraction > 0.0 && cv_fraction < 1.0, ErrorKind::kConfig, "cv_fraction must be in (0, 1)");
    Require(minibatch_frames > 0, ErrorKind::kConfig, "minibatch_frames must be positive");
    Require(max_epochs >= 0, ErrorKind::kConfig, "max_epochs must be non-negative");
  }
};

/// Learning-rate controller driven by per-epoch cross-validation accuracy.
/// The rate is held while each epoch gains more than the ramp threshold; the
/// first epoch whose gain is at or below it starts halving, after which the
/// rate halves every epoch until a gain falls below the stop threshold.
class NewbobSchedule {
 public:
  struct Decision {
    bool stop = false;
    double next_lr = 0.0;
  };

  explicit NewbobSchedule(const TrainSchedule &schedule)
      : ramp_(schedule.ramp_improvement_threshold),
        stop_(schedule.stop_improvement_threshold),
        lr_(schedule.initial_lr) {}

  double lr() const { return lr_; }
  bool halving() const { return halving_; }

  Decision Observe(double cv_accuracy) {
    const double gain = has_previous_ ? cv_accuracy - previous_ : std::numeric_limits<double>::infinity();
    previous_ = cv_accuracy;
    has_previous_ = true;
    if (halving_ && gain < stop_) return {true, lr_};
    if (!halving_ && gain <= ramp_) halving_ = true;
    if (halving_) lr_ *= 0.5;
    return {false, lr_};
  }

 private:
  double ramp_;
  double stop_;
  double lr_;
  bool halving_ = false;
  bool has_previous_ = false;
  double previous_ = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double cv_accuracy = 0.0;
};

struct TrainResult {
  MlpModel model;
  std::vector<EpochRecord> history;
};

inline void WriteHistoryCsv(std::ostream &os, const std::vector<EpochRecord> &history) {
  os << "epoch,lr,train_loss,cv_accuracy\n";
  for (const auto &h : history) os << h.epoch << ',' << h.lr << ',' << h.train_loss << ',' << h.cv_accuracy << '\n';
}

/// Indices of frames held out for cross-validation. Clips (groups) are
/// assigned whole, stratified by the label of their first frame.
inline std::vector<char> CrossValidationMask(const FrameSet &data, double cv_fraction, uint64_t seed) {
  const auto n = static_cast<std::size_t>(data.size());
  std::vector<int> groups = data.groups;
  if (groups.empty()) {
    groups.resize(n);
    std::iota(groups.begin(), groups.end(), 0);
  }
  Require(groups.size() == n, ErrorKind::kLengthMismatch, "groups and frames differ in length");
  std::map<int, int> group_label;
  for (std::size_t i = 0; i < n; ++i) group_label.try_emplace(groups[i], data.labels[i]);
  std::map<int, std::vector<int>> by_label;
  for (const auto &[g, y] : group_label) by_label[y].push_back(g);
  Rng rng(DeriveSeed(seed, "cv-split"));
  std::map<int, bool> held_out;
  for (auto &[label, gs] : by_label) {
    std::shuffle(gs.begin(), gs.end(), rng);
    std::size_t take = static_cast<std::size_t>(std::lround(cv_fraction * gs.size()));
    if (gs.size() >= 2) take = std::clamp<std::size_t>(take, 1, gs.size() - 1);
    else take = 0;
    for (std::size_t i = 0; i < take; ++i) held_out[gs[i]] = true;
  }
  std::vector<char> mask(n, 0);
  for (std::size_t i = 0; i < n; ++i) mask[i] = held_out.count(groups[i]) ? 1 : 0;
  return mask;
}

inline FrameSet SelectFrames(const FrameSet &data, const std::vector<Eigen::Index> &rows) {
  FrameSet out;
  out.num_classes = data.num_classes;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), data.features.cols());
  out.labels.resize(rows.size());
  if (!data.groups.empty()) out.groups.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = data.features.row(rows[i]);
    out.labels[i] = data.labels[static_cast<std::size_t>(rows[i])];
    if (!data.groups.empty()) out.groups[i] = data.groups[static_cast<std::size_t>(rows[i])];
  }
  return out;
}

inline double PercentCorrect(const Labels &predicted, const Labels &truth) {
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(truth.size());
}

struct TrainOptions {
  /// Replaces the measured CV accuracy (epoch is 1-based). Used to script
  /// the schedule in tests.
  std::function<double(int epoch, const MlpModel &)> cv_accuracy_override;
  std::function<void(const EpochRecord &)> on_epoch;
};

/// Minibatch SGD under the newbob schedule. Returns the final-epoch model.
inline TrainResult train(const MlpModel &init, const FrameSet &data, const TrainSchedule &schedule,
                         const TrainOptions &options = {}) {
  schedule.Validate();
  init.Validate();
  TrainResult result{init, {}};
  if (schedule.max_epochs == 0) return result;
  Require(data.size() > 0, ErrorKind::kEmptyInput, "no training frames");
  Require(data.features.cols() == init.input_dim(), ErrorKind::kDimensionMismatch,
          "training features do not match model input");
  Require(static_cast<Eigen::Index>(data.labels.size()) == data.size(), ErrorKind::kLengthMismatch,
          "labels and features differ in length");

  const auto mask = CrossValidationMask(data, schedule.cv_fraction, schedule.rng_seed);
  std::vector<Eigen::Index> train_rows, cv_rows;
  for (Eigen::Index i = 0; i < data.size(); ++i) (mask[static_cast<std::size_t>(i)] ? cv_rows : train_rows).push_back(i);
  Require(!train_rows.empty(), ErrorKind::kEmptyInput, "cross-validation split left no training frames");
  const FrameSet cv = SelectFrames(data, cv_rows);

  NewbobSchedule controller(schedule);
  MlpModel &model = result.model;
  Matrix batch;
  Labels batch_labels;
  for (int epoch = 1; epoch <= schedule.max_epochs; ++epoch) {
    const double lr = controller.lr();
    Rng rng(DeriveSeed(schedule.rng_seed, "epoch-" + std::to_string(epoch)));
    std::vector<Eigen::Index> order = train_rows;
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    const auto block = static_cast<std::size_t>(schedule.minibatch_frames);
    for (std::size_t start = 0; start < order.size(); start += block) {
      const std::size_t n = std::min(block, order.size() - start);
      batch.resize(static_cast<Eigen::Index>(n), data.features.cols());
      batch_labels.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        batch.row(static_cast<Eigen::Index>(i)) = data.features.row(order[start + i]);
        batch_labels[i] = data.labels[static_cast<std::size_t>(order[start + i])];
      }
      loss_sum += backprop_step(model, batch, batch_labels, lr) * static_cast<double>(n);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.lr = lr;
    record.train_loss = loss_sum / static_cast<double>(order.size());
    if (options.cv_accuracy_override)
      record.cv_accuracy = options.cv_accuracy_override(epoch, model);
    else
      record.cv_accuracy = cv.size() > 0 ? PercentCorrect(predict_frames(model, cv.features), cv.labels) : 0.0;
    result.history.push_back(record);
    if (options.on_epoch) options.on_epoch(record);
    if (controller.Observe(record.cv_accuracy).stop) break;
  }
  return result;
}

// Model file: "ACNN", u32 version, u32 num_layers, then per layer
// {u32 in, u32 out, u8 activation, f64 weights row-major, f64 biases}.
inline constexpr uint32_t kMlpFormatVersion = 1;

inline void WriteMlp(std::ostream &os, const MlpModel &model) {
  io::WriteMagic(os, "ACNN");
  io::WritePod<uint32_t>(os, kMlpFormatVersion);
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(model.layers.size()));
  for (const auto &l : model.layers) {
    io::WritePod<uint32_t>(os, static_cast<uint32_t>(l.in_dim()));
    io::WritePod<uint32_t>(os, static_cast<uint32_t>(l.out_dim()));
    io::WritePod<uint8_t>(os, static_cast<uint8_t>(l.activation));
    io::WriteF64(os, l.weights);
    io::WriteF64(os, l.bias.transpose());
  }
}

inline MlpModel ReadMlp(std::istream &is) {
  io::ExpectMagic(is, "ACNN");
  const auto version = io::ReadPod<uint32_t>(is);
  Require(version == kMlpFormatVersion, ErrorKind::kFormat, "unsupported ACNN version");
  const auto count = io::ReadPod<uint32_t>(is);
  MlpModel model;
  for (uint32_t i = 0; i < count; ++i) {
    Layer l;
    const auto in = io::ReadPod<uint32_t>(is);
    const auto out = io::ReadPod<uint32_t>(is);
    const auto act = io::ReadPod<uint8_t>(is);
    Require(act <= 1, ErrorKind::kFormat, "unknown activation");
    l.activation = static_cast<Activation>(act);
    l.weights = io::ReadF64Matrix(is, out, in);
    l.bias = io::ReadF64Vector(is, out);
    model.layers.push_back(std::move(l));
  }
  model.Validate();
  return model;
}

inline void SaveMlp(const std::filesystem::path &path, const MlpModel &model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  WriteMlp(os, model);
}

inline MlpModel LoadMlp(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return ReadMlp(is);
}

}  // namespace hdnn
