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

// Restricted Boltzmann machines trained with CD-1, and greedy layer-wise
// pre-training of a sigmoid MLP stack.

#pragma once

#include <functional>
#include <numeric>
#include <vector>

#include "hdnn/common.hpp"
#include "hdnn/mlp.hpp"

namespace hdnn {

enum class RbmKind : uint8_t { kGaussianBernoulli = 0, kBernoulliBernoulli = 1 };

/// Single RBM. Gaussian visibles are assumed to have unit variance.
struct RbmModel {
  RbmKind kind = RbmKind::kBernoulliBernoulli;
  Matrix weights;  // hidden x visible
  Vector visible_bias;
  Vector hidden_bias;

  Eigen::Index num_visible() const { return weights.cols(); }
  Eigen::Index num_hidden() const { return weights.rows(); }

  /// Weights ~ N(0, 0.01), biases zero.
  static RbmModel Random(RbmKind kind, int visible, int hidden, Rng &rng) {
    RbmModel m;
    m.kind = kind;
    m.weights.resize(hidden, visible);
    std::normal_distribution<double> dist(0.0, 0.01);
    for (Eigen::Index i = 0; i < m.weights.rows(); ++i)
      for (Eigen::Index j = 0; j < m.weights.cols(); ++j) m.weights(i, j) = dist(rng);
    m.visible_bias = Vector::Zero(visible);
    m.hidden_bias = Vector::Zero(hidden);
    return m;
  }

  Matrix HiddenProbabilities(const Matrix &visible) const {
    Matrix z = visible * weights.transpose();
    z.rowwise() += hidden_bias.transpose();
    SigmoidInPlace(z);
    return z;
  }

  /// Mean of p(v | h): linear for Gaussian visibles, sigmoid for binary.
  Matrix VisibleMean(const Matrix &hidden) const {
    Matrix z = hidden * weights;
    z.rowwise() += visible_bias.transpose();
    if (kind == RbmKind::kBernoulliBernoulli) SigmoidInPlace(z);
    return z;
  }

  bool operator==(const RbmModel &o) const {
    return kind == o.kind && weights == o.weights && visible_bias == o.visible_bias &&
           hidden_bias == o.hidden_bias;
  }
};

inline void CheckVisible(const RbmModel &rbm, const Matrix &batch) {
  Require(batch.cols() == rbm.num_visible(), ErrorKind::kDimensionMismatch,
          "batch has " + std::to_string(batch.cols()) + " columns, RBM has " +
              std::to_string(rbm.num_visible()) + " visible units");
}

/// One contrastive-divergence update: hidden probabilities from data, a
/// binary hidden sample, mean-field visible reconstruction, and hidden
/// probabilities of the reconstruction for the negative statistics.
inline void cd1_step(RbmModel &rbm, const Matrix &batch, double lr, Rng &rng) {
  CheckVisible(rbm, batch);
  const Matrix h0 = rbm.HiddenProbabilities(batch);
  Matrix h_sample(h0.rows(), h0.cols());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index i = 0; i < h0.rows(); ++i)
    for (Eigen::Index j = 0; j < h0.cols(); ++j) h_sample(i, j) = unif(rng) < h0(i, j) ? 1.0 : 0.0;
  const Matrix v1 = rbm.VisibleMean(h_sample);
  const Matrix h1 = rbm.HiddenProbabilities(v1);

  const double scale = lr / static_cast<double>(batch.rows());
  Matrix dw = h0.transpose() * batch;
  dw.noalias() -= h1.transpose() * v1;
  const Vector dvb = (batch - v1).colwise().sum().transpose();
  const Vector dhb = (h0 - h1).colwise().sum().transpose();
  if (!dw.allFinite() || !dvb.allFinite() || !dhb.allFinite())
    throw Error(ErrorKind::kNonFinite, "NonFiniteUpdate in RBM training");
  rbm.weights.noalias() += scale * dw;
  rbm.visible_bias.noalias() += scale * dvb;
  rbm.hidden_bias.noalias() += scale * dhb;
}

/// Mean over rows of the squared distance between each row and its
/// mean-field reconstruction v -> p(h|v) -> E[v|h].
inline double reconstruction_error(const RbmModel &rbm, const Matrix &batch) {
  CheckVisible(rbm, batch);
  Require(batch.rows() > 0, ErrorKind::kEmptyInput, "empty batch");
  const Matrix recon = rbm.VisibleMean(rbm.HiddenProbabilities(batch));
  return (batch - recon).squaredNorm() / static_cast<double>(batch.rows());
}

struct PretrainConfig {
  double gb_lr = 0.005;
  int gb_epochs = 10;
  double bb_lr = 0.05;
  int bb_epochs = 5;
  int minibatch = 1024;
  uint64_t rng_seed = 1;
  /// Rows used to monitor reconstruction error each epoch.
  int monitor_rows = 2048;

  void Validate() const {
    Require(gb_lr > 0 && bb_lr > 0 && gb_epochs > 0 && bb_epochs > 0 && minibatch > 0,
            ErrorKind::kConfig, "pre-training rates, epochs and minibatch must be positive");
  }
};

/// One pre-trained hidden layer in MLP orientation (out x in).
struct PretrainedLayer {
  RbmModel rbm;
  /// Reconstruction error on the monitor rows: index 0 before training,
  /// then after each epoch.
  std::vector<double> reconstruction_errors;
};

/// Trains `rbm` for `epochs` passes over `data` in shuffled minibatches.
inline std::vector<double> TrainRbm(RbmModel &rbm, const Matrix &data, double lr, int epochs, int minibatch,
                                    uint64_t seed, int monitor_rows) {
  Require(data.rows() > 0, ErrorKind::kEmptyInput, "no data for RBM training");
  const Eigen::Index monitor = std::min<Eigen::Index>(monitor_rows, data.rows());
  Matrix probe(monitor, data.cols());
  for (Eigen::Index i = 0; i < monitor; ++i) probe.row(i) = data.row(i * data.rows() / monitor);
  std::vector<double> errors{reconstruction_error(rbm, probe)};
  Rng sampler(DeriveSeed(seed, "gibbs"));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.rows()));
  Matrix batch;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffler(DeriveSeed(seed, "epoch-" + std::to_string(epoch)));
    std::shuffle(order.begin(), order.end(), shuffler);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(minibatch)) {
      const std::size_t n = std::min<std::size_t>(minibatch, order.size() - start);
      batch.resize(static_cast<Eigen::Index>(n), data.cols());
      for (std::size_t i = 0; i < n; ++i) batch.row(static_cast<Eigen::Index>(i)) = data.row(order[start + i]);
      cd1_step(rbm, batch, lr, sampler);
    }
    errors.push_back(reconstruction_error(rbm, probe));
  }
  return errors;
}

/// Greedy stack: the first hidden layer is a Gaussian-Bernoulli RBM on the
/// (normalized) features, each further layer a Bernoulli-Bernoulli RBM on
/// the hidden probabilities of the one below.
inline std::vector<PretrainedLayer> pretrain_stack(const std::vector<int> &hidden_dims, const Matrix &data,
                                                   const PretrainConfig &config) {
  std::vector<PretrainedLayer> stack;
  if (hidden_dims.empty()) return stack;
  config.Validate();
  Matrix input = data;
  for (std::size_t l = 0; l < hidden_dims.size(); ++l) {
    const bool first = l == 0;
    const uint64_t seed = DeriveSeed(config.rng_seed, "rbm-layer-" + std::to_string(l));
    Rng init_rng(seed);
    PretrainedLayer layer{RbmModel::Random(first ? RbmKind::kGaussianBernoulli : RbmKind::kBernoulliBernoulli,
                                           static_cast<int>(input.cols()), hidden_dims[l], init_rng),
                          {}};
    layer.reconstruction_errors = TrainRbm(layer.rbm, input, first ? config.gb_lr : config.bb_lr,
                                           first ? config.gb_epochs : config.bb_epochs, config.minibatch,
                                           seed, config.monitor_rows);
    if (l + 1 < hidden_dims.size()) input = layer.rbm.HiddenProbabilities(input);
    stack.push_back(std::move(layer));
  }
  return stack;
}

/// MLP whose sigmoid layers copy the pre-trained weights and hidden biases;
/// the softmax layer is randomly initialized.
inline MlpModel MlpFromPretrained(const std::vector<PretrainedLayer> &stack, int input_dim, int num_classes,
                                  uint64_t seed) {
  std::vector<int> hidden;
  for (const auto &l : stack) hidden.push_back(static_cast<int>(l.rbm.num_hidden()));
  MlpModel model = RandomModel(ArchitectureSpecs(input_dim, hidden, num_classes), seed);
  for (std::size_t i = 0; i < stack.size(); ++i) {
    Require(model.layers[i].weights.rows() == stack[i].rbm.weights.rows() &&
                model.layers[i].weights.cols() == stack[i].rbm.weights.cols(),
            ErrorKind::kDimensionMismatch, "pre-trained layer does not chain with the MLP");
    model.layers[i].weights = stack[i].rbm.weights;
    model.layers[i].bias = stack[i].rbm.hidden_bias;
  }
  return model;
}

}  // namespace hdnn
