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

// Diagonal-covariance GMMs: EM, k-means++ seeded UBM training, per-concept
// re-estimation from the UBM and log-likelihood-ratio frame scoring.

#pragma once

#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "hdnn/common.hpp"
#include "hdnn/features.hpp"

namespace hdnn {

struct DiagGmm {
  Vector weights;    // K, on the simplex
  Matrix means;      // K x D
  Matrix variances;  // K x D, positive

  Eigen::Index num_components() const { return weights.size(); }
  Eigen::Index dim() const { return means.cols(); }

  void Validate() const {
    Require(weights.size() > 0, ErrorKind::kDimensionMismatch, "GMM has no components");
    Require(means.rows() == weights.size() && variances.rows() == weights.size() &&
                variances.cols() == means.cols(),
            ErrorKind::kDimensionMismatch, "GMM parameter shapes disagree");
    Require((variances.array() > 0.0).all(), ErrorKind::kDegenerate, "non-positive variance");
  }

  /// N x K matrix of log(w_k) + log N(x_n | mu_k, diag(var_k)), with the
  /// quadratic form expanded into matrix products.
  Matrix ComponentLogLikelihoods(const Matrix &x) const {
    Require(x.cols() == dim(), ErrorKind::kDimensionMismatch,
            "frames have " + std::to_string(x.cols()) + " dims, GMM has " + std::to_string(dim()));
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    const Matrix inv_var = variances.cwiseInverse();
    const Matrix mu_over_var = means.cwiseProduct(inv_var);
    RowVector offset(num_components());
    for (Eigen::Index k = 0; k < num_components(); ++k)
      offset(k) = std::log(weights(k)) - 0.5 * (dim() * log_2pi + variances.row(k).array().log().sum()) -
                  0.5 * means.row(k).dot(mu_over_var.row(k));
    Matrix out = x * mu_over_var.transpose();
    out.noalias() -= 0.5 * x.cwiseAbs2() * inv_var.transpose();
    out.rowwise() += offset;
    return out;
  }

  /// log p(x_n) for every row.
  Vector LogDensities(const Matrix &x) const {
    const Matrix comp = ComponentLogLikelihoods(x);
    Vector out(x.rows());
    for (Eigen::Index n = 0; n < x.rows(); ++n) {
      const double m = comp.row(n).maxCoeff();
      out(n) = m + std::log((comp.row(n).array() - m).exp().sum());
    }
    return out;
  }

  double LogDensity(const RowVector &frame) const {
    Matrix x = frame;
    return LogDensities(x)(0);
  }

  bool operator==(const DiagGmm &o) const {
    return weights == o.weights && means == o.means && variances == o.variances;
  }
};

inline Vector GlobalMean(const Matrix &x) { return x.colwise().mean().transpose(); }

inline Vector GlobalVariance(const Matrix &x) {
  const Vector mu = GlobalMean(x);
  return (x.rowwise() - mu.transpose()).array().square().colwise().mean().transpose();
}

struct EmOptions {
  /// Per-dimension variance floor; empty means 1e-3 x the data's variance.
  Vector variance_floor;
  /// Stop once the per-frame log-likelihood gain drops below this. 0 runs
  /// every iteration.
  double min_gain_per_frame = 0.0;
  /// Update only the means (weights and variances stay at their initial
  /// values).
  bool means_only = false;
};

struct EmResult {
  DiagGmm gmm;
  /// Total data log-likelihood before each iteration, plus one entry for
  /// the final parameters.
  std::vector<double> log_likelihoods;
  /// Components whose responsibility mass fell below 1e-8 and were reset.
  int degenerate_resets = 0;
};

inline constexpr double kMinComponentMass = 1e-8;
inline constexpr double kVarianceFloorScale = 1e-3;

inline Vector DefaultVarianceFloor(const Matrix &data) {
  return (kVarianceFloorScale * GlobalVariance(data).array()).max(1e-12).matrix();
}

/// Diagonal-covariance EM. A component whose responsibility mass falls
/// below 1e-8 is reset to the global mean and variance, keeping its
/// (negligible) weight.
inline EmResult em_train(const DiagGmm &init, const Matrix &data, int iterations, const EmOptions &options = {}) {
  init.Validate();
  Require(data.cols() == init.dim(), ErrorKind::kDimensionMismatch, "data dimension differs from the GMM");
  EmResult result{init, {}, 0};
  if (iterations <= 0) return result;
  Require(data.allFinite(), ErrorKind::kNonFinite, "EM data contains non-finite values");
  Require(data.rows() >= 1, ErrorKind::kEmptyInput, "EM needs data");

  const auto n = static_cast<double>(data.rows());
  const Vector floor = options.variance_floor.size() == data.cols() ? options.variance_floor
                                                                     : DefaultVarianceFloor(data);
  const Vector global_mean = GlobalMean(data);
  const Vector global_var = GlobalVariance(data).cwiseMax(floor);
  // Sufficient statistics are accumulated about the global mean.
  const Matrix centered = data.rowwise() - global_mean.transpose();
  DiagGmm &gmm = result.gmm;
  const Eigen::Index k_count = gmm.num_components();

  auto e_step = [&](Matrix &resp) {
    resp = gmm.ComponentLogLikelihoods(data);
    double total = 0.0;
    for (Eigen::Index r = 0; r < resp.rows(); ++r) {
      auto row = resp.row(r).array();
      const double m = row.maxCoeff();
      // Posteriors below e^-50 are dropped; denormals stall the GEMMs.
      row = (row - m).max(-50.0).exp();
      row = (row < 1e-21).select(0.0, row);
      const double s = row.sum();
      total += m + std::log(s);
      row /= s;
    }
    return total;
  };

  Matrix resp;
  for (int it = 0; it < iterations; ++it) {
    const double ll = e_step(resp);
    if (!result.log_likelihoods.empty() && options.min_gain_per_frame > 0.0 &&
        (ll - result.log_likelihoods.back()) / n < options.min_gain_per_frame) {
      result.log_likelihoods.push_back(ll);
      return result;
    }
    result.log_likelihoods.push_back(ll);

    const Vector mass = resp.colwise().sum().transpose();
    const Matrix sum_x = resp.transpose() * centered;
    Matrix sum_x2;
    if (!options.means_only) sum_x2 = resp.transpose() * centered.cwiseAbs2();
    for (Eigen::Index k = 0; k < k_count; ++k) {
      if (mass(k) < kMinComponentMass) {
        ++result.degenerate_resets;
        if (!options.means_only) {
          gmm.means.row(k) = global_mean.transpose();
          gmm.variances.row(k) = global_var.transpose();
        }
        continue;
      }
      const RowVector mu_c = sum_x.row(k) / mass(k);
      gmm.means.row(k) = mu_c + global_mean.transpose();
      if (options.means_only) continue;
      const RowVector var = sum_x2.row(k) / mass(k) - mu_c.cwiseAbs2();
      gmm.variances.row(k) = var.cwiseMax(floor.transpose());
    }
    if (!options.means_only) gmm.weights = mass / mass.sum();
  }
  Matrix final_resp;
  result.log_likelihoods.push_back(e_step(final_resp));
  return result;
}

/// Index of the closest center (squared Euclidean) for every row.
inline std::vector<int> NearestCenters(const Matrix &data, const Matrix &centers) {
  Matrix d = data * centers.transpose();
  d *= -2.0;
  d.rowwise() += centers.rowwise().squaredNorm().transpose();
  std::vector<int> out(static_cast<std::size_t>(data.rows()));
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    Eigen::Index best = 0;
    d.row(i).minCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

/// k-means++ seeding followed by Lloyd iterations; returns K x D centers.
inline Matrix KMeansPlusPlus(const Matrix &data, int k, Rng &rng, int lloyd_iterations = 10) {
  Require(data.rows() >= k && k >= 1, ErrorKind::kDataTooSmall,
          "k-means needs at least " + std::to_string(k) + " rows");
  Matrix centers(k, data.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, data.rows() - 1);
  centers.row(0) = data.row(pick(rng));
  Vector dist = (data.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = dist.sum();
    Eigen::Index chosen = pick(rng);
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng), acc = 0.0;
      for (Eigen::Index i = 0; i < data.rows(); ++i) {
        acc += dist(i);
        if (acc >= target) {
          chosen = i;
          break;
        }
      }
    }
    centers.row(c) = data.row(chosen);
    dist = dist.cwiseMin((data.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  for (int it = 0; it < lloyd_iterations; ++it) {
    const std::vector<int> assign = NearestCenters(data, centers);
    Matrix sums = Matrix::Zero(k, data.cols());
    Vector counts = Vector::Zero(k);
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += data.row(i);
      counts(assign[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (int c = 0; c < k; ++c)
      if (counts(c) > 0) centers.row(c) = sums.row(c) / counts(c);
  }
  return centers;
}

struct GmmTrainConfig {
  int components = 256;
  int iterations = 20;
  double min_gain_per_frame = 1e-4;
  int kmeans_subsample = 20000;
  uint64_t seed = 1;
};

/// Hard-assignment GMM around the given centers.
inline DiagGmm GmmFromCenters(const Matrix &data, const Matrix &centers, const Vector &floor) {
  const Eigen::Index k = centers.rows();
  DiagGmm gmm{Vector::Zero(k), centers, Matrix::Zero(k, data.cols())};
  Matrix sq = Matrix::Zero(k, data.cols());
  Vector counts = Vector::Zero(k);
  const std::vector<int> assign = NearestCenters(data, centers);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const int best = assign[static_cast<std::size_t>(i)];
    sq.row(best) += (data.row(i) - centers.row(best)).array().square().matrix();
    counts(best) += 1.0;
  }
  const Vector global_var = GlobalVariance(data);
  for (Eigen::Index c = 0; c < k; ++c) {
    gmm.weights(c) = std::max(counts(c), 1.0);
    const RowVector var = counts(c) > 1 ? RowVector(sq.row(c) / counts(c)) : RowVector(global_var.transpose());
    gmm.variances.row(c) = var.cwiseMax(floor.transpose());
  }
  gmm.weights /= gmm.weights.sum();
  return gmm;
}

/// Concept-independent background model: seeded k-means++ on a subsample,
/// then EM on all frames.
inline EmResult train_ubm(const Matrix &data, const GmmTrainConfig &config) {
  Require(data.rows() >= config.components, ErrorKind::kDataTooSmall,
          "UBM needs at least as many frames as components");
  Rng rng(DeriveSeed(config.seed, "ubm-kmeans"));
  Matrix sample = data;
  if (data.rows() > config.kmeans_subsample) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(data.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    sample.resize(config.kmeans_subsample, data.cols());
    for (int i = 0; i < config.kmeans_subsample; ++i) sample.row(i) = data.row(idx[static_cast<std::size_t>(i)]);
  }
  const Vector floor = DefaultVarianceFloor(data);
  const Matrix centers = KMeansPlusPlus(sample, config.components, rng);
  EmOptions opts;
  opts.variance_floor = floor;
  opts.min_gain_per_frame = config.min_gain_per_frame;
  return em_train(GmmFromCenters(sample, centers, floor), data, config.iterations, opts);
}

struct AdaptResult {
  EmResult em;
  /// True when the concept had fewer frames than components and only the
  /// means were re-estimated.
  bool means_only = false;
};

/// EM re-estimation of all parameters starting from the UBM, on one
/// concept's frames.
inline AdaptResult adapt_concept(const DiagGmm &ubm, const Matrix &concept_data, int iterations,
                                 const Vector &variance_floor, double min_gain_per_frame = 0.0) {
  Require(concept_data.rows() > 0, ErrorKind::kEmptyInput, "concept has no frames");
  EmOptions opts;
  opts.variance_floor = variance_floor;
  opts.min_gain_per_frame = min_gain_per_frame;
  AdaptResult result;
  result.means_only = concept_data.rows() < ubm.num_components();
  opts.means_only = result.means_only;
  result.em = em_train(ubm, concept_data, iterations, opts);
  return result;
}

inline double llr_score(const DiagGmm &model, const DiagGmm &ubm, const RowVector &frame) {
  return model.LogDensity(frame) - ubm.LogDensity(frame);
}

struct GmmConceptBank {
  DiagGmm ubm;
  std::vector<DiagGmm> concepts;
  std::vector<std::string> labels;

  void Validate() const {
    ubm.Validate();
    Require(concepts.size() == labels.size(), ErrorKind::kDimensionMismatch, "label table size mismatch");
    for (const auto &c : concepts) {
      c.Validate();
      Require(c.num_components() == ubm.num_components() && c.dim() == ubm.dim(),
              ErrorKind::kDimensionMismatch, "concept model shape differs from the UBM");
    }
  }

  /// N x C log-likelihood ratios against the UBM.
  Matrix Scores(const Matrix &frames) const {
    const Vector background = ubm.LogDensities(frames);
    Matrix out(frames.rows(), static_cast<Eigen::Index>(concepts.size()));
    for (std::size_t c = 0; c < concepts.size(); ++c)
      out.col(static_cast<Eigen::Index>(c)) = concepts[c].LogDensities(frames) - background;
    return out;
  }

  Labels Classify(const Matrix &frames) const {
    const Matrix s = Scores(frames);
    Labels out(static_cast<std::size_t>(s.rows()));
    for (Eigen::Index t = 0; t < s.rows(); ++t) out[static_cast<std::size_t>(t)] = ArgMax(s.row(t));
    return out;
  }

  bool operator==(const GmmConceptBank &o) const {
    return ubm == o.ubm && concepts == o.concepts && labels == o.labels;
  }
};

inline int classify_frame(const GmmConceptBank &bank, const RowVector &frame) {
  return bank.Classify(Matrix(frame)).front();
}

struct BankTrainResult {
  GmmConceptBank bank;
  std::vector<double> ubm_log_likelihoods;
  std::vector<bool> means_only;
};

/// UBM on pooled training frames, then one adapted model per concept.
inline BankTrainResult train_concept_bank(std::span<const LabeledClip> clips, const std::vector<std::string> &labels,
                                          const GmmTrainConfig &config, int threads = 1) {
  const auto num_classes = static_cast<int>(labels.size());
  Eigen::Index total = 0, dim = -1;
  std::vector<Eigen::Index> per_class(static_cast<std::size_t>(num_classes), 0);
  for (const auto &c : clips) {
    Require(c.label >= 0 && c.label < num_classes, ErrorKind::kLabelOutOfRange, "clip label out of range");
    if (dim < 0) dim = c.features.dim();
    Require(c.features.dim() == dim, ErrorKind::kDimensionMismatch, "clips differ in dimension");
    total += c.features.num_frames();
    per_class[static_cast<std::size_t>(c.label)] += c.features.num_frames();
  }
  Require(total > 0, ErrorKind::kEmptyInput, "no training frames for the GMM system");
  Matrix pooled(total, dim);
  std::vector<Matrix> by_class(static_cast<std::size_t>(num_classes));
  std::vector<Eigen::Index> fill(static_cast<std::size_t>(num_classes), 0);
  for (int c = 0; c < num_classes; ++c) by_class[static_cast<std::size_t>(c)].resize(per_class[static_cast<std::size_t>(c)], dim);
  Eigen::Index row = 0;
  for (const auto &c : clips) {
    const auto &f = c.features.frames;
    pooled.middleRows(row, f.rows()) = f;
    row += f.rows();
    auto &dst = by_class[static_cast<std::size_t>(c.label)];
    dst.middleRows(fill[static_cast<std::size_t>(c.label)], f.rows()) = f;
    fill[static_cast<std::size_t>(c.label)] += f.rows();
  }

  BankTrainResult result;
  EmResult ubm = train_ubm(pooled, config);
  result.ubm_log_likelihoods = ubm.log_likelihoods;
  result.bank.ubm = ubm.gmm;
  result.bank.labels = labels;
  result.bank.concepts.resize(static_cast<std::size_t>(num_classes));
  result.means_only.resize(static_cast<std::size_t>(num_classes));
  const Vector floor = DefaultVarianceFloor(pooled);
  std::vector<char> means_only(static_cast<std::size_t>(num_classes), 0);
  ParallelFor(static_cast<std::size_t>(num_classes), threads, [&](std::size_t c) {
    Require(by_class[c].rows() > 0, ErrorKind::kEmptyInput, "concept '" + labels[c] + "' has no training frames");
    AdaptResult adapted = adapt_concept(result.bank.ubm, by_class[c], config.iterations, floor, config.min_gain_per_frame);
    result.bank.concepts[c] = adapted.em.gmm;
    means_only[c] = adapted.means_only;
  });
  for (std::size_t c = 0; c < means_only.size(); ++c) result.means_only[c] = means_only[c] != 0;
  return result;
}

// Bank file: "ACGM", u32 version, u32 K, u32 D, u32 num_concepts, label
// strings, then the UBM and each concept model as {weights, means,
// variances} in f64.
inline constexpr uint32_t kBankFormatVersion = 1;

inline void WriteGmmBody(std::ostream &os, const DiagGmm &g) {
  io::WriteF64(os, g.weights.transpose());
  io::WriteF64(os, g.means);
  io::WriteF64(os, g.variances);
}

inline DiagGmm ReadGmmBody(std::istream &is, Eigen::Index k, Eigen::Index d) {
  DiagGmm g;
  g.weights = io::ReadF64Vector(is, k);
  g.means = io::ReadF64Matrix(is, k, d);
  g.variances = io::ReadF64Matrix(is, k, d);
  return g;
}

inline void WriteBank(std::ostream &os, const GmmConceptBank &bank) {
  io::WriteMagic(os, "ACGM");
  io::WritePod<uint32_t>(os, kBankFormatVersion);
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(bank.ubm.num_components()));
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(bank.ubm.dim()));
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(bank.concepts.size()));
  for (const auto &l : bank.labels) io::WriteString(os, l);
  WriteGmmBody(os, bank.ubm);
  for (const auto &c : bank.concepts) WriteGmmBody(os, c);
}

inline GmmConceptBank ReadBank(std::istream &is) {
  io::ExpectMagic(is, "ACGM");
  Require(io::ReadPod<uint32_t>(is) == kBankFormatVersion, ErrorKind::kFormat, "unsupported ACGM version");
  const auto k = io::ReadPod<uint32_t>(is);
  const auto d = io::ReadPod<uint32_t>(is);
  const auto c = io::ReadPod<uint32_t>(is);
  GmmConceptBank bank;
  for (uint32_t i = 0; i < c; ++i) bank.labels.push_back(io::ReadString(is));
  bank.ubm = ReadGmmBody(is, k, d);
  for (uint32_t i = 0; i < c; ++i) bank.concepts.push_back(ReadGmmBody(is, k, d));
  bank.Validate();
  return bank;
}

inline void SaveBank(const std::filesystem::path &path, const GmmConceptBank &bank) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  WriteBank(os, bank);
}

inline GmmConceptBank LoadBank(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return ReadBank(is);
}

}  // namespace hdnn
