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

// Acoustic front-end: framing, MFCC (C0..C12 + log energy), deltas,
// mean/variance normalization, context stacking and per-band temporal DCT.

#pragma once

#include <unsupported/Eigen/FFT>

#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hdnn/common.hpp"
#include "hdnn/wav.hpp"

namespace hdnn {

enum class FeatureKind : uint8_t {
  kMfcc14 = 0,
  kMfccDelta42 = 1,
  kStacked = 2,
  kDctReduced = 3,
  kPosterior = 4,
};

/// T x D matrix of per-frame features plus frame timing.
struct FeatureSequence {
  Matrix frames;
  double frame_shift_ms = 10.0;
  double frame_length_ms = 25.0;
  FeatureKind kind = FeatureKind::kMfcc14;

  Eigen::Index num_frames() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
};

/// A trimmed concept segment: every frame carries `label`.
struct LabeledClip {
  FeatureSequence features;
  int label = 0;
  std::string id;
};

struct MfccOptions {
  int sample_rate = 16000;
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;
  double preemphasis = 0.97;
  int fft_size = 512;
  int num_mel_bins = 26;
  int num_ceps = 13;
  double low_hz = 0.0;
  double high_hz = 8000.0;
  double log_floor = 1e-10;  // energies are floored here before the log
};

inline int SamplesForMs(double ms, int sample_rate) {
  return static_cast<int>(std::lround(ms * sample_rate / 1000.0));
}

/// Periodic Hamming window: 0.54 - 0.46 cos(2 pi n / N).
inline std::vector<double> HammingWindow(int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int n = 0; n < length; ++n)
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / length);
  return w;
}

inline Eigen::Index NumFrames(std::size_t num_samples, int window, int hop) {
  if (num_samples < static_cast<std::size_t>(window)) return 0;
  return static_cast<Eigen::Index>((num_samples - window) / hop + 1);
}

/// Slices `clip` into Hamming-windowed frames (one per row). The trailing
/// partial frame is dropped.
inline Matrix frame_signal(const AudioClip &clip, double frame_length_ms, double frame_shift_ms) {
  Require(clip.sample_rate > 0, ErrorKind::kClipTooShort, "sample rate must be positive");
  const int window = SamplesForMs(frame_length_ms, clip.sample_rate);
  const int hop = SamplesForMs(frame_shift_ms, clip.sample_rate);
  Require(window > 0 && hop > 0, ErrorKind::kClipTooShort, "frame length/shift too small");
  const Eigen::Index count = NumFrames(clip.samples.size(), window, hop);
  if (count == 0)
    throw Error(ErrorKind::kClipTooShort, std::to_string(clip.samples.size()) +
                                              " samples cannot hold a " + std::to_string(window) +
                                              "-sample frame");
  const auto win = HammingWindow(window);
  Matrix frames(count, window);
  for (Eigen::Index t = 0; t < count; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * hop;
    for (int n = 0; n < window; ++n) frames(t, n) = clip.samples[start + n] * win[n];
  }
  return frames;
}

inline double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular filters with mel-equispaced edges over [low_hz, high_hz].
class MelFilterbank {
 public:
  MelFilterbank(int num_bins, int fft_size, int sample_rate, double low_hz, double high_hz)
      : fft_size_(fft_size), weights_(Matrix::Zero(num_bins, fft_size / 2 + 1)) {
    const double mel_lo = HzToMel(low_hz), mel_hi = HzToMel(high_hz);
    std::vector<double> edges(static_cast<std::size_t>(num_bins) + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
      edges[i] = MelToHz(mel_lo + (mel_hi - mel_lo) * i / (num_bins + 1));
    centers_.assign(edges.begin() + 1, edges.end() - 1);
    for (int m = 0; m < num_bins; ++m) {
      const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
      for (int k = 0; k <= fft_size / 2; ++k) {
        const double f = static_cast<double>(k) * sample_rate / fft_size;
        if (f > left && f <= center)
          weights_(m, k) = (f - left) / (center - left);
        else if (f > center && f < right)
          weights_(m, k) = (right - f) / (right - center);
      }
    }
  }

  int num_bins() const { return static_cast<int>(weights_.rows()); }
  int fft_size() const { return fft_size_; }
  const std::vector<double> &center_hz() const { return centers_; }

  /// Filter outputs for a one-sided power spectrum of fft_size/2+1 bins.
  Vector Apply(const Vector &power) const { return weights_ * power; }

 private:
  int fft_size_;
  Matrix weights_;
  std::vector<double> centers_;
};

inline int FftSizeFor(int frame_samples, int requested) {
  int n = std::max(requested, 1);
  while (n < frame_samples) n *= 2;
  return n;
}

/// One-sided power spectrum |X_k|^2, k = 0..n/2, of a zero-padded frame.
inline Vector PowerSpectrum(std::span<const double> frame, int fft_size) {
  std::vector<double> padded(static_cast<std::size_t>(fft_size), 0.0);
  std::copy(frame.begin(), frame.end(), padded.begin());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, padded);
  Vector power(fft_size / 2 + 1);
  for (int k = 0; k <= fft_size / 2; ++k) power(k) = std::norm(spectrum[k]);
  return power;
}

/// Row k of the orthonormal DCT-II of length n.
inline Matrix DctMatrix(int n) {
  Matrix m(n, n);
  for (int k = 0; k < n; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / n);
    for (int i = 0; i < n; ++i) m(k, i) = scale * std::cos(std::numbers::pi * (i + 0.5) * k / n);
  }
  return m;
}

/// Front-end with precomputed filterbank and DCT tables.
class MfccComputer {
 public:
  explicit MfccComputer(const MfccOptions &opts)
      : opts_(opts),
        frame_samples_(SamplesForMs(opts.frame_length_ms, opts.sample_rate)),
        bank_(opts.num_mel_bins, FftSizeFor(frame_samples_, opts.fft_size), opts.sample_rate,
              opts.low_hz, opts.high_hz),
        dct_(DctMatrix(opts.num_mel_bins).topRows(opts.num_ceps)) {
    Require(opts.num_ceps <= opts.num_mel_bins, ErrorKind::kConfig,
            "num_ceps exceeds number of mel bins");
  }

  const MfccOptions &options() const { return opts_; }
  const MelFilterbank &filterbank() const { return bank_; }
  int dim() const { return opts_.num_ceps + 1; }

  Vector LogMelEnergies(std::span<const double> windowed) const {
    std::vector<double> x(windowed.begin(), windowed.end());
    for (std::size_t n = x.size(); n-- > 1;) x[n] -= opts_.preemphasis * x[n - 1];
    if (!x.empty()) x[0] *= 1.0 - opts_.preemphasis;
    Vector mel = bank_.Apply(PowerSpectrum(x, bank_.fft_size()));
    for (Eigen::Index i = 0; i < mel.size(); ++i)
      mel(i) = std::log(std::max(mel(i), opts_.log_floor));
    return mel;
  }

  /// [C0..C(num_ceps-1), logE]. `raw_energy` is the un-windowed frame energy;
  /// when absent the energy of `windowed` itself is used.
  RowVector Compute(std::span<const double> windowed,
                    std::optional<double> raw_energy = std::nullopt) const {
    RowVector out(dim());
    out.head(opts_.num_ceps) = (dct_ * LogMelEnergies(windowed)).transpose();
    double energy = 0.0;
    if (raw_energy) {
      energy = *raw_energy;
    } else {
      for (double s : windowed) energy += s * s;
    }
    out(opts_.num_ceps) = std::log(std::max(energy, opts_.log_floor));
    return out;
  }

  /// Full clip -> T x 14 MFCC sequence. Clips at another rate are resampled.
  FeatureSequence Sequence(const AudioClip &input) const {
    const AudioClip clip =
        input.sample_rate == opts_.sample_rate ? input : Resample(input, opts_.sample_rate);
    const Matrix windowed = frame_signal(clip, opts_.frame_length_ms, opts_.frame_shift_ms);
    const int hop = SamplesForMs(opts_.frame_shift_ms, clip.sample_rate);
    FeatureSequence seq;
    seq.frame_length_ms = opts_.frame_length_ms;
    seq.frame_shift_ms = opts_.frame_shift_ms;
    seq.kind = FeatureKind::kMfcc14;
    seq.frames.resize(windowed.rows(), dim());
    for (Eigen::Index t = 0; t < windowed.rows(); ++t) {
      double energy = 0.0;
      const std::size_t start = static_cast<std::size_t>(t) * hop;
      for (Eigen::Index n = 0; n < windowed.cols(); ++n) {
        const double s = clip.samples[start + n];
        energy += s * s;
      }
      seq.frames.row(t) = Compute({windowed.row(t).data(), static_cast<std::size_t>(windowed.cols())},
                                  energy);
    }
    return seq;
  }

 private:
  MfccOptions opts_;
  int frame_samples_;
  MelFilterbank bank_;
  Matrix dct_;
};

inline RowVector compute_mfcc(std::span<const double> windowed, int sample_rate, int num_ceps = 13) {
  MfccOptions opts;
  opts.sample_rate = sample_rate;
  opts.num_ceps = num_ceps;
  return MfccComputer(opts).Compute(windowed);
}

/// Appends +-2 frame regression deltas and delta-deltas (D -> 3D).
inline FeatureSequence append_deltas(const FeatureSequence &seq) {
  const Eigen::Index rows = seq.num_frames(), dim = seq.dim();
  Require(rows >= 1, ErrorKind::kEmptyInput, "append_deltas needs at least one frame");
  auto regress = [rows](const Matrix &x) {
    Matrix d(x.rows(), x.cols());
    auto at = [&](Eigen::Index t) { return x.row(std::clamp<Eigen::Index>(t, 0, rows - 1)); };
    for (Eigen::Index t = 0; t < rows; ++t)
      d.row(t) = ((at(t + 1) - at(t - 1)) + 2.0 * (at(t + 2) - at(t - 2))) / 10.0;
    return d;
  };
  const Matrix delta = regress(seq.frames);
  const Matrix delta2 = regress(delta);
  FeatureSequence out = seq;
  out.kind = FeatureKind::kMfccDelta42;
  out.frames.resize(rows, 3 * dim);
  out.frames << seq.frames, delta, delta2;
  return out;
}

struct NormStats {
  Vector mean;
  Vector std;

  static constexpr double kStdFloor = 1e-6;
};

/// Pooled per-dimension mean and (population) standard deviation.
inline NormStats fit_norm_stats(std::span<const FeatureSequence> seqs) {
  Eigen::Index dim = -1, total = 0;
  for (const auto &s : seqs) {
    if (s.num_frames() == 0) continue;
    if (dim < 0) dim = s.dim();
    Require(s.dim() == dim, ErrorKind::kDimensionMismatch, "sequences differ in dimension");
    total += s.num_frames();
  }
  Require(total > 0, ErrorKind::kEmptyInput, "no frames to fit normalization statistics");
  NormStats stats;
  stats.mean = Vector::Zero(dim);
  for (const auto &s : seqs)
    if (s.num_frames() > 0) stats.mean += s.frames.colwise().sum().transpose();
  stats.mean /= static_cast<double>(total);
  Vector var = Vector::Zero(dim);
  for (const auto &s : seqs)
    if (s.num_frames() > 0)
      var += (s.frames.rowwise() - stats.mean.transpose()).array().square().colwise().sum().matrix().transpose();
  var /= static_cast<double>(total);
  stats.std = var.array().sqrt().max(NormStats::kStdFloor).matrix();
  return stats;
}

inline NormStats fit_norm_stats(const FeatureSequence &seq) {
  return fit_norm_stats(std::span<const FeatureSequence>(&seq, 1));
}

inline FeatureSequence apply_norm(const FeatureSequence &seq, const NormStats &stats) {
  Require(seq.dim() == stats.mean.size(), ErrorKind::kDimensionMismatch,
          "normalization statistics do not match feature dimension");
  FeatureSequence out = seq;
  out.frames = ((seq.frames.rowwise() - stats.mean.transpose()).array().rowwise() /
                stats.std.transpose().array())
                   .matrix();
  return out;
}

/// Row t becomes rows t-h..t+h (h = (width-1)/2) concatenated, with indices
/// clamped to the clip.
inline FeatureSequence stack_context(const FeatureSequence &seq, int width) {
  Require(width >= 1 && width % 2 == 1, ErrorKind::kConfig, "context width must be odd and positive");
  const Eigen::Index rows = seq.num_frames(), dim = seq.dim(), half = width / 2;
  FeatureSequence out = seq;
  out.kind = FeatureKind::kStacked;
  out.frames.resize(rows, dim * width);
  for (Eigen::Index t = 0; t < rows; ++t)
    for (Eigen::Index j = 0; j < width; ++j) {
      const Eigen::Index src = std::clamp<Eigen::Index>(t + j - half, 0, rows - 1);
      out.frames.block(t, j * dim, 1, dim) = seq.frames.row(src);
    }
  return out;
}

/// Per-band orthonormal DCT-II over the time trajectory inside each stacked
/// row, keeping the first `keep_per_band` coefficients. Output is band-major.
inline FeatureSequence temporal_dct_reduce(const FeatureSequence &stacked, int width, int keep_per_band) {
  Require(width >= 1 && keep_per_band >= 1 && keep_per_band <= width, ErrorKind::kConfig,
          "need 1 <= keep_per_band <= width");
  Require(stacked.dim() % width == 0, ErrorKind::kDimensionMismatch,
          "stacked dimension " + std::to_string(stacked.dim()) + " not divisible by width " +
              std::to_string(width));
  const Eigen::Index bands = stacked.dim() / width;
  const Matrix basis = DctMatrix(width).topRows(keep_per_band);
  FeatureSequence out = stacked;
  out.kind = FeatureKind::kDctReduced;
  out.frames.resize(stacked.num_frames(), bands * keep_per_band);
  Vector trajectory(width);
  for (Eigen::Index t = 0; t < stacked.num_frames(); ++t)
    for (Eigen::Index b = 0; b < bands; ++b) {
      for (Eigen::Index j = 0; j < width; ++j) trajectory(j) = stacked.frames(t, j * bands + b);
      out.frames.block(t, b * keep_per_band, 1, keep_per_band) = (basis * trajectory).transpose();
    }
  return out;
}

struct ContextConfig {
  int width = 49;
  bool dct_enabled = true;
  int dct_keep_per_band = 33;

  void Validate() const {
    Require(width >= 1 && width % 2 == 1, ErrorKind::kConfig, "context width must be odd");
    if (dct_enabled)
      Require(dct_keep_per_band >= 1 && dct_keep_per_band <= width, ErrorKind::kConfig,
              "dct_keep_per_band must be in [1, width]");
  }

  int OutputDim(int base_dim) const {
    return dct_enabled ? base_dim * dct_keep_per_band : base_dim * width;
  }
};

/// Stacking followed by the optional temporal DCT.
inline FeatureSequence build_context_input(const FeatureSequence &seq, const ContextConfig &cfg) {
  cfg.Validate();
  FeatureSequence stacked = stack_context(seq, cfg.width);
  if (!cfg.dct_enabled) return stacked;
  return temporal_dct_reduce(stacked, cfg.width, cfg.dct_keep_per_band);
}

// Feature cache: "ACFT", u32 version, u32 T, u32 D, u8 kind, f32 shift_ms,
// then T*D little-endian f32, row-major.
inline constexpr uint32_t kFeatureCacheVersion = 1;

inline void WriteFeatureCache(std::ostream &os, const FeatureSequence &seq) {
  io::WriteMagic(os, "ACFT");
  io::WritePod<uint32_t>(os, kFeatureCacheVersion);
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(seq.num_frames()));
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(seq.dim()));
  io::WritePod<uint8_t>(os, static_cast<uint8_t>(seq.kind));
  io::WritePod<float>(os, static_cast<float>(seq.frame_shift_ms));
  for (Eigen::Index t = 0; t < seq.num_frames(); ++t)
    for (Eigen::Index d = 0; d < seq.dim(); ++d)
      io::WritePod<float>(os, static_cast<float>(seq.frames(t, d)));
}

inline FeatureSequence ReadFeatureCache(std::istream &is) {
  io::ExpectMagic(is, "ACFT");
  const auto version = io::ReadPod<uint32_t>(is);
  Require(version == kFeatureCacheVersion, ErrorKind::kFormat,
          "unsupported feature cache version " + std::to_string(version));
  const auto rows = io::ReadPod<uint32_t>(is);
  const auto cols = io::ReadPod<uint32_t>(is);
  const auto kind = io::ReadPod<uint8_t>(is);
  Require(kind <= static_cast<uint8_t>(FeatureKind::kPosterior), ErrorKind::kFormat,
          "unknown feature kind");
  FeatureSequence seq;
  seq.kind = static_cast<FeatureKind>(kind);
  seq.frame_shift_ms = io::ReadPod<float>(is);
  seq.frames.resize(rows, cols);
  for (uint32_t t = 0; t < rows; ++t)
    for (uint32_t d = 0; d < cols; ++d) seq.frames(t, d) = io::ReadPod<float>(is);
  return seq;
}

inline void SaveFeatureCache(const std::filesystem::path &path, const FeatureSequence &seq) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  WriteFeatureCache(os, seq);
}

inline FeatureSequence LoadFeatureCache(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return ReadFeatureCache(is);
}

}  // namespace hdnn
