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

// Frame accuracy, per-concept reports, and the context-window and
// architecture sweep drivers.

#pragma once

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hdnn/common.hpp"
#include "hdnn/features.hpp"

namespace hdnn {

/// 100 * matches / length.
inline double frame_accuracy(const Labels &predicted, const Labels &truth) {
  Require(predicted.size() == truth.size(), ErrorKind::kLengthMismatch,
          "predicted has " + std::to_string(predicted.size()) + " frames, truth has " +
              std::to_string(truth.size()));
  Require(!truth.empty(), ErrorKind::kEmptyInput, "frame_accuracy of an empty sequence");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(truth.size());
}

struct EvalReport {
  double overall_fa = 0.0;
  std::map<std::string, double> per_concept_fa;
  std::map<std::string, long> frame_counts;
  std::map<std::string, long> correct_counts;
  std::string config_fingerprint;

  long total_frames() const {
    long n = 0;
    for (const auto &[_, c] : frame_counts) n += c;
    return n;
  }
};

/// Maps one clip's features to a label per frame.
using Classifier = std::function<Labels(const FeatureSequence &)>;

/// Frame accuracy overall and per concept. The ground truth of every frame
/// is its clip's label.
inline EvalReport evaluate(const Classifier &system, std::span<const LabeledClip> test_set,
                           const std::vector<std::string> &label_names, int threads = 1) {
  Require(!test_set.empty(), ErrorKind::kEmptyInput, "empty test set");
  std::vector<Labels> predictions(test_set.size());
  ParallelFor(test_set.size(), threads, [&](std::size_t i) { predictions[i] = system(test_set[i].features); });
  EvalReport report;
  long total = 0, correct = 0;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const auto &clip = test_set[i];
    Require(static_cast<Eigen::Index>(predictions[i].size()) == clip.features.num_frames(),
            ErrorKind::kLengthMismatch, "classifier changed the frame count of " + clip.id);
    Require(clip.label >= 0 && clip.label < static_cast<int>(label_names.size()), ErrorKind::kLabelOutOfRange,
            "clip label out of range");
    const std::string &name = label_names[static_cast<std::size_t>(clip.label)];
    long hits = 0;
    for (int p : predictions[i]) hits += p == clip.label;
    report.frame_counts[name] += static_cast<long>(predictions[i].size());
    report.correct_counts[name] += hits;
    total += static_cast<long>(predictions[i].size());
    correct += hits;
  }
  Require(total > 0, ErrorKind::kEmptyInput, "test set has no frames");
  for (const auto &[name, n] : report.frame_counts)
    report.per_concept_fa[name] = 100.0 * static_cast<double>(report.correct_counts[name]) / static_cast<double>(n);
  report.overall_fa = 100.0 * static_cast<double>(correct) / static_cast<double>(total);
  return report;
}

/// Returns each clip's own label on every frame. Clips are recognized by the
/// address of their features, so it must be evaluated on `clips` itself.
inline Classifier OracleClassifier(std::span<const LabeledClip> clips) {
  std::map<const FeatureSequence *, int> truth;
  for (const auto &c : clips) truth[&c.features] = c.label;
  return [truth](const FeatureSequence &seq) {
    const auto it = truth.find(&seq);
    Require(it != truth.end(), ErrorKind::kConfig, "oracle asked about an unknown clip");
    return Labels(static_cast<std::size_t>(seq.num_frames()), it->second);
  };
}

inline void WriteReportCsv(std::ostream &os, const EvalReport &report) {
  os << "concept,frames,correct,fa\n";
  char buf[32];
  for (const auto &[name, n] : report.frame_counts) {
    std::snprintf(buf, sizeof(buf), "%.4f", report.per_concept_fa.at(name));
    os << name << ',' << n << ',' << report.correct_counts.at(name) << ',' << buf << '\n';
  }
  std::snprintf(buf, sizeof(buf), "%.4f", report.overall_fa);
  os << "overall," << report.total_frames() << ',';
  long correct = 0;
  for (const auto &[_, c] : report.correct_counts) correct += c;
  os << correct << ',' << buf << '\n';
}

inline void PrintReport(std::ostream &os, const EvalReport &report, const std::string &title) {
  char buf[128];
  os << title << "\n";
  if (!report.config_fingerprint.empty()) os << "  config " << report.config_fingerprint << "\n";
  for (const auto &[name, fa] : report.per_concept_fa) {
    std::snprintf(buf, sizeof(buf), "  %-20s %8ld frames  F.A. %6.2f%%\n", name.c_str(), report.frame_counts.at(name), fa);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "  %-20s %8ld frames  F.A. %6.2f%%\n", "overall", report.total_frames(),
                report.overall_fa);
  os << buf;
}

struct SweepRow {
  int width = 0;
  double fa = 0.0;
};

/// Builds a trained system for a context width.
using WidthFactory = std::function<Classifier(int width)>;

/// Trains and evaluates one system per width. Cells may run in parallel;
/// each factory call must derive its seeds from the width alone.
inline std::vector<SweepRow> context_sweep(const std::vector<int> &widths, const WidthFactory &factory,
                                           std::span<const LabeledClip> test_set,
                                           const std::vector<std::string> &label_names, int threads = 1) {
  for (int w : widths) Require(w >= 1 && w % 2 == 1, ErrorKind::kConfig, "sweep widths must be odd");
  std::vector<SweepRow> rows(widths.size());
  ParallelFor(widths.size(), threads, [&](std::size_t i) {
    const Classifier system = factory(widths[i]);
    rows[i] = {widths[i], evaluate(system, test_set, label_names).overall_fa};
  });
  return rows;
}

inline void WriteSweepCsv(std::ostream &os, const std::vector<SweepRow> &rows) {
  os << "width,fa\n";
  char buf[32];
  for (const auto &r : rows) {
    std::snprintf(buf, sizeof(buf), "%.4f", r.fa);
    os << r.width << ',' << buf << '\n';
  }
}

struct GridCell {
  int depth = 0;
  int width = 0;
  bool pretrain = false;
  double fa = 0.0;
};

using ArchitectureFactory = std::function<Classifier(int depth, int width, bool pretrain)>;

/// Depth x width x {random, RBM} grid. Cell order is depth-major, then
/// width, then random before pre-trained.
inline std::vector<GridCell> architecture_grid(const std::vector<int> &depths, const std::vector<int> &widths,
                                               const std::vector<bool> &pretrain, const ArchitectureFactory &factory,
                                               std::span<const LabeledClip> test_set,
                                               const std::vector<std::string> &label_names, int threads = 1) {
  Require(!depths.empty() && !widths.empty() && !pretrain.empty(), ErrorKind::kConfig, "empty architecture grid");
  for (int d : depths) Require(d >= 1, ErrorKind::kConfig, "grid depths must be positive");
  for (int w : widths) Require(w >= 1, ErrorKind::kConfig, "grid widths must be positive");
  std::vector<GridCell> cells;
  for (int d : depths)
    for (int w : widths)
      for (bool p : pretrain) cells.push_back({d, w, p, 0.0});
  ParallelFor(cells.size(), threads, [&](std::size_t i) {
    auto &c = cells[i];
    c.fa = evaluate(factory(c.depth, c.width, c.pretrain), test_set, label_names).overall_fa;
  });
  return cells;
}

/// One row per depth, columns `<width>_RND` / `<width>_RBM`.
inline void WriteGridCsv(std::ostream &os, const std::vector<GridCell> &cells) {
  std::vector<int> depths, widths;
  std::vector<bool> modes;
  for (const auto &c : cells) {
    if (std::find(depths.begin(), depths.end(), c.depth) == depths.end()) depths.push_back(c.depth);
    if (std::find(widths.begin(), widths.end(), c.width) == widths.end()) widths.push_back(c.width);
    if (std::find(modes.begin(), modes.end(), c.pretrain) == modes.end()) modes.push_back(c.pretrain);
  }
  os << "layers";
  for (int w : widths)
    for (bool p : modes) os << ',' << w << (p ? "_RBM" : "_RND");
  os << '\n';
  char buf[32];
  for (int d : depths) {
    os << d;
    for (int w : widths)
      for (bool p : modes) {
        for (const auto &c : cells)
          if (c.depth == d && c.width == w && c.pretrain == p) {
            std::snprintf(buf, sizeof(buf), "%.4f", c.fa);
            os << ',' << buf;
          }
      }
    os << '\n';
  }
}

}  // namespace hdnn
