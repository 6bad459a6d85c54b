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


#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "hdnn/hierarchy.hpp"

namespace hdnn {
namespace {

Matrix Gaussian(Eigen::Index rows, Eigen::Index cols, uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

FeatureSequence Seq(const Matrix &m) {
  FeatureSequence s;
  s.frames = m;
  return s;
}

TEST(SparseStack, OffsetZeroIsIdentity) {
  const Matrix p = Gaussian(9, 3, 1);
  EXPECT_TRUE(sparse_stack(p, {{0}}) == p);
}

TEST(SparseStack, SingleFrameFullyClamped) {
  const Matrix p = Gaussian(1, 4, 2);
  EXPECT_TRUE(sparse_stack(p, {}) == p.replicate(1, 5));
}

TEST(SparseStack, IndexArithmetic) {
  const Matrix p = Gaussian(25, 2, 3);
  const Matrix s = sparse_stack(p, {});
  Matrix expected(1, 10);
  expected << p.row(2), p.row(7), p.row(12), p.row(17), p.row(22);
  EXPECT_TRUE(s.row(12) == expected);
  // Edges clamp.
  Matrix first(1, 10);
  first << p.row(0), p.row(0), p.row(0), p.row(5), p.row(10);
  EXPECT_TRUE(s.row(0) == first);
}

TEST(SparseStack, WidthIsOffsetsTimesClasses) {
  for (int t : {1, 4, 30}) EXPECT_EQ(sparse_stack(Gaussian(t, 40, 1), {}).cols(), 200);
}

TEST(SparseConfig, Validation) {
  EXPECT_THROW(SparseContextConfig({{-5, 5}}).Validate(), Error);
  EXPECT_THROW(SparseContextConfig({{0, -5}}).Validate(), Error);
  EXPECT_THROW(SparseContextConfig({{}}).Validate(), Error);
  EXPECT_NO_THROW(SparseContextConfig({{-3, 0, 1}}).Validate());
}

TEST(Posteriorgram, ZeroStageIsUniform) {
  const MlpModel m = ZeroModel(ArchitectureSpecs(6, {4}, 5));
  const FeatureSequence p = posteriorgram(m, Seq(Gaussian(7, 6, 2)));
  EXPECT_EQ(p.kind, FeatureKind::kPosterior);
  EXPECT_TRUE(((p.frames.array() - 0.2).abs() < 1e-15).all());
}

TEST(Posteriorgram, SingleFrameAndRowWiseForward) {
  const MlpModel m = RandomModel(ArchitectureSpecs(6, {4}, 3), 4);
  const Matrix x = Gaussian(5, 6, 5);
  const FeatureSequence p = posteriorgram(m, Seq(x));
  for (Eigen::Index t = 0; t < 5; ++t) {
    const Matrix row = forward(m, x.row(t)).back();
    EXPECT_LT((row - p.frames.row(t)).cwiseAbs().maxCoeff(), 1e-15);
  }
  EXPECT_EQ(posteriorgram(m, Seq(x.topRows(1))).frames.rows(), 1);
}

CascadeModel RandomCascade(uint64_t seed, int in = 6, int c = 4) {
  CascadeModel cm;
  cm.first_stage = RandomModel(ArchitectureSpecs(in, {5}, c), seed);
  cm.second_stage = RandomModel(ArchitectureSpecs(5 * c, {7}, c), seed + 1);
  return cm;
}

TEST(Classify, ZeroStagesGiveLabelZero) {
  CascadeModel cm;
  cm.first_stage = ZeroModel(ArchitectureSpecs(3, {2}, 4));
  cm.second_stage = ZeroModel(ArchitectureSpecs(20, {2}, 4));
  for (int y : classify(cm, Seq(Gaussian(8, 3, 1)))) EXPECT_EQ(y, 0);
}

TEST(Classify, EqualsComposedStages) {
  const CascadeModel cm = RandomCascade(7);
  const Matrix x = Gaussian(1000, 6, 8) * 3.0;
  const Matrix post = forward(cm.first_stage, x).back();
  Matrix stacked(1000, 20);
  const int offs[] = {-10, -5, 0, 5, 10};
  for (int t = 0; t < 1000; ++t)
    for (int j = 0; j < 5; ++j) stacked.block(t, j * 4, 1, 4) = post.row(std::clamp(t + offs[j], 0, 999));
  EXPECT_EQ(classify(cm, Seq(x)), predict_frames(cm.second_stage, stacked));
}

TEST(Classify, PreservesLengthAndNormalizes) {
  const CascadeModel cm = RandomCascade(3);
  Rng rng(1);
  std::uniform_int_distribution<int> len(1, 100);
  for (int trial = 0; trial < 20; ++trial) {
    const int t = len(rng);
    const FeatureSequence s = Seq(Gaussian(t, 6, static_cast<uint64_t>(trial)));
    EXPECT_EQ(static_cast<int>(classify(cm, s).size()), t);
    const Matrix p = CascadePosteriors(cm, s);
    for (Eigen::Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-6);
  }
}

TEST(Classify, MismatchedInputThrows) {
  const CascadeModel cm = RandomCascade(3);
  EXPECT_THROW(classify(cm, Seq(Gaussian(4, 5, 1))), Error);
}

TEST(Cascade, DefaultSecondStageDimension) {
  CascadeModel cm;
  cm.first_stage = ZeroModel(ArchitectureSpecs(462, {8}, 40));
  cm.second_stage = ZeroModel(ArchitectureSpecs(200, {8}, 40));
  EXPECT_NO_THROW(cm.Validate());
  cm.second_stage = ZeroModel(ArchitectureSpecs(199, {8}, 40));
  EXPECT_THROW(cm.Validate(), Error);
}

// Two classes of pulse trains whose single frames look alike: the pulse
// frame is the same, only the period (12 vs 20 frames) differs.
std::vector<LabeledClip> PulseClips(int per_class, uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::uniform_int_distribution<int> phase(0, 19);
  std::vector<LabeledClip> clips;
  for (int i = 0; i < 2 * per_class; ++i) {
    const int label = i % 2, period = label ? 20 : 12, ph = phase(rng);
    Matrix f(120, 2);
    for (int t = 0; t < 120; ++t) {
      const double pulse = (t + ph) % period < 3 ? 1.0 : 0.0;
      f(t, 0) = pulse + noise(rng);
      f(t, 1) = noise(rng);
    }
    clips.push_back({Seq(f), label, std::to_string(i)});
  }
  return clips;
}

// Two classes whose frames differ only by a weak mean shift: one frame
// separates them about 69% of the time, five independent frames about 87%.
std::vector<LabeledClip> NoisyClips(int per_class, uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<LabeledClip> clips;
  for (int i = 0; i < 2 * per_class; ++i) {
    const int label = i % 2;
    Matrix f(120, 2);
    for (int t = 0; t < 120; ++t) {
      f(t, 0) = (label ? 0.5 : -0.5) + noise(rng);
      f(t, 1) = noise(rng);
    }
    clips.push_back({Seq(f), label, std::to_string(i)});
  }
  return clips;
}

double Accuracy(const std::function<Labels(const FeatureSequence &)> &fn, const std::vector<LabeledClip> &clips) {
  long hits = 0, total = 0;
  for (const auto &c : clips)
    for (int y : fn(c.features)) {
      hits += y == c.label;
      ++total;
    }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

CascadeConfig SmallCascade() {
  CascadeConfig cfg;
  cfg.first = {{8}, false, {}, {}};
  cfg.second = {{8}, false, {}, {}};
  cfg.first.schedule.minibatch_frames = cfg.second.schedule.minibatch_frames = 32;
  cfg.first.schedule.initial_lr = cfg.second.schedule.initial_lr = 0.01;
  return cfg;
}

TEST(TrainCascade, LongContextBeatsFirstStage) {
  const auto train_clips = NoisyClips(30, 1), test_clips = NoisyClips(10, 2);
  const CascadeTrainResult r = train_cascade(train_clips, 2, SmallCascade());
  const double first = Accuracy([&](const FeatureSequence &s) { return predict_frames(r.model.first_stage, s.frames); },
                                test_clips);
  const double cascade = Accuracy([&](const FeatureSequence &s) { return classify(r.model, s); }, test_clips);
  EXPECT_LT(first, 75.0);
  EXPECT_GE(cascade, first + 8.0);
  EXPECT_GT(cascade, 80.0);
}

TEST(TrainCascade, DeterministicAndFrozen) {
  const auto clips = PulseClips(8, 3);
  CascadeConfig cfg = SmallCascade();
  cfg.first.schedule.max_epochs = cfg.second.schedule.max_epochs = 3;
  const CascadeTrainResult a = train_cascade(clips, 2, cfg), b = train_cascade(clips, 2, cfg);
  EXPECT_TRUE(a.model == b.model);
  // Stage 1 of the cascade is the network trained in phase one, untouched.
  EXPECT_TRUE(a.model.first_stage == a.first.model);
  std::stringstream sa, sb;
  WriteCascade(sa, a.model);
  WriteCascade(sb, b.model);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(CascadeFile, RoundTrip) {
  const CascadeModel cm = RandomCascade(5);
  std::stringstream buf;
  WriteCascade(buf, cm);
  EXPECT_EQ(buf.str().substr(0, 4), "ACHD");
  EXPECT_TRUE(ReadCascade(buf) == cm);
}

TEST(CascadeFile, WrongMagicRejected) {
  std::stringstream buf;
  WriteMlp(buf, RandomModel(ArchitectureSpecs(2, {}, 2), 1));
  EXPECT_THROW(ReadCascade(buf), Error);
}

}  // namespace
}  // namespace hdnn
