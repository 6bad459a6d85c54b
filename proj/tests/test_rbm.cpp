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

#include <gtest/gtest.h>

#include "hdnn/rbm.hpp"

namespace hdnn {
namespace {

Matrix TwoClusters(int n, uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  Matrix x(n, 2);
  for (int i = 0; i < n; ++i) {
    const double c = i % 2 ? 1.5 : -1.5;
    x(i, 0) = c + noise(rng);
    x(i, 1) = -c + noise(rng);
  }
  return x;
}

TEST(Cd1, ZeroLearningRateIsIdentity) {
  Rng rng(1);
  RbmModel rbm = RbmModel::Random(RbmKind::kGaussianBernoulli, 3, 4, rng);
  const RbmModel before = rbm;
  cd1_step(rbm, Matrix::Random(10, 3), 0.0, rng);
  EXPECT_TRUE(rbm == before);
}

TEST(Cd1, DimensionMismatchThrows) {
  Rng rng(1);
  RbmModel rbm = RbmModel::Random(RbmKind::kBernoulliBernoulli, 3, 2, rng);
  try {
    cd1_step(rbm, Matrix::Zero(4, 2), 0.1, rng);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimensionMismatch);
  }
}

// The update is lr * (positive - negative statistics) / B, recomputed here
// from the same Gibbs draw.
TEST(Cd1, UpdateMatchesStatistics) {
  Rng init(3);
  RbmModel rbm = RbmModel::Random(RbmKind::kBernoulliBernoulli, 3, 2, init);
  Matrix v(2, 3);
  v << 1, 0, 1, 0, 1, 1;
  const RbmModel before = rbm;
  Rng a(9), b(9);
  cd1_step(rbm, v, 0.5, a);

  const Matrix h0 = before.HiddenProbabilities(v);
  Matrix hs(2, 2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) hs(i, j) = u(b) < h0(i, j) ? 1.0 : 0.0;
  Matrix v1(2, 3);
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 3; ++k) {
      double z = before.visible_bias(k);
      for (int j = 0; j < 2; ++j) z += hs(i, j) * before.weights(j, k);
      v1(i, k) = 1.0 / (1.0 + std::exp(-z));
    }
  const Matrix h1 = before.HiddenProbabilities(v1);
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 3; ++k) {
      double pos = 0, neg = 0;
      for (int i = 0; i < 2; ++i) {
        pos += h0(i, j) * v(i, k);
        neg += h1(i, j) * v1(i, k);
      }
      EXPECT_NEAR(rbm.weights(j, k), before.weights(j, k) + 0.5 * (pos - neg) / 2.0, 1e-12);
    }
}

TEST(Cd1, NonFiniteInputThrows) {
  Rng rng(1);
  RbmModel rbm = RbmModel::Random(RbmKind::kGaussianBernoulli, 2, 2, rng);
  Matrix v(1, 2);
  v << std::numeric_limits<double>::infinity(), 0.0;
  try {
    cd1_step(rbm, v, 0.1, rng);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonFinite);
  }
}

TEST(Reconstruction, FixedPointHasZeroError) {
  RbmModel rbm;
  rbm.kind = RbmKind::kGaussianBernoulli;
  rbm.weights = Matrix::Zero(2, 3);
  rbm.visible_bias = Vector::Constant(3, 0.7);
  rbm.hidden_bias = Vector::Zero(2);
  EXPECT_DOUBLE_EQ(reconstruction_error(rbm, Matrix::Constant(4, 3, 0.7)), 0.0);
}

TEST(Reconstruction, SingleRowIsItsSquaredError) {
  Rng rng(2);
  const RbmModel rbm = RbmModel::Random(RbmKind::kGaussianBernoulli, 3, 2, rng);
  Matrix v(1, 3);
  v << 0.5, -1.0, 2.0;
  const Matrix r = rbm.VisibleMean(rbm.HiddenProbabilities(v));
  EXPECT_DOUBLE_EQ(reconstruction_error(rbm, v), (v - r).squaredNorm());
}

TEST(Pretrain, GaussianRbmLearnsTwoClusters) {
  const Matrix data = TwoClusters(2000, 4);
  Rng rng(5);
  RbmModel rbm = RbmModel::Random(RbmKind::kGaussianBernoulli, 2, 2, rng);
  const auto errors = TrainRbm(rbm, data, 0.005, 10, 16, 6, 2000);
  ASSERT_EQ(errors.size(), 11u);
  EXPECT_LT(errors.back(), errors.front());
}

TEST(Pretrain, Deterministic) {
  const Matrix data = TwoClusters(300, 1);
  PretrainConfig cfg;
  cfg.minibatch = 32;
  const auto a = pretrain_stack({4, 3}, data, cfg), b = pretrain_stack({4, 3}, data, cfg);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i].rbm == b[i].rbm);
}

TEST(Pretrain, EmptySpecGivesEmptyStack) { EXPECT_TRUE(pretrain_stack({}, TwoClusters(10, 1), {}).empty()); }

TEST(Pretrain, KindsAndShapesChain) {
  PretrainConfig cfg;
  cfg.gb_epochs = cfg.bb_epochs = 1;
  const auto stack = pretrain_stack({5, 4, 3}, TwoClusters(50, 2), cfg);
  ASSERT_EQ(stack.size(), 3u);
  EXPECT_EQ(stack[0].rbm.kind, RbmKind::kGaussianBernoulli);
  EXPECT_EQ(stack[1].rbm.kind, RbmKind::kBernoulliBernoulli);
  EXPECT_EQ(stack[0].rbm.weights.rows(), 5);
  EXPECT_EQ(stack[0].rbm.weights.cols(), 2);
  EXPECT_EQ(stack[2].rbm.weights.rows(), 3);
  EXPECT_EQ(stack[2].rbm.weights.cols(), 4);
  const MlpModel m = MlpFromPretrained(stack, 2, 6, 1);
  EXPECT_NO_THROW(m.Validate());
  EXPECT_TRUE(m.layers[1].weights == stack[1].rbm.weights);
  EXPECT_TRUE(m.layers[2].bias == stack[2].rbm.hidden_bias);
  EXPECT_EQ(m.output_dim(), 6);
}

TEST(Pretrain, DefaultShapes) {
  Rng rng(1);
  const RbmModel first = RbmModel::Random(RbmKind::kGaussianBernoulli, 462, 2000, rng);
  EXPECT_EQ(first.weights.rows(), 2000);
  EXPECT_EQ(first.weights.cols(), 462);
}

TEST(Pretrain, InvalidConfigRejected) {
  PretrainConfig cfg;
  cfg.gb_epochs = 0;
  EXPECT_THROW(pretrain_stack({3}, TwoClusters(10, 1), cfg), Error);
}

}  // namespace
}  // namespace hdnn
