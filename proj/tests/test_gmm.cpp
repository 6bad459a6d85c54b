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


#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "hdnn/gmm.hpp"

namespace hdnn {
namespace {

Matrix Gaussian(Eigen::Index n, Eigen::Index d, double mean, double sd, Rng &rng) {
  std::normal_distribution<double> g(mean, sd);
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

DiagGmm RandomGmm(Eigen::Index k, Eigen::Index d, Rng &rng) {
  std::uniform_real_distribution<double> u(0.2, 2.0);
  DiagGmm g{Vector(k), Gaussian(k, d, 0.0, 2.0, rng), Matrix(k, d)};
  for (Eigen::Index i = 0; i < k; ++i) g.weights(i) = u(rng);
  g.weights /= g.weights.sum();
  for (Eigen::Index i = 0; i < g.variances.size(); ++i) g.variances.data()[i] = u(rng);
  return g;
}

/// Direct evaluation of log sum_k w_k prod_d N(x_d | mu_kd, var_kd).
double BruteLogDensity(const DiagGmm &g, const RowVector &x) {
  std::vector<double> terms;
  for (Eigen::Index k = 0; k < g.num_components(); ++k) {
    double lp = std::log(g.weights(k));
    for (Eigen::Index d = 0; d < x.size(); ++d) {
      const double v = g.variances(k, d), diff = x(d) - g.means(k, d);
      lp += -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * diff * diff / v;
    }
    terms.push_back(lp);
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

TEST(DiagGmmTest, LogDensityMatchesBruteForce) {
  Rng rng(3);
  const DiagGmm g = RandomGmm(5, 4, rng);
  const Matrix x = Gaussian(50, 4, 0.0, 2.0, rng);
  const Vector ld = g.LogDensities(x);
  for (Eigen::Index n = 0; n < x.rows(); ++n) EXPECT_NEAR(ld(n), BruteLogDensity(g, x.row(n)), 1e-9);
}

TEST(DiagGmmTest, SingleStandardNormal) {
  DiagGmm g{Vector::Ones(1), Matrix::Zero(1, 2), Matrix::Ones(1, 2)};
  RowVector x(2);
  x << 0.0, 0.0;
  EXPECT_NEAR(g.LogDensity(x), -std::log(2.0 * std::numbers::pi), 1e-12);
}

TEST(DiagGmmTest, ValidateRejectsBadShapes) {
  DiagGmm g{Vector::Ones(2) / 2.0, Matrix::Zero(2, 3), Matrix::Ones(2, 3)};
  EXPECT_NO_THROW(g.Validate());
  g.variances(1, 2) = 0.0;
  EXPECT_THROW(g.Validate(), Error);
  g.variances = Matrix::Ones(3, 3);
  EXPECT_THROW(g.Validate(), Error);
  EXPECT_THROW(g.LogDensities(Matrix::Zero(2, 4)), Error);
}

TEST(EmTest, LikelihoodNeverDecreases) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(seed % 5);
    Matrix data(600, d);
    data.topRows(300) = Gaussian(300, d, -2.0, 0.7, rng);
    data.bottomRows(300) = Gaussian(300, d, 1.5, 1.2, rng);
    const DiagGmm init = RandomGmm(4, d, rng);
    const EmResult r = em_train(init, data, 15);
    ASSERT_EQ(r.log_likelihoods.size(), 16u);
    for (std::size_t i = 1; i < r.log_likelihoods.size(); ++i)
      EXPECT_GE(r.log_likelihoods[i], r.log_likelihoods[i - 1] - 1e-6) << "seed " << seed << " iter " << i;
  }
}

TEST(EmTest, ReportedLikelihoodMatchesDensity) {
  Rng rng(11);
  const Matrix data = Gaussian(200, 3, 0.0, 1.0, rng);
  const EmResult r = em_train(RandomGmm(3, 3, rng), data, 4);
  EXPECT_NEAR(r.log_likelihoods.back(), r.gmm.LogDensities(data).sum(), 1e-8);
}

TEST(EmTest, ZeroIterationsReturnsInit) {
  Rng rng(2);
  const DiagGmm init = RandomGmm(2, 2, rng);
  const EmResult r = em_train(init, Gaussian(10, 2, 0.0, 1.0, rng), 0);
  EXPECT_EQ(r.gmm, init);
  EXPECT_TRUE(r.log_likelihoods.empty());
}

TEST(EmTest, OneComponentConvergesToSampleMoments) {
  Rng rng(5);
  const Matrix data = Gaussian(1000, 2, 3.0, 2.0, rng);
  DiagGmm init{Vector::Ones(1), Matrix::Zero(1, 2), Matrix::Ones(1, 2)};
  const EmResult r = em_train(init, data, 1);
  const RowVector mean = data.colwise().mean();
  const RowVector var = (data.rowwise() - mean).array().square().colwise().mean();
  EXPECT_LT((r.gmm.means.row(0) - mean).norm(), 1e-10);
  EXPECT_LT((r.gmm.variances.row(0) - var).norm(), 1e-9);
}

TEST(EmTest, FarAwayComponentIsResetNotNan) {
  Rng rng(8);
  const Matrix data = Gaussian(100, 2, 0.0, 1.0, rng);
  DiagGmm init{Vector::Constant(2, 0.5), Matrix::Zero(2, 2), Matrix::Ones(2, 2)};
  init.means.row(1).setConstant(1e4);
  const EmResult r = em_train(init, data, 2);
  EXPECT_GE(r.degenerate_resets, 1);
  EXPECT_TRUE(r.gmm.means.allFinite());
  EXPECT_TRUE(r.gmm.variances.allFinite());
}

TEST(EmTest, VarianceFloorHolds) {
  Matrix data = Matrix::Zero(50, 2);
  data.col(1) = Vector::LinSpaced(50, 0.0, 1.0);
  EmOptions opts;
  opts.variance_floor = Vector::Constant(2, 0.25);
  DiagGmm init{Vector::Ones(1), Matrix::Zero(1, 2), Matrix::Ones(1, 2)};
  const EmResult r = em_train(init, data, 3, opts);
  EXPECT_GE(r.gmm.variances.minCoeff(), 0.25);
}

TEST(EmTest, NonFiniteDataThrows) {
  Matrix data = Matrix::Zero(4, 1);
  data(2, 0) = std::nan("");
  DiagGmm init{Vector::Ones(1), Matrix::Zero(1, 1), Matrix::Ones(1, 1)};
  try {
    em_train(init, data, 1);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonFinite);
  }
}

TEST(KMeansTest, FindsSeparatedClusters) {
  Rng rng(4);
  Matrix data(300, 2);
  data.topRows(100) = Gaussian(100, 2, -10.0, 0.5, rng);
  data.middleRows(100, 100) = Gaussian(100, 2, 0.0, 0.5, rng);
  data.bottomRows(100) = Gaussian(100, 2, 10.0, 0.5, rng);
  Matrix centers = KMeansPlusPlus(data, 3, rng);
  std::vector<double> xs;
  for (int c = 0; c < 3; ++c) xs.push_back(centers(c, 0));
  std::sort(xs.begin(), xs.end());
  EXPECT_NEAR(xs[0], -10.0, 0.3);
  EXPECT_NEAR(xs[1], 0.0, 0.3);
  EXPECT_NEAR(xs[2], 10.0, 0.3);
}

TEST(KMeansTest, TooFewRowsThrows) {
  Rng rng(1);
  EXPECT_THROW(KMeansPlusPlus(Matrix::Zero(3, 2), 4, rng), Error);
}

TEST(UbmTest, BeatsSingleGaussian) {
  Rng rng(6);
  Matrix data(800, 3);
  for (int c = 0; c < 4; ++c) data.middleRows(200 * c, 200) = Gaussian(200, 3, 4.0 * c, 0.5, rng);
  GmmTrainConfig cfg;
  cfg.components = 8;
  cfg.iterations = 10;
  const EmResult ubm = train_ubm(data, cfg);
  const EmResult single = em_train(DiagGmm{Vector::Ones(1), Matrix::Zero(1, 3), Matrix::Ones(1, 3)}, data, 1);
  EXPECT_GT(ubm.log_likelihoods.back(), single.log_likelihoods.back());
  EXPECT_NEAR(ubm.gmm.weights.sum(), 1.0, 1e-12);
}

TEST(UbmTest, DeterministicForSeed) {
  Rng rng(6);
  const Matrix data = Gaussian(500, 2, 0.0, 1.0, rng);
  GmmTrainConfig cfg;
  cfg.components = 4;
  cfg.iterations = 5;
  cfg.kmeans_subsample = 200;
  EXPECT_EQ(train_ubm(data, cfg).gmm, train_ubm(data, cfg).gmm);
  GmmTrainConfig other = cfg;
  other.seed = 2;
  EXPECT_FALSE(train_ubm(data, cfg).gmm == train_ubm(data, other).gmm);
}

TEST(AdaptTest, ShiftedConceptMovesMeansAndScoresPositive) {
  Rng rng(9);
  const Matrix background = Gaussian(1000, 2, 0.0, 1.0, rng);
  GmmTrainConfig cfg;
  cfg.components = 4;
  cfg.iterations = 10;
  const DiagGmm ubm = train_ubm(background, cfg).gmm;
  const Matrix concept_train = Gaussian(400, 2, 1.5, 1.0, rng);
  const Matrix concept_test = Gaussian(200, 2, 1.5, 1.0, rng);
  const AdaptResult a = adapt_concept(ubm, concept_train, 5, DefaultVarianceFloor(background));
  EXPECT_FALSE(a.means_only);
  const RowVector ubm_mean = ubm.weights.transpose() * ubm.means;
  const RowVector adapted_mean = a.em.gmm.weights.transpose() * a.em.gmm.means;
  EXPECT_GT(adapted_mean(0), ubm_mean(0) + 1.0);
  double llr = 0.0;
  for (Eigen::Index n = 0; n < concept_test.rows(); ++n) llr += llr_score(a.em.gmm, ubm, concept_test.row(n));
  EXPECT_GT(llr / static_cast<double>(concept_test.rows()), 0.0);
}

TEST(AdaptTest, FewFramesUpdateMeansOnly) {
  Rng rng(10);
  GmmTrainConfig cfg;
  cfg.components = 8;
  cfg.iterations = 3;
  const DiagGmm ubm = train_ubm(Gaussian(400, 2, 0.0, 1.0, rng), cfg).gmm;
  const AdaptResult a = adapt_concept(ubm, Gaussian(5, 2, 1.0, 1.0, rng), 3, Vector::Constant(2, 1e-3));
  EXPECT_TRUE(a.means_only);
  EXPECT_EQ(a.em.gmm.weights, ubm.weights);
  EXPECT_EQ(a.em.gmm.variances, ubm.variances);
  EXPECT_FALSE(a.em.gmm.means == ubm.means);
}

LabeledClip Clip(const Matrix &frames, int label) {
  LabeledClip c;
  c.features.frames = frames;
  c.label = label;
  return c;
}

GmmConceptBank SmallBank(Rng &rng) {
  std::vector<LabeledClip> clips;
  for (int i = 0; i < 3; ++i) {
    clips.push_back(Clip(Gaussian(100, 3, -2.0, 1.0, rng), 0));
    clips.push_back(Clip(Gaussian(100, 3, 0.0, 1.0, rng), 1));
    clips.push_back(Clip(Gaussian(100, 3, 2.0, 1.0, rng), 2));
  }
  GmmTrainConfig cfg;
  cfg.components = 4;
  cfg.iterations = 5;
  return train_concept_bank(clips, {"a", "b", "c"}, cfg).bank;
}

TEST(BankTest, ClassifyMatchesBruteForceArgmax) {
  Rng rng(12);
  const GmmConceptBank bank = SmallBank(rng);
  const Matrix frames = Gaussian(1000, 3, 0.0, 2.5, rng);
  const Labels got = bank.Classify(frames);
  for (Eigen::Index n = 0; n < frames.rows(); ++n) {
    const RowVector x = frames.row(n);
    const double bg = BruteLogDensity(bank.ubm, x);
    int best = 0;
    double best_score = -1e300;
    for (std::size_t c = 0; c < bank.concepts.size(); ++c) {
      const double s = BruteLogDensity(bank.concepts[c], x) - bg;
      if (s > best_score) {
        best_score = s;
        best = static_cast<int>(c);
      }
    }
    ASSERT_EQ(got[static_cast<std::size_t>(n)], best) << "frame " << n;
    EXPECT_EQ(classify_frame(bank, x), best);
  }
}

TEST(BankTest, SeparatesShiftedConcepts) {
  Rng rng(13);
  const GmmConceptBank bank = SmallBank(rng);
  int hits = 0;
  for (int c = 0; c < 3; ++c) {
    const Labels l = bank.Classify(Gaussian(100, 3, -2.0 + 2.0 * c, 1.0, rng));
    hits += static_cast<int>(std::count(l.begin(), l.end(), c));
  }
  EXPECT_GT(hits, 200);
}

TEST(BankTest, SerializationRoundTrip) {
  Rng rng(14);
  const GmmConceptBank bank = SmallBank(rng);
  std::stringstream ss;
  WriteBank(ss, bank);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "ACGM");
  EXPECT_EQ(ReadBank(ss), bank);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 9));
  EXPECT_THROW(ReadBank(truncated), Error);
}

TEST(BankTest, MissingConceptFramesThrow) {
  Rng rng(15);
  std::vector<LabeledClip> clips{Clip(Gaussian(50, 2, 0.0, 1.0, rng), 0)};
  GmmTrainConfig cfg;
  cfg.components = 2;
  cfg.iterations = 2;
  EXPECT_THROW(train_concept_bank(clips, {"a", "b"}, cfg), Error);
}

}  // namespace
}  // namespace hdnn
