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


#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "hdnn/config.hpp"

namespace hdnn {
namespace {

namespace fs = std::filesystem;

fs::path WriteConfig(const std::string &name, const std::string &body) {
  const fs::path dir = fs::temp_directory_path() / "hdnn_config_test";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << body;
  return p;
}

ErrorKind KindOf(const std::function<void()> &fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kIo;
}

TEST(ConfigTest, DefaultsMatchReferenceRecipe) {
  const RunConfig rc = ResolveConfig(DefaultConfigJson());
  EXPECT_DOUBLE_EQ(rc.schedule.initial_lr, 0.002);
  EXPECT_DOUBLE_EQ(rc.schedule.ramp_improvement_threshold, 0.5);
  EXPECT_DOUBLE_EQ(rc.schedule.stop_improvement_threshold, 0.1);
  EXPECT_EQ(rc.schedule.minibatch_frames, 1024);
  EXPECT_DOUBLE_EQ(rc.schedule.cv_fraction, 0.1);
  EXPECT_EQ(rc.hdnn_front_end.context.width, 49);
  EXPECT_TRUE(rc.hdnn_front_end.context.dct_enabled);
  EXPECT_EQ(rc.hdnn_front_end.context.dct_keep_per_band, 33);
  EXPECT_EQ(rc.cascade.first.hidden, (std::vector<int>{2000, 2000, 2000}));
  EXPECT_TRUE(rc.cascade.first.pretrain);
  EXPECT_EQ(rc.cascade.second.hidden, (std::vector<int>{1000, 1000}));
  EXPECT_EQ(rc.cascade.sparse.offsets, (std::vector<int>{-10, -5, 0, 5, 10}));
  EXPECT_EQ(rc.gmm.components, 256);
  EXPECT_DOUBLE_EQ(rc.pretrain.gb_lr, 0.005);
  EXPECT_EQ(rc.pretrain.gb_epochs, 10);
  EXPECT_EQ(rc.nn_front_end.context.width, 9);
  EXPECT_EQ(rc.nn.hidden, std::vector<int>{1000});
}

TEST(ConfigTest, FileThenOverrides) {
  const auto p = WriteConfig("a.json", R"({"seed": 7, "nn": {"hidden": [20, 10]}, "schedule": {"initial_lr": 0.01}})");
  const RunConfig rc = LoadRunConfig(p, {"schedule.initial_lr=0.004", "corpus.dir=/tmp/x", "sweep.widths=[1,3]"});
  EXPECT_EQ(rc.seed, 7u);
  EXPECT_EQ(rc.nn.hidden, (std::vector<int>{20, 10}));
  EXPECT_DOUBLE_EQ(rc.schedule.initial_lr, 0.004);
  EXPECT_DOUBLE_EQ(rc.nn.schedule.initial_lr, 0.004);
  EXPECT_EQ(rc.corpus_dir, fs::path("/tmp/x"));
  EXPECT_EQ(rc.annotations, fs::path("/tmp/x/annotations.csv"));
  EXPECT_EQ(rc.sweep_widths, (std::vector<int>{1, 3}));
}

TEST(ConfigTest, IntegerAcceptedForFloatKey) {
  EXPECT_DOUBLE_EQ(LoadRunConfig({}, {"synth.noise_db=20"}).synth.noise_db, 20.0);
}

TEST(ConfigTest, RejectsUnknownKeysAndTypeChanges) {
  EXPECT_EQ(KindOf([] { LoadRunConfig({}, {"nn.hiden=[5]"}); }), ErrorKind::kConfig);
  EXPECT_EQ(KindOf([] { LoadRunConfig({}, {"seed=abc"}); }), ErrorKind::kConfig);
  EXPECT_EQ(KindOf([] { LoadRunConfig({}, {"gmm.components=2.5"}); }), ErrorKind::kConfig);
  EXPECT_EQ(KindOf([] { LoadRunConfig({}, {"noequals"}); }), ErrorKind::kConfig);
  EXPECT_EQ(KindOf([] { LoadRunConfig(WriteConfig("b.json", R"({"extra": 1})")); }), ErrorKind::kConfig);
  EXPECT_EQ(KindOf([] { LoadRunConfig(WriteConfig("c.json", "{not json")); }), ErrorKind::kConfig);
  EXPECT_EQ(KindOf([] { LoadRunConfig("/nonexistent/config.json"); }), ErrorKind::kConfig);
}

TEST(ConfigTest, RejectsInvalidValues) {
  for (const std::string o : {"gmm.context_width=4", "sweep.widths=[2]", "threads=0", "corpus.train_fraction=1.5",
                              "nn.context.width=8", "schedule.initial_lr=-1", "hdnn.offsets=[]", "sweep.system=svm",
                              "nn.hidden=[0]", "synth.num_concepts=1", "features.num_ceps=40"})
    EXPECT_EQ(KindOf([&] { LoadRunConfig({}, {o}); }), ErrorKind::kConfig) << o;
}

TEST(ConfigTest, FingerprintIgnoresThreadsOnly) {
  const RunConfig a = LoadRunConfig({}, {"threads=1"});
  const RunConfig b = LoadRunConfig({}, {"threads=4"});
  const RunConfig c = LoadRunConfig({}, {"seed=2"});
  EXPECT_EQ(a.Fingerprint(), b.Fingerprint());
  EXPECT_NE(a.Fingerprint(), c.Fingerprint());
  EXPECT_EQ(a.Fingerprint().size(), 16u);
}

TEST(ConfigTest, SeedsAreDerivedPerConsumer) {
  const RunConfig rc = LoadRunConfig({}, {"seed=3"});
  EXPECT_EQ(rc.synth.rng_seed, DeriveSeed(3, "synth"));
  EXPECT_NE(rc.cascade.first.schedule.rng_seed, rc.cascade.second.schedule.rng_seed);
  EXPECT_NE(rc.nn.schedule.rng_seed, rc.gmm.seed);
}

TEST(ConfigTest, SnapshotRoundTrips) {
  const fs::path dir = fs::temp_directory_path() / "hdnn_config_test" / "run";
  fs::remove_all(dir);
  const RunConfig rc = LoadRunConfig({}, {"seed=9"});
  WriteRunSnapshot(dir, rc);
  const RunConfig back = LoadRunConfig(dir / "config.json");
  EXPECT_EQ(back.Fingerprint(), rc.Fingerprint());
  std::ifstream f(dir / "fingerprint.txt");
  std::string fp;
  f >> fp;
  EXPECT_EQ(fp, rc.Fingerprint());
}

TEST(ConfigTest, ShippedConfigsLoad) {
  for (const char *name : {"default.json", "desk.json"}) {
    const fs::path p = fs::path(HDNN_SOURCE_DIR) / "configs" / name;
    ASSERT_TRUE(fs::exists(p)) << p;
    EXPECT_NO_THROW(LoadRunConfig(p)) << name;
  }
  const RunConfig shipped = LoadRunConfig(fs::path(HDNN_SOURCE_DIR) / "configs" / "default.json");
  EXPECT_EQ(shipped.Fingerprint(), ResolveConfig(DefaultConfigJson()).Fingerprint());
}

}  // namespace
}  // namespace hdnn
