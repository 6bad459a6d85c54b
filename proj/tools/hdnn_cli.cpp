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


// hdnn: command-line driver for corpus generation, training, evaluation and
// sweeps. Every subcommand writes into a run directory that holds the
// resolved config and its fingerprint.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hdnn/hdnn.hpp"

namespace fs = std::filesystem;
using namespace hdnn;

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  long long seed = -1;
  int threads = 0;
};

RunConfig Resolve(const Globals &g) {
  std::vector<std::string> overrides = g.overrides;
  if (g.seed >= 0) overrides.push_back("seed=" + std::to_string(g.seed));
  if (g.threads > 0) overrides.push_back("threads=" + std::to_string(g.threads));
  return LoadRunConfig(g.config_path, overrides);
}

fs::path RunDir(const Globals &g, const std::string &subcommand) {
  return g.out_dir.empty() ? fs::path("runs") / subcommand : fs::path(g.out_dir);
}

void WriteText(const fs::path &path, const std::function<void(std::ostream &)> &fn) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  fn(os);
}

Corpus LoadConfiguredCorpus(const RunConfig &rc) {
  return LoadCorpus(rc.annotations, rc.mfcc, rc.train_fraction, DeriveSeed(rc.seed, "split"), rc.threads);
}

int SynthData(const RunConfig &rc, const fs::path &run_dir) {
  WriteRunSnapshot(run_dir, rc);
  const SynthCorpus corpus = generate_synthetic_corpus(rc.synth, rc.corpus_dir, rc.threads);
  std::cout << "wrote " << corpus.segments.size() << " clips to " << rc.corpus_dir.string() << "\n";
  return 0;
}

int ExtractFeatures(const RunConfig &rc, const fs::path &run_dir) {
  WriteRunSnapshot(run_dir, rc);
  const Corpus corpus = LoadConfiguredCorpus(rc);
  auto dump = [&](const std::vector<LabeledClip> &clips, const std::string &part) {
    const fs::path dir = run_dir / "features" / part;
    fs::create_directories(dir);
    std::ofstream list(dir / "list.csv");
    list << "file,label,frames,source\n";
    for (std::size_t i = 0; i < clips.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%05zu.acft", i);
      SaveFeatureCache(dir / name, clips[i].features);
      list << name << ',' << corpus.labels[static_cast<std::size_t>(clips[i].label)] << ','
           << clips[i].features.num_frames() << ',' << clips[i].id << '\n';
    }
  };
  dump(corpus.train, "train");
  dump(corpus.test, "test");
  std::cout << "extracted " << corpus.train.size() << " train and " << corpus.test.size() << " test clips\n";
  return 0;
}

int TrainGmm(const RunConfig &rc, const fs::path &run_dir) {
  WriteRunSnapshot(run_dir, rc);
  const Corpus corpus = LoadConfiguredCorpus(rc);
  const GmmSystemResult r = TrainGmmSystem(corpus, rc.GmmFrontEndConfig(rc.gmm_context_width), rc.gmm, rc.threads);
  SaveSystem(run_dir, r.system);
  WriteText(run_dir / "ubm_loglik.csv", [&](std::ostream &os) {
    os << "iteration,avg_loglik\n";
    for (std::size_t i = 0; i < r.ubm_log_likelihoods.size(); ++i) os << i << ',' << r.ubm_log_likelihoods[i] << '\n';
  });
  std::cout << "GMM bank with " << r.system.gmm.concepts.size() << " concepts written to " << run_dir.string() << "\n";
  return 0;
}

int TrainNn(const RunConfig &rc, const fs::path &run_dir) {
  WriteRunSnapshot(run_dir, rc);
  const Corpus corpus = LoadConfiguredCorpus(rc);
  const NnSystemResult r = TrainNnSystem(corpus, rc.nn_front_end, rc.nn, rc.seed, rc.threads);
  SaveSystem(run_dir, r.system);
  WriteText(run_dir / "history.csv", [&](std::ostream &os) { WriteHistoryCsv(os, r.history); });
  std::cout << "NN trained for " << r.history.size() << " epochs, written to " << run_dir.string() << "\n";
  return 0;
}

int TrainHdnn(const RunConfig &rc, const fs::path &run_dir) {
  WriteRunSnapshot(run_dir, rc);
  const Corpus corpus = LoadConfiguredCorpus(rc);
  const CascadeSystemResult r = TrainCascadeSystem(corpus, rc.hdnn_front_end, rc.cascade, rc.threads);
  SaveSystem(run_dir, r.cascade);
  SaveSystem(run_dir / "first_stage", r.first_stage);
  WriteText(run_dir / "history_stage1.csv", [&](std::ostream &os) { WriteHistoryCsv(os, r.training.first.history); });
  WriteText(run_dir / "history_stage2.csv", [&](std::ostream &os) { WriteHistoryCsv(os, r.training.second.history); });
  WriteText(run_dir / "rbm_reconstruction.csv", [&](std::ostream &os) {
    os << "layer,epoch,error\n";
    for (std::size_t l = 0; l < r.training.first.pretrained.size(); ++l) {
      const auto &errs = r.training.first.pretrained[l].reconstruction_errors;
      for (std::size_t e = 0; e < errs.size(); ++e) os << l << ',' << e << ',' << errs[e] << '\n';
    }
  });
  std::cout << "H-DNN written to " << run_dir.string() << "\n";
  return 0;
}

int Evaluate(const RunConfig &rc, const fs::path &run_dir, const std::string &model) {
  Require(!model.empty(), ErrorKind::kConfig, "evaluate needs --model <run dir> or --model oracle");
  WriteRunSnapshot(run_dir, rc);
  const Corpus corpus = LoadConfiguredCorpus(rc);
  EvalReport report;
  std::string title;
  if (model == "oracle") {
    report = evaluate(OracleClassifier(corpus.test), corpus.test, corpus.labels, rc.threads);
    title = "oracle";
  } else {
    const System system = LoadSystem(model);
    report = evaluate(system.AsClassifier(), corpus.test, corpus.labels, rc.threads);
    title = model;
  }
  report.config_fingerprint = rc.Fingerprint();
  WriteText(run_dir / "report.csv", [&](std::ostream &os) { WriteReportCsv(os, report); });
  PrintReport(std::cout, report, title);
  return 0;
}

int SweepContext(RunConfig rc, const fs::path &run_dir, const std::string &widths, const std::string &system) {
  if (!widths.empty()) {
    rc.resolved["sweep"]["widths"] = Json::parse("[" + widths + "]", nullptr, false);
    Require(!rc.resolved["sweep"]["widths"].is_discarded(), ErrorKind::kConfig, "bad --widths list");
  }
  if (!system.empty()) rc.resolved["sweep"]["system"] = system;
  rc = ResolveConfig(rc.resolved);
  WriteRunSnapshot(run_dir, rc);
  const Corpus corpus = LoadConfiguredCorpus(rc);
  const WidthFactory factory = [&](int width) -> Classifier {
    auto sys = std::make_shared<System>();
    if (rc.sweep_system == "gmm") {
      *sys = TrainGmmSystem(corpus, rc.GmmFrontEndConfig(width), rc.gmm).system;
    } else {
      FrontEndConfig fe = rc.nn_front_end;
      fe.context.width = width;
      *sys = TrainNnSystem(corpus, fe, rc.nn, rc.seed).system;
    }
    return [sys](const FeatureSequence &s) { return sys->Classify(s); };
  };
  const auto rows = context_sweep(rc.sweep_widths, factory, corpus.test, corpus.labels, rc.threads);
  WriteText(run_dir / "sweep.csv", [&](std::ostream &os) { WriteSweepCsv(os, rows); });
  std::cout << rc.sweep_system << " context sweep (config " << rc.Fingerprint() << ")\n";
  for (const auto &r : rows) std::printf("  width %3d  F.A. %6.2f%%\n", r.width, r.fa);
  return 0;
}

int GridArch(const RunConfig &rc, const fs::path &run_dir) {
  WriteRunSnapshot(run_dir, rc);
  const Corpus corpus = LoadConfiguredCorpus(rc);
  const auto [fe, inputs] = FrontEnd::Fit(rc.hdnn_front_end, corpus.train, rc.threads);
  const FrameSet data = PoolFrames(inputs, static_cast<int>(corpus.labels.size()));
  const ArchitectureFactory factory = [&](int depth, int width, bool pretrain) -> Classifier {
    NetworkConfig net = rc.cascade.first;
    net.hidden.assign(static_cast<std::size_t>(depth), width);
    net.pretrain = pretrain;
    auto sys = std::make_shared<System>();
    sys->kind = SystemKind::kNn;
    sys->front_end = fe;
    sys->nn = train_network(data, net, DeriveSeed(rc.seed, "grid-init")).model;
    return [sys](const FeatureSequence &s) { return sys->Classify(s); };
  };
  const auto cells =
      architecture_grid(rc.grid_depths, rc.grid_widths, rc.grid_pretrain, factory, corpus.test, corpus.labels,
                        rc.threads);
  WriteText(run_dir / "grid.csv", [&](std::ostream &os) { WriteGridCsv(os, cells); });
  WriteGridCsv(std::cout, cells);
  return 0;
}

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kNonFinite: return 4;
    case ErrorKind::kClipTooShort:
    case ErrorKind::kParse:
    case ErrorKind::kMissingAudio:
    case ErrorKind::kConceptTooSmall:
    case ErrorKind::kIo:
    case ErrorKind::kFormat:
    case ErrorKind::kDataTooSmall:
    case ErrorKind::kEmptyInput: return 3;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Hierarchical DNN audio concept classifier"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration");
  app.add_option("--set", g.overrides, "Override a config value: dotted.key=value")->take_all();
  app.add_option("--out-dir", g.out_dir, "Run directory (default runs/<subcommand>)");
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--threads", g.threads, "Worker threads");

  std::string model, widths, system;
  auto *synth = app.add_subcommand("synth-data", "Generate the synthetic concept corpus");
  auto *extract = app.add_subcommand("extract-features", "Extract MFCC feature caches");
  auto *train_gmm = app.add_subcommand("train-gmm", "Train the GMM-UBM concept bank");
  auto *train_nn = app.add_subcommand("train-nn", "Train a single-stage NN");
  auto *train_hdnn = app.add_subcommand("train-hdnn", "Train the two-stage cascade");
  auto *eval = app.add_subcommand("evaluate", "Frame accuracy of a trained run directory on the test split");
  eval->add_option("--model", model, "Run directory of a trained system, or 'oracle'")->required();
  auto *sweep = app.add_subcommand("sweep-context", "Frame accuracy against context width");
  sweep->add_option("--widths", widths, "Comma-separated odd widths");
  sweep->add_option("--system", system, "nn or gmm");
  auto *grid = app.add_subcommand("grid-arch", "Depth x width x initialization grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig rc = Resolve(g);
    if (*synth) return SynthData(rc, RunDir(g, "synth-data"));
    if (*extract) return ExtractFeatures(rc, RunDir(g, "extract-features"));
    if (*train_gmm) return TrainGmm(rc, RunDir(g, "train-gmm"));
    if (*train_nn) return TrainNn(rc, RunDir(g, "train-nn"));
    if (*train_hdnn) return TrainHdnn(rc, RunDir(g, "train-hdnn"));
    if (*eval) return Evaluate(rc, RunDir(g, "evaluate"), model);
    if (*sweep) return SweepContext(rc, RunDir(g, "sweep-context"), widths, system);
    if (*grid) return GridArch(rc, RunDir(g, "grid-arch"));
  } catch (const Error &e) {
    std::cerr << "hdnn: " << ErrorKindName(e.kind()) << ": " << e.what() << "\n";
    return ExitCodeFor(e.kind());
  } catch (const std::exception &e) {
    std::cerr << "hdnn: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
