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

// Corpus handling: annotation CSV ingest, stratified train/test split and a
// synthetic concept generator with known temporal structure.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hdnn/common.hpp"
#include "hdnn/wav.hpp"

namespace hdnn {

struct AnnotatedSegment {
  std::string clip_path;  // as written in the CSV, relative to the CSV's directory
  double start_s = 0.0;
  double end_s = 0.0;
  std::string label;

  double duration() const { return end_s - start_s; }
  bool operator==(const AnnotatedSegment &) const = default;
};

struct AnnotationSet {
  std::filesystem::path base_dir;
  std::vector<AnnotatedSegment> segments;
  /// Segments whose audio file does not exist (only checked when
  /// requested).
  std::vector<std::string> missing_audio;
};

inline std::string Trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> SplitCsvLine(const std::string &line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(Trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline double ParseSeconds(const std::string &text, std::size_t line_no, const char *what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception &) {
    throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": bad " + what + " '" + text + "'");
  }
}

/// Parses `clip,start_s,end_s,label` rows (with a header row). Any malformed
/// row makes the whole file fail with the offending line number. Segments
/// come back sorted by (clip, start).
inline AnnotationSet load_annotations(const std::filesystem::path &csv_path, bool check_audio = false) {
  std::ifstream is(csv_path);
  if (!is) throw Error(ErrorKind::kIo, "cannot open " + csv_path.string());
  AnnotationSet set;
  set.base_dir = csv_path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    if (!header_seen) {
      header_seen = true;
      const auto h = SplitCsvLine(line);
      if (h.size() != 4 || h[0] != "clip" || h[1] != "start_s" || h[2] != "end_s" || h[3] != "label")
        throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) +
                                           ": expected header 'clip,start_s,end_s,label'");
      continue;
    }
    const auto f = SplitCsvLine(line);
    if (f.size() != 4)
      throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": expected 4 fields, got " +
                                         std::to_string(f.size()));
    AnnotatedSegment seg{f[0], ParseSeconds(f[1], line_no, "start"), ParseSeconds(f[2], line_no, "end"), f[3]};
    if (seg.clip_path.empty() || seg.label.empty())
      throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": empty clip or label");
    if (seg.start_s < 0.0 || seg.end_s <= seg.start_s)
      throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": need 0 <= start < end");
    set.segments.push_back(std::move(seg));
  }
  std::stable_sort(set.segments.begin(), set.segments.end(), [](const auto &a, const auto &b) {
    return std::tie(a.clip_path, a.start_s) < std::tie(b.clip_path, b.start_s);
  });
  if (check_audio)
    for (const auto &s : set.segments)
      if (!std::filesystem::exists(set.base_dir / s.clip_path)) set.missing_audio.push_back(s.clip_path);
  return set;
}

inline void WriteAnnotations(const std::filesystem::path &csv_path, const std::vector<AnnotatedSegment> &segments) {
  std::ofstream os(csv_path);
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + csv_path.string());
  os << "clip,start_s,end_s,label\n";
  char buf[64];
  for (const auto &s : segments) {
    std::snprintf(buf, sizeof(buf), "%.3f,%.3f", s.start_s, s.end_s);
    os << s.clip_path << ',' << buf << ',' << s.label << '\n';
  }
}

/// Sorted unique labels: the concept table used to index classes.
inline std::vector<std::string> ConceptTable(const std::vector<AnnotatedSegment> &segments) {
  std::set<std::string> labels;
  for (const auto &s : segments) labels.insert(s.label);
  return {labels.begin(), labels.end()};
}

inline int LabelIndex(const std::vector<std::string> &table, const std::string &label) {
  const auto it = std::lower_bound(table.begin(), table.end(), label);
  Require(it != table.end() && *it == label, ErrorKind::kLabelOutOfRange, "unknown concept '" + label + "'");
  return static_cast<int>(it - table.begin());
}

/// Seeded split stratified by concept. Each concept with n segments sends
/// round(train_fraction * n) (clamped to [1, n-1]) to train.
inline std::pair<std::vector<AnnotatedSegment>, std::vector<AnnotatedSegment>> split_dataset(
    const std::vector<AnnotatedSegment> &segments, double train_fraction, uint64_t seed) {
  Require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::kConfig, "train_fraction must be in (0, 1)");
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < segments.size(); ++i) by_label[segments[i].label].push_back(i);
  std::vector<char> to_train(segments.size(), 0);
  for (auto &[label, idx] : by_label) {
    if (idx.size() < 2)
      throw Error(ErrorKind::kConceptTooSmall, "concept '" + label + "' has fewer than 2 segments");
    Rng rng(DeriveSeed(seed, "split-" + label));
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto take = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(idx.size()))), 1, idx.size() - 1);
    for (std::size_t i = 0; i < take; ++i) to_train[idx[i]] = 1;
  }
  std::pair<std::vector<AnnotatedSegment>, std::vector<AnnotatedSegment>> out;
  for (std::size_t i = 0; i < segments.size(); ++i) (to_train[i] ? out.first : out.second).push_back(segments[i]);
  return out;
}

/// Reads and trims a segment's audio, resampled to `sample_rate`.
class AudioLoader {
 public:
  AudioLoader(std::filesystem::path base_dir, int sample_rate)
      : base_dir_(std::move(base_dir)), sample_rate_(sample_rate) {}

  AudioClip Load(const AnnotatedSegment &seg) {
    auto it = cache_.find(seg.clip_path);
    if (it == cache_.end()) {
      const auto path = base_dir_ / seg.clip_path;
      if (!std::filesystem::exists(path)) throw Error(ErrorKind::kMissingAudio, path.string());
      it = cache_.emplace(seg.clip_path, Resample(ReadWav(path), sample_rate_)).first;
    }
    const AudioClip &full = it->second;
    const auto begin = static_cast<std::size_t>(std::lround(seg.start_s * sample_rate_));
    const auto end = std::min(full.samples.size(), static_cast<std::size_t>(std::lround(seg.end_s * sample_rate_)));
    Require(begin < end, ErrorKind::kClipTooShort, "segment lies outside " + seg.clip_path);
    AudioClip out;
    out.sample_rate = sample_rate_;
    out.samples.assign(full.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                       full.samples.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
  }

 private:
  std::filesystem::path base_dir_;
  int sample_rate_;
  std::map<std::string, AudioClip> cache_;
};

// ---------------------------------------------------------------------------
// Synthetic corpus

enum class ConceptFamily { kStationary, kShortPeriod, kLongPeriod, kConfusablePair };

inline const char *FamilyName(ConceptFamily f) {
  switch (f) {
    case ConceptFamily::kStationary: return "stationary";
    case ConceptFamily::kShortPeriod: return "short_period";
    case ConceptFamily::kLongPeriod: return "long_period";
    case ConceptFamily::kConfusablePair: return "confusable_pair";
  }
  return "?";
}

enum class SynthSource {
  kBandNoise,    // stationary band-limited noise
  kAmTone,       // harmonic tone with raised-cosine amplitude modulation
  kBurstTrain,   // exponentially decaying broadband bursts at a fixed period
  kAmBandNoise,  // band noise with raised-cosine amplitude modulation
};

/// Generator recipe of one concept.
struct ConceptTemplate {
  std::string name;
  ConceptFamily family;
  SynthSource source;
  double center_hz;  // band center or tone fundamental
  double period_ms;  // modulation or burst period; 0 for stationary
};

/// The base inventory. Concepts beyond its size reuse it with frequencies
/// scaled per round.
inline std::vector<ConceptTemplate> BaseInventory() {
  return {
      {"hum", ConceptFamily::kStationary, SynthSource::kBandNoise, 500.0, 0.0},
      {"hiss", ConceptFamily::kStationary, SynthSource::kBandNoise, 3000.0, 0.0},
      {"flutter_fast", ConceptFamily::kShortPeriod, SynthSource::kAmTone, 1200.0, 60.0},
      {"flutter_slow", ConceptFamily::kShortPeriod, SynthSource::kAmTone, 1200.0, 160.0},
      {"clap_fast", ConceptFamily::kLongPeriod, SynthSource::kBurstTrain, 0.0, 320.0},
      {"clap_slow", ConceptFamily::kLongPeriod, SynthSource::kBurstTrain, 0.0, 600.0},
      {"throb_fast", ConceptFamily::kConfusablePair, SynthSource::kAmBandNoise, 2000.0, 80.0},
      {"throb_slow", ConceptFamily::kConfusablePair, SynthSource::kAmBandNoise, 2000.0, 400.0},
  };
}

inline std::vector<ConceptTemplate> ConceptInventory(int num_concepts) {
  const auto base = BaseInventory();
  std::vector<ConceptTemplate> out;
  for (int i = 0; i < num_concepts; ++i) {
    ConceptTemplate t = base[static_cast<std::size_t>(i) % base.size()];
    const int round = i / static_cast<int>(base.size());
    if (round > 0) {
      t.center_hz *= 1.0 + 0.25 * round;
      if (t.source == SynthSource::kBurstTrain) t.center_hz = 500.0 * round;  // high-pass corner
      t.name += "_v" + std::to_string(round);
    }
    out.push_back(t);
  }
  return out;
}

struct SynthConfig {
  int num_concepts = 8;
  int clips_per_concept = 25;
  double clip_seconds_min = 2.0;
  double clip_seconds_max = 4.0;
  int sample_rate = 16000;
  /// Signal-to-noise ratio (dB) of the additive white background noise.
  double noise_db = 10.0;
  /// Per-clip level spread (dB below full level).
  double gain_range_db = 6.0;
  /// Largest per-clip channel tilt |b| of the filter 1 + b z^-1.
  double tilt_max = 0.0;
  uint64_t rng_seed = 1;

  void Validate() const {
    Require(num_concepts >= 2, ErrorKind::kConfig, "num_concepts must be >= 2");
    Require(clips_per_concept >= 1, ErrorKind::kConfig, "clips_per_concept must be >= 1");
    Require(clip_seconds_min > 0.0 && clip_seconds_min <= clip_seconds_max, ErrorKind::kConfig,
            "need 0 < clip_seconds_min <= clip_seconds_max");
    Require(sample_rate > 0, ErrorKind::kConfig, "sample_rate must be positive");
    Require(gain_range_db >= 0.0, ErrorKind::kConfig, "gain_range_db must be >= 0");
    Require(tilt_max >= 0.0 && tilt_max < 1.0, ErrorKind::kConfig, "tilt_max must lie in [0, 1)");
  }
};

/// Per-clip parameters drawn from the seed; recorded in the manifest.
struct SynthClipRecord {
  std::string path;
  std::string label;
  std::string family;
  uint64_t seed = 0;
  double duration_s = 0.0;
  double center_hz = 0.0;
  double period_ms = 0.0;
  double phase = 0.0;
  double gain_db = 0.0;
  double tilt = 0.0;
};

namespace synth_detail {

/// Sum of random-phase sinusoids uniformly spread over [lo, hi] Hz.
inline std::vector<double> BandNoise(std::size_t n, int rate, double lo, double hi, Rng &rng, int partials = 40) {
  std::uniform_real_distribution<double> freq(lo, hi), ph(0.0, 2.0 * std::numbers::pi);
  std::vector<double> out(n, 0.0);
  for (int p = 0; p < partials; ++p) {
    const double w = 2.0 * std::numbers::pi * freq(rng) / rate, phi = ph(rng);
    for (std::size_t i = 0; i < n; ++i) out[i] += std::sin(w * static_cast<double>(i) + phi);
  }
  return out;
}

inline double RaisedCosine(double t_s, double period_s, double phase) {
  return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * t_s / period_s + phase));
}

inline void Normalize(std::vector<double> &x, double target_rms) {
  double e = 0.0;
  for (double v : x) e += v * v;
  const double rms = std::sqrt(e / std::max<std::size_t>(x.size(), 1));
  if (rms > 0.0)
    for (double &v : x) v *= target_rms / rms;
}

}  // namespace synth_detail

/// Renders one clip of the given concept. Period and carrier are jittered
/// by +-5 %, the modulation phase is uniform, the level and channel tilt
/// are drawn per clip.
inline AudioClip RenderConcept(const ConceptTemplate &tpl, std::size_t num_samples, const SynthConfig &config,
                               uint64_t seed, SynthClipRecord *record = nullptr) {
  using namespace synth_detail;
  const int rate = config.sample_rate;
  Rng rng(seed);
  std::uniform_real_distribution<double> jitter(0.95, 1.05), phase_dist(0.0, 2.0 * std::numbers::pi),
      gain_dist(-config.gain_range_db, 0.0), tilt_dist(-config.tilt_max, config.tilt_max);
  const double center = tpl.center_hz * jitter(rng);
  const double period_s = tpl.period_ms * jitter(rng) / 1000.0;
  const double phase = phase_dist(rng);
  const double gain_db = gain_dist(rng);
  std::vector<double> x(num_samples, 0.0);
  switch (tpl.source) {
    case SynthSource::kBandNoise:
      x = BandNoise(num_samples, rate, center * 0.8, center * 1.2, rng);
      break;
    case SynthSource::kAmTone:
      for (std::size_t i = 0; i < num_samples; ++i) {
        const double t = static_cast<double>(i) / rate;
        const double tone = std::sin(2.0 * std::numbers::pi * center * t) +
                            0.5 * std::sin(2.0 * std::numbers::pi * 2.0 * center * t + 0.3);
        x[i] = tone * RaisedCosine(t, period_s, phase);
      }
      break;
    case SynthSource::kAmBandNoise: {
      x = BandNoise(num_samples, rate, center * 0.8, center * 1.2, rng);
      for (std::size_t i = 0; i < num_samples; ++i)
        x[i] *= RaisedCosine(static_cast<double>(i) / rate, period_s, phase);
      break;
    }
    case SynthSource::kBurstTrain: {
      std::normal_distribution<double> white(0.0, 1.0);
      const double tau = 0.015;
      const double offset = phase / (2.0 * std::numbers::pi) * period_s;
      double prev = 0.0;
      for (std::size_t i = 0; i < num_samples; ++i) {
        const double t = static_cast<double>(i) / rate;
        const double since = std::fmod(t + period_s - offset, period_s);
        double v = white(rng) * std::exp(-since / tau);
        if (center > 0.0) {  // first-order high-pass tilt for inventory variants
          const double a = std::exp(-2.0 * std::numbers::pi * center / rate);
          const double hp = v - prev;
          prev = v;
          v = hp * (1.0 + a) / 2.0;
        }
        x[i] = v;
      }
      break;
    }
  }
  // Fixed signal level so the noise floor is stationary across concepts,
  // then the per-clip gain.
  Normalize(x, 0.1);
  std::vector<double> noise(num_samples);
  std::normal_distribution<double> white(0.0, 1.0);
  for (double &v : noise) v = white(rng);
  Normalize(noise, 0.1 * std::pow(10.0, -config.noise_db / 20.0));
  const double gain = std::pow(10.0, gain_db / 20.0);
  const double tilt = config.tilt_max > 0.0 ? tilt_dist(rng) : 0.0;
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(num_samples);
  double prev = 0.0;
  for (std::size_t i = 0; i < num_samples; ++i) {
    const double v = x[i] + noise[i];
    clip.samples[i] = std::clamp(gain * (v + tilt * prev) / (1.0 + std::abs(tilt)), -1.0, 1.0);
    prev = v;
  }
  if (record) {
    record->center_hz = center;
    record->period_ms = period_s * 1000.0;
    record->phase = phase;
    record->gain_db = gain_db;
    record->tilt = tilt;
    record->family = FamilyName(tpl.family);
  }
  return clip;
}

struct SynthCorpus {
  std::filesystem::path annotations;
  std::filesystem::path manifest;
  std::vector<AnnotatedSegment> segments;
  std::vector<SynthClipRecord> records;
};

inline nlohmann::json ToJson(const SynthClipRecord &r) {
  return {{"path", r.path},           {"label", r.label},         {"family", r.family},
          {"seed", r.seed},           {"duration_s", r.duration_s}, {"center_hz", r.center_hz},
          {"period_ms", r.period_ms}, {"phase", r.phase},          {"gain_db", r.gain_db}, {"tilt", r.tilt}};
}

/// Writes audio/<label>_<k>.wav, annotations.csv and manifest.jsonl under
/// `out_dir`. Output is a pure function of `config`.
inline SynthCorpus generate_synthetic_corpus(const SynthConfig &config, const std::filesystem::path &out_dir,
                                             int threads = 1) {
  config.Validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "audio", ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + (out_dir / "audio").string() + ": " + ec.message());
  const auto inventory = ConceptInventory(config.num_concepts);
  const std::size_t total = inventory.size() * static_cast<std::size_t>(config.clips_per_concept);
  SynthCorpus corpus;
  corpus.records.resize(total);
  corpus.segments.resize(total);
  // Durations are whole multiples of 10 ms so they print exactly.
  const auto min_steps = static_cast<long>(std::ceil(config.clip_seconds_min * 100.0 - 1e-9));
  const auto max_steps = static_cast<long>(std::floor(config.clip_seconds_max * 100.0 + 1e-9));
  Require(min_steps <= max_steps && min_steps > 0, ErrorKind::kConfig,
          "clip duration range must contain a multiple of 10 ms");
  ParallelFor(total, threads, [&](std::size_t idx) {
    const auto &tpl = inventory[idx / static_cast<std::size_t>(config.clips_per_concept)];
    const auto k = idx % static_cast<std::size_t>(config.clips_per_concept);
    SynthClipRecord rec;
    rec.label = tpl.name;
    rec.seed = DeriveSeed(config.rng_seed, tpl.name + "#" + std::to_string(k));
    Rng rng(DeriveSeed(rec.seed, "duration"));
    std::uniform_int_distribution<long> steps(min_steps, max_steps);
    const long s = steps(rng);
    rec.duration_s = static_cast<double>(s) / 100.0;
    const auto samples = static_cast<std::size_t>(s) * static_cast<std::size_t>(config.sample_rate) / 100u;
    rec.path = "audio/" + tpl.name + "_" + std::to_string(k) + ".wav";
    const AudioClip clip = RenderConcept(tpl, samples, config, rec.seed, &rec);
    WriteWav(out_dir / rec.path, clip);
    corpus.segments[idx] = {rec.path, 0.0, rec.duration_s, rec.label};
    corpus.records[idx] = rec;
  });
  std::stable_sort(corpus.segments.begin(), corpus.segments.end(), [](const auto &a, const auto &b) {
    return std::tie(a.clip_path, a.start_s) < std::tie(b.clip_path, b.start_s);
  });
  corpus.annotations = out_dir / "annotations.csv";
  corpus.manifest = out_dir / "manifest.jsonl";
  WriteAnnotations(corpus.annotations, corpus.segments);
  std::ofstream manifest(corpus.manifest);
  if (!manifest) throw Error(ErrorKind::kIo, "cannot write " + corpus.manifest.string());
  for (const auto &r : corpus.records) manifest << ToJson(r).dump() << '\n';
  return corpus;
}

/// Reads manifest.jsonl back into label -> family.
inline std::map<std::string, std::string> ReadManifestFamilies(const std::filesystem::path &manifest) {
  std::ifstream is(manifest);
  if (!is) throw Error(ErrorKind::kIo, "cannot open " + manifest.string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (Trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out[j.at("label").get<std::string>()] = j.at("family").get<std::string>();
  }
  return out;
}

}  // namespace hdnn
