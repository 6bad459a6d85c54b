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

// PCM16 RIFF/WAVE reading and writing. Only uncompressed 16-bit PCM is
// supported; multi-channel input is averaged down to mono.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hdnn/common.hpp"

namespace hdnn {

struct AudioClip {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  int sample_rate = 16000;

  double DurationSeconds() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

inline void WriteWav(const std::filesystem::path &path, const AudioClip &clip) {
  Require(clip.sample_rate > 0, ErrorKind::kIo, "sample rate must be positive");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  const auto data_bytes = static_cast<uint32_t>(clip.samples.size() * 2);
  io::WriteMagic(os, "RIFF");
  io::WritePod<uint32_t>(os, 36 + data_bytes);
  io::WriteMagic(os, "WAVE");
  io::WriteMagic(os, "fmt ");
  io::WritePod<uint32_t>(os, 16);
  io::WritePod<uint16_t>(os, 1);  // PCM
  io::WritePod<uint16_t>(os, 1);  // mono
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(clip.sample_rate));
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(clip.sample_rate * 2));
  io::WritePod<uint16_t>(os, 2);
  io::WritePod<uint16_t>(os, 16);
  io::WriteMagic(os, "data");
  io::WritePod<uint32_t>(os, data_bytes);
  for (double s : clip.samples) {
    const double clamped = std::clamp(s, -1.0, 1.0);
    io::WritePod<int16_t>(os, static_cast<int16_t>(std::lround(clamped * 32767.0)));
  }
  if (!os) throw Error(ErrorKind::kIo, "short write to " + path.string());
}

inline AudioClip ReadWav(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kMissingAudio, "cannot open " + path.string());
  try {
    io::ExpectMagic(is, "RIFF");
    io::ReadPod<uint32_t>(is);
    io::ExpectMagic(is, "WAVE");
    uint16_t channels = 0, bits = 0, format = 0;
    uint32_t rate = 0;
    bool have_fmt = false;
    for (;;) {
      std::string id(4, '\0');
      is.read(id.data(), 4);
      if (!is) throw Error(ErrorKind::kFormat, "no data chunk");
      const auto size = io::ReadPod<uint32_t>(is);
      if (id == "fmt ") {
        format = io::ReadPod<uint16_t>(is);
        channels = io::ReadPod<uint16_t>(is);
        rate = io::ReadPod<uint32_t>(is);
        io::ReadPod<uint32_t>(is);
        io::ReadPod<uint16_t>(is);
        bits = io::ReadPod<uint16_t>(is);
        is.seekg(size - 16 + (size & 1), std::ios::cur);
        have_fmt = true;
      } else if (id == "data") {
        if (!have_fmt) throw Error(ErrorKind::kFormat, "data chunk before fmt chunk");
        if (format != 1 || bits != 16 || channels == 0)
          throw Error(ErrorKind::kFormat, "only 16-bit PCM is supported");
        const std::size_t frames = size / (2u * channels);
        AudioClip clip;
        clip.sample_rate = static_cast<int>(rate);
        clip.samples.resize(frames);
        for (std::size_t i = 0; i < frames; ++i) {
          double acc = 0.0;
          for (uint16_t c = 0; c < channels; ++c) acc += io::ReadPod<int16_t>(is) / 32768.0;
          clip.samples[i] = acc / channels;
        }
        return clip;
      } else {
        is.seekg(size + (size & 1), std::ios::cur);
      }
    }
  } catch (const Error &e) {
    throw Error(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
}

/// Linear-interpolation resampler. Adequate for bringing ingested audio onto
/// the 16 kHz analysis rate; no anti-alias filter is applied.
inline AudioClip Resample(const AudioClip &clip, int target_rate) {
  if (clip.sample_rate == target_rate || clip.samples.empty()) return clip;
  const double ratio = static_cast<double>(clip.sample_rate) / target_rate;
  const auto n = static_cast<std::size_t>(
      std::floor((clip.samples.size() - 1) / ratio) + 1);
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = i * ratio;
    const auto k = static_cast<std::size_t>(pos);
    const double frac = pos - k;
    const double next = k + 1 < clip.samples.size() ? clip.samples[k + 1] : clip.samples[k];
    out.samples[i] = (1.0 - frac) * clip.samples[k] + frac * next;
  }
  return out;
}

}  // namespace hdnn
