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

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <exception>
#include <functional>
#include <istream>
#include <mutex>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace hdnn {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Labels = std::vector<int>;
using Rng = std::mt19937_64;

enum class ErrorKind {
  kClipTooShort,
  kDimensionMismatch,
  kEmptyInput,
  kLabelOutOfRange,
  kNonFinite,
  kDegenerate,
  kDataTooSmall,
  kLengthMismatch,
  kParse,
  kMissingAudio,
  kConceptTooSmall,
  kIo,
  kFormat,
  kConfig,
};

inline const char *ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kClipTooShort: return "ClipTooShort";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kEmptyInput: return "EmptyInput";
    case ErrorKind::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::kNonFinite: return "NonFinite";
    case ErrorKind::kDegenerate: return "DegenerateComponent";
    case ErrorKind::kDataTooSmall: return "DataTooSmall";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kParse: return "ParseError";
    case ErrorKind::kMissingAudio: return "MissingAudio";
    case ErrorKind::kConceptTooSmall: return "ConceptTooSmall";
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kFormat: return "FormatError";
    case ErrorKind::kConfig: return "ConfigError";
  }
  return "Error";
}

/// Library-wide exception. `kind()` lets callers (the CLI in particular)
/// map failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void Require(bool cond, ErrorKind kind, const std::string &what) {
  if (!cond) throw Error(kind, what);
}

inline bool AllFinite(const Matrix &m) { return m.allFinite(); }

inline double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Index of the largest entry; ties resolve to the lowest index.
template <typename Row>
int ArgMax(const Row &row) {
  int best = 0;
  for (Eigen::Index i = 1; i < row.size(); ++i)
    if (row(i) > row(best)) best = static_cast<int>(i);
  return best;
}

// Little-endian binary helpers shared by all model and cache formats.
namespace io {

template <typename T>
void WritePod(std::ostream &os, T value) {
  os.write(reinterpret_cast<const char *>(&value), sizeof(T));
}

template <typename T>
T ReadPod(std::istream &is) {
  T value{};
  is.read(reinterpret_cast<char *>(&value), sizeof(T));
  if (!is) throw Error(ErrorKind::kFormat, "unexpected end of stream");
  return value;
}

inline void WriteMagic(std::ostream &os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void ExpectMagic(std::istream &is, std::string_view magic) {
  std::string got(magic.size(), '\0');
  is.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!is || got != magic)
    throw Error(ErrorKind::kFormat, "bad magic, expected '" + std::string(magic) + "'");
}

inline void WriteString(std::ostream &os, const std::string &s) {
  WritePod<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string ReadString(std::istream &is) {
  auto n = ReadPod<uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw Error(ErrorKind::kFormat, "truncated string");
  return s;
}

template <typename Derived>
void WriteF64(std::ostream &os, const Eigen::DenseBase<Derived> &m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) WritePod<double>(os, m(r, c));
}

inline Matrix ReadF64Matrix(std::istream &is, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = ReadPod<double>(is);
  return m;
}

inline Vector ReadF64Vector(std::istream &is, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = ReadPod<double>(is);
  return v;
}

}  // namespace io

/// FNV-1a, 64 bit. Used for config fingerprints and seed derivation.
inline uint64_t Fnv1a64(std::string_view data, uint64_t hash = 14695981039346656037ULL) {
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

/// Derives an independent child seed from a parent seed and a tag.
inline uint64_t DeriveSeed(uint64_t seed, std::string_view tag) {
  std::string buf(reinterpret_cast<const char *>(&seed), sizeof(seed));
  buf.append(tag);
  return Fnv1a64(buf);
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be
/// written by index so output is independent of scheduling.
inline void ParallelFor(std::size_t n, int threads, const std::function<void(std::size_t)> &fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto &t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace hdnn
