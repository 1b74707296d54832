/*
 * Copyright (c) 2026 The tern authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tern {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorCategory {
  Config = 2,
  Shape = 3,
  Io = 4,
  Parse = 5,
  Divergence = 6,
  Corruption = 7,
  Internal = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& msg)
      : std::runtime_error(msg), category_(cat) {}
  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorCategory::Config, m) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error(ErrorCategory::Shape, m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorCategory::Io, m) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& m) : Error(ErrorCategory::Parse, m) {}
};
struct DivergenceError : Error {
  explicit DivergenceError(const std::string& m) : Error(ErrorCategory::Divergence, m) {}
};

// Model file corruption kinds are distinct so callers can tell them apart.
struct CorruptionError : Error {
  explicit CorruptionError(const std::string& m) : Error(ErrorCategory::Corruption, m) {}
};
struct BadMagicError : CorruptionError {
  explicit BadMagicError(const std::string& m) : CorruptionError(m) {}
};
struct BadVersionError : CorruptionError {
  explicit BadVersionError(const std::string& m) : CorruptionError(m) {}
};
struct CrcError : CorruptionError {
  explicit CrcError(const std::string& m) : CorruptionError(m) {}
};
struct TruncationError : CorruptionError {
  explicit TruncationError(const std::string& m) : CorruptionError(m) {}
};

inline bool& warnings_enabled() {
  static bool on = true;
  return on;
}

inline void warn(const std::string& msg) {
  if (warnings_enabled()) std::cerr << "tern: warning: " << msg << "\n";
}

inline std::string error_category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Shape: return "shape";
    case ErrorCategory::Io: return "io";
    case ErrorCategory::Parse: return "parse";
    case ErrorCategory::Divergence: return "divergence";
    case ErrorCategory::Corruption: return "corruption";
    case ErrorCategory::Internal: return "internal";
  }
  return "internal";
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  f.seekg(0, std::ios::end);
  const std::streamoff n = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
  if (n > 0) f.read(reinterpret_cast<char*>(bytes.data()), n);
  if (!f) throw IoError("short read on '" + path + "'");
  return bytes;
}

inline void write_file_bytes(const std::string& path, const std::uint8_t* data,
                             std::size_t size) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!f) throw IoError("short write on '" + path + "'");
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  write_file_bytes(path, bytes.data(), bytes.size());
}

// Deterministic RNG. std::mt19937_64 is fully specified by the standard; the
// value transforms below avoid the implementation-defined std distributions so
// results are reproducible across compilers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix(seed)) {}

  std::uint64_t next_u64() {
    // xorshift* keeps the engine self-contained and byte-stable everywhere.
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) { return n ? next_u64() % n : 0; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Derive an independent stream, e.g. per-epoch shuffles.
  Rng fork(std::uint64_t stream) const { return Rng(state_ ^ splitmix(stream + 0x9E3779B97F4A7C15ULL)); }

  template <typename It>
  void shuffle(It first, It last) {
    auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::uint64_t j = uniform_int(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    x = x ^ (x >> 31);
    return x ? x : 0x1234567887654321ULL;  // xorshift state must be nonzero
  }

  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tern
