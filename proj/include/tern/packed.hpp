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

#include <cstdint>
#include <string>
#include <vector>

#include "tern/ternary.hpp"

namespace tern {

// Bit-level layout of one ternary tensor: sixteen 2-bit codes per 32-bit
// word, code i in bits [2i, 2i+1]. 00 is zero, 01 is +1, 11 is -1; 10 never
// appears in a well-formed stream. Pad codes in the last word are 00.
struct PackedTernary {
  Shape shape;
  std::int64_t length = 0;  // code count, = numel of shape
  std::vector<std::uint32_t> words;
  float alpha = 0.0f;
  float beta = 0.0f;

  double density() const;
};

inline std::int64_t packed_word_count(std::int64_t length) { return (length + 15) / 16; }

inline std::uint32_t encode_code(std::int8_t c) {
  switch (c) {
    case 0: return 0b00u;
    case 1: return 0b01u;
    case -1: return 0b11u;
    default:
      throw CorruptionError("pack: code " + std::to_string(static_cast<int>(c)) +
                            " outside {-1,0,+1}");
  }
}

inline std::int8_t decode_code(std::uint32_t bits) {
  switch (bits & 0b11u) {
    case 0b00u: return 0;
    case 0b01u: return 1;
    case 0b11u: return -1;
    default: throw CorruptionError("unpack: reserved code pattern 10 in stream");
  }
}

inline PackedTernary pack(const TernaryTensor& t) {
  PackedTernary p;
  p.shape = t.shape;
  p.length = t.numel();
  p.alpha = static_cast<float>(t.alpha);
  p.beta = static_cast<float>(t.beta);
  p.words.assign(static_cast<std::size_t>(packed_word_count(p.length)), 0u);
  for (std::int64_t i = 0; i < p.length; ++i) {
    const std::uint32_t bits = encode_code(t.codes[static_cast<std::size_t>(i)]);
    p.words[static_cast<std::size_t>(i / 16)] |= bits << (2 * (i % 16));
  }
  return p;
}

inline TernaryTensor unpack(const PackedTernary& p) {
  if (p.length != shape_numel(p.shape))
    throw CorruptionError("unpack: code count " + std::to_string(p.length) +
                          " does not match shape " + shape_str(p.shape));
  if (static_cast<std::int64_t>(p.words.size()) != packed_word_count(p.length))
    throw TruncationError("unpack: expected " + std::to_string(packed_word_count(p.length)) +
                          " words, have " + std::to_string(p.words.size()));
  TernaryTensor t;
  t.shape = p.shape;
  t.alpha = static_cast<double>(p.alpha);
  t.beta = static_cast<double>(p.beta);
  t.delta_th = 0.0;  // not carried by the packed form
  t.codes.resize(static_cast<std::size_t>(p.length));
  for (std::int64_t i = 0; i < p.length; ++i)
    t.codes[static_cast<std::size_t>(i)] =
        decode_code(p.words[static_cast<std::size_t>(i / 16)] >> (2 * (i % 16)));
  // pad codes beyond the payload must be zero
  const std::int64_t tail = p.length % 16;
  if (tail != 0) {
    const std::uint32_t last = p.words.back();
    if ((last >> (2 * tail)) != 0u)
      throw CorruptionError("unpack: nonzero pad bits in final word");
  }
  return t;
}

inline double PackedTernary::density() const {
  std::int64_t nz = 0;
  for (std::int64_t i = 0; i < length; ++i)
    nz += (decode_code(words[static_cast<std::size_t>(i / 16)] >> (2 * (i % 16))) != 0);
  return length == 0 ? 0.0 : static_cast<double>(nz) / static_cast<double>(length);
}

}  // namespace tern
