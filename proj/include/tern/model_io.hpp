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

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tern/infer.hpp"
#include "tern/model.hpp"
#include "tern/packed.hpp"

namespace tern {

// Model file layout, little-endian throughout:
//   "TERN" | u32 version | u32 entry count
//   per entry: u32 name length, name bytes, u8 tag (0 fp, 1 ternary,
//     2 expanded), u32 rank, rank x u32 dims, payload
//   payload fp:      numel x f32
//   payload ternary: u32 branch count, per branch f32 beta, f32 alpha,
//                    ceil(numel/16) x u32 packed code words
//   u32 crc32 of every preceding byte
inline constexpr std::uint32_t kModelFileVersion = 1;
inline constexpr char kModelMagic[4] = {'T', 'E', 'R', 'N'};

inline std::uint32_t crc32(const std::uint8_t* p, std::size_t n) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

struct ModelEntry {
  enum Tag : std::uint8_t { Fp = 0, Tern = 1, Rel = 2 };
  std::string name;
  Tag tag = Fp;
  Shape shape;
  Tensor<float> fp;                   // tag Fp
  std::vector<PackedTernary> packed;  // tag Tern (one) or Rel (one per branch)
};

struct ModelFile {
  std::uint32_t version = kModelFileVersion;
  std::vector<ModelEntry> entries;

  const ModelEntry* find(const std::string& name) const {
    for (const ModelEntry& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(buf_); }
  const std::vector<std::uint8_t>& peek() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& buf, std::size_t limit)
      : buf_(buf), limit_(limit) {}

  std::uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool exhausted() const { return pos_ == limit_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > limit_)
      throw TruncationError("model file ends at byte " + std::to_string(limit_) +
                            ", needed " + std::to_string(n) + " more at offset " +
                            std::to_string(pos_));
  }
  const std::vector<std::uint8_t>& buf_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_model(const ModelFile& mf) {
  detail::ByteWriter w;
  w.bytes(kModelMagic, 4);
  w.u32(mf.version);
  w.u32(static_cast<std::uint32_t>(mf.entries.size()));
  for (const ModelEntry& e : mf.entries) {
    if (e.name.empty()) throw ConfigError("serialize: entry with empty name");
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.u8(static_cast<std::uint8_t>(e.tag));
    validate_shape(e.shape, "entry '" + e.name + "'");
    w.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) w.u32(static_cast<std::uint32_t>(d));
    const std::int64_t numel = shape_numel(e.shape);
    if (e.tag == ModelEntry::Fp) {
      if (static_cast<std::int64_t>(e.fp.data.size()) != numel)
        throw ConfigError("serialize: entry '" + e.name + "' has " +
                          std::to_string(e.fp.data.size()) + " values for shape " +
                          shape_str(e.shape));
      for (float v : e.fp.data) w.f32(v);
    } else {
      if (e.packed.empty()) throw ConfigError("serialize: entry '" + e.name + "' has no branches");
      if (e.tag == ModelEntry::Tern && e.packed.size() != 1)
        throw ConfigError("serialize: plain ternary entry '" + e.name + "' has " +
                          std::to_string(e.packed.size()) + " branches");
      w.u32(static_cast<std::uint32_t>(e.packed.size()));
      for (const PackedTernary& p : e.packed) {
        if (p.length != numel || static_cast<std::int64_t>(p.words.size()) != packed_word_count(numel))
          throw ConfigError("serialize: entry '" + e.name + "' branch does not match shape " +
                            shape_str(e.shape));
        w.f32(p.beta);
        w.f32(p.alpha);
        for (std::uint32_t word : p.words) w.u32(word);
      }
    }
  }
  w.u32(crc32(w.peek().data(), w.peek().size()));
  return w.take();
}

inline ModelFile parse_model(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0)
    throw BadMagicError("not a model file: magic bytes mismatch");
  if (bytes.size() < 16)
    throw TruncationError("model file holds only " + std::to_string(bytes.size()) + " bytes");
  detail::ByteReader r(bytes, bytes.size() - 4);
  r.str(4);  // magic
  ModelFile mf;
  mf.version = r.u32();
  if (mf.version != kModelFileVersion)
    throw BadVersionError("model file version " + std::to_string(mf.version) +
                          ", this build reads version " + std::to_string(kModelFileVersion));
  const std::uint32_t count = r.u32();
  mf.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ModelEntry e;
    const std::uint32_t name_len = r.u32();
    if (name_len == 0 || name_len > 4096)
      throw CorruptionError("entry " + std::to_string(i) + ": name length " +
                            std::to_string(name_len) + " out of range");
    e.name = r.str(name_len);
    const std::uint8_t tag = r.u8();
    if (tag > 2)
      throw CorruptionError("entry '" + e.name + "': unknown policy tag " + std::to_string(tag));
    e.tag = static_cast<ModelEntry::Tag>(tag);
    const std::uint32_t rank = r.u32();
    if (rank < 1 || rank > 4)
      throw CorruptionError("entry '" + e.name + "': rank " + std::to_string(rank) +
                            " out of range");
    e.shape.resize(rank);
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32();
      if (dim == 0 || dim > (1u << 28))
        throw CorruptionError("entry '" + e.name + "': dimension " + std::to_string(dim) +
                              " out of range");
      e.shape[d] = static_cast<int>(dim);
    }
    const std::int64_t numel = shape_numel(e.shape);
    if (e.tag == ModelEntry::Fp) {
      e.fp.shape = e.shape;
      e.fp.data.resize(static_cast<std::size_t>(numel));
      for (std::int64_t j = 0; j < numel; ++j) e.fp.data[static_cast<std::size_t>(j)] = r.f32();
    } else {
      const std::uint32_t t_ex = r.u32();
      if (t_ex < 1 || t_ex > 64)
        throw CorruptionError("entry '" + e.name + "': branch count " + std::to_string(t_ex) +
                              " out of range");
      if (e.tag == ModelEntry::Tern && t_ex != 1)
        throw CorruptionError("entry '" + e.name + "': plain ternary tag with " +
                              std::to_string(t_ex) + " branches");
      double prev_beta = 0.0;
      for (std::uint32_t k = 0; k < t_ex; ++k) {
        PackedTernary p;
        p.shape = e.shape;
        p.length = numel;
        p.beta = r.f32();
        p.alpha = r.f32();
        if (!(p.beta > 0.0f && p.beta < 1.0f))
          throw CorruptionError("entry '" + e.name + "': threshold fraction " +
                                std::to_string(p.beta) + " outside (0,1)");
        if (p.beta <= prev_beta)
          throw CorruptionError("entry '" + e.name +
                                "': branch threshold fractions not strictly increasing");
        prev_beta = p.beta;
        if (!(p.alpha >= 0.0f) || !std::isfinite(p.alpha))
          throw CorruptionError("entry '" + e.name + "': scale " + std::to_string(p.alpha) +
                                " invalid");
        const std::int64_t words = packed_word_count(numel);
        p.words.resize(static_cast<std::size_t>(words));
        for (std::int64_t j = 0; j < words; ++j) p.words[static_cast<std::size_t>(j)] = r.u32();
        unpack(p);  // rejects reserved code patterns and pad garbage eagerly
        e.packed.push_back(std::move(p));
      }
    }
    mf.entries.push_back(std::move(e));
  }
  if (!r.exhausted())
    throw CorruptionError("model file has " + std::to_string(bytes.size() - 4 - r.pos()) +
                          " unexpected trailing bytes before checksum");
  const std::uint32_t stored = static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
                               (static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8) |
                               (static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24);
  const std::uint32_t actual = crc32(bytes.data(), bytes.size() - 4);
  if (stored != actual) {
    std::ostringstream os;
    os << "model file checksum mismatch: stored " << std::hex << stored << ", computed "
       << actual;
    throw CrcError(os.str());
  }
  return mf;
}

inline void save_model_file(const std::string& path, const ModelFile& mf) {
  write_file_bytes(path, serialize_model(mf));
}

inline ModelFile load_model_file(const std::string& path) {
  return parse_model(read_file_bytes(path));
}

// ---- Bridges between files and live networks ----

inline const std::string& bn_name_of(const ModelGraph& g, int layer) {
  return g.layers[static_cast<std::size_t>(layer)].name;
}

// Full-precision snapshot of everything: weights, biases, norm statistics.
inline ModelFile snapshot_fp(const Network& net) {
  ModelFile mf;
  for (const ParamInfo& p : enumerate_params(net.graph)) {
    ModelEntry e;
    e.name = p.name;
    e.tag = ModelEntry::Fp;
    e.shape = p.shape;
    switch (p.kind) {
      case ParamInfo::ConvW:
      case ParamInfo::DenseW:
      case ParamInfo::Bias:
        e.fp = net.params.at(p.name);
        break;
      case ParamInfo::BnGamma:
        e.fp = net.bn.at(bn_name_of(net.graph, p.layer)).gamma;
        break;
      case ParamInfo::BnBeta:
        e.fp = net.bn.at(bn_name_of(net.graph, p.layer)).beta;
        break;
      case ParamInfo::BnMean:
        e.fp = net.bn.at(bn_name_of(net.graph, p.layer)).running_mean;
        break;
      case ParamInfo::BnVar:
        e.fp = net.bn.at(bn_name_of(net.graph, p.layer)).running_var;
        break;
    }
    mf.entries.push_back(std::move(e));
  }
  return mf;
}

// Packed snapshot: quantized weight layers become code entries, everything
// else stays full precision.
inline ModelFile snapshot_quantized(const Network& net, const QuantizedWeights& quant) {
  ModelFile mf = snapshot_fp(net);
  for (ModelEntry& e : mf.entries) {
    if (e.name.size() < 2 || e.name.substr(e.name.size() - 2) != ".w") continue;
    const std::string layer = e.name.substr(0, e.name.size() - 2);
    auto it = quant.branches.find(layer);
    if (it == quant.branches.end()) continue;
    e.tag = it->second.size() == 1 ? ModelEntry::Tern : ModelEntry::Rel;
    e.fp = Tensor<float>();
    e.packed.clear();
    for (const TernaryTensor& b : it->second) e.packed.push_back(pack(b));
  }
  return mf;
}

// Loads a file into a live network. Full-precision entries land in the
// network's parameters and norm state; packed entries land in *quant. Every
// parameter the graph declares must be covered. Shape conflicts and policy
// conflicts name the offending layer.
inline void bind_model_file(Network& net, const ModelFile& mf, QuantizedWeights* quant) {
  std::vector<ParamInfo> params = enumerate_params(net.graph);
  std::map<std::string, const ParamInfo*> by_name;
  for (const ParamInfo& p : params) by_name[p.name] = &p;
  std::map<std::string, bool> covered;
  for (const ParamInfo& p : params) covered[p.name] = false;

  for (const ModelEntry& e : mf.entries) {
    auto it = by_name.find(e.name);
    if (it == by_name.end())
      throw ParseError("checkpoint entry '" + e.name + "' has no place in architecture '" +
                       net.graph.arch + "'");
    const ParamInfo& p = *it->second;
    if (e.shape != p.shape)
      throw ParseError("checkpoint entry '" + e.name + "' has shape " + shape_str(e.shape) +
                       ", model wants " + shape_str(p.shape));
    const LayerSpec& layer = net.graph.layers[static_cast<std::size_t>(p.layer)];
    if (e.tag == ModelEntry::Fp) {
      switch (p.kind) {
        case ParamInfo::ConvW:
        case ParamInfo::DenseW:
        case ParamInfo::Bias:
          net.params.at(p.name) = e.fp;
          break;
        case ParamInfo::BnGamma:
          net.bn.at(layer.name).gamma = e.fp;
          break;
        case ParamInfo::BnBeta:
          net.bn.at(layer.name).beta = e.fp;
          break;
        case ParamInfo::BnMean:
          net.bn.at(layer.name).running_mean = e.fp;
          break;
        case ParamInfo::BnVar:
          net.bn.at(layer.name).running_var = e.fp;
          break;
      }
    } else {
      if (p.kind != ParamInfo::ConvW && p.kind != ParamInfo::DenseW)
        throw ParseError("checkpoint entry '" + e.name + "' is packed but is not a weight");
      if (!quant)
        throw ParseError("checkpoint entry '" + e.name +
                         "' is packed; this operation needs full-precision weights");
      if (layer.policy.kind != PolicyKind::Fp) {
        const bool want_rel = layer.policy.kind == PolicyKind::Rel;
        const bool have_rel = e.tag == ModelEntry::Rel;
        if (want_rel != have_rel ||
            (want_rel && layer.policy.betas.size() != e.packed.size()))
          throw ParseError("checkpoint entry '" + e.name +
                           "' quantization does not match the policy of layer '" + layer.name +
                           "'");
      }
      std::vector<TernaryTensor> branches;
      branches.reserve(e.packed.size());
      for (const PackedTernary& pk : e.packed) branches.push_back(unpack(pk));
      quant->branches[layer.name] = std::move(branches);
    }
    covered[e.name] = true;
  }
  for (const auto& [name, ok] : covered)
    if (!ok) throw ParseError("checkpoint is missing entry '" + name + "'");
}

// ---- Text weight dump import ----
// Escape hatch for weights exported from elsewhere. Line format:
//   tern-dump v1
//   <entry name> <rank> <dims...> <values...>
// Whitespace-separated, one entry per line, full-precision only.
inline void import_weight_dump(Network& net, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  std::string header;
  if (!std::getline(f, header) || header != "tern-dump v1")
    throw ParseError("'" + path + "': first line must be 'tern-dump v1'");
  ModelFile mf;
  std::string line;
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    ModelEntry e;
    int rank = 0;
    if (!(is >> e.name >> rank) || rank < 1 || rank > 4)
      throw ParseError("'" + path + "' line " + std::to_string(line_no) + ": bad entry header");
    e.shape.resize(static_cast<std::size_t>(rank));
    for (int d = 0; d < rank; ++d)
      if (!(is >> e.shape[static_cast<std::size_t>(d)]) || e.shape[static_cast<std::size_t>(d)] < 1)
        throw ParseError("'" + path + "' line " + std::to_string(line_no) + ": bad dimension");
    const std::int64_t numel = shape_numel(e.shape);
    e.fp.shape = e.shape;
    e.fp.data.resize(static_cast<std::size_t>(numel));
    for (std::int64_t i = 0; i < numel; ++i)
      if (!(is >> e.fp.data[static_cast<std::size_t>(i)]))
        throw ParseError("'" + path + "' line " + std::to_string(line_no) + ": expected " +
                         std::to_string(numel) + " values");
    float extra;
    if (is >> extra)
      throw ParseError("'" + path + "' line " + std::to_string(line_no) + ": trailing values");
    mf.entries.push_back(std::move(e));
  }
  bind_model_file(net, mf, nullptr);
}

}  // namespace tern
