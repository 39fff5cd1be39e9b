// Copyright 2026 recite-ctc contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "recite/config.hpp"
#include "recite/errors.hpp"
#include "recite/network.hpp"
#include "recite/text_codec.hpp"

namespace recite {

/// Checkpoint container. Little-endian layout:
///   magic "RCTCKPT1" | u32 version | u64 alphabet_hash |
///   u64 config_len | canonical config text |
///   u32 tensor_count | per tensor: u32 name_len, name, u32 rank,
///   u64 dims[rank], f32 data (row-major).
/// Weights are stored in 32-bit; load -> save round-trips bit-exactly.
struct Checkpoint {
  ModelParams params;
  std::uint64_t alphabet_hash = 0;
  std::string config_text;
};

namespace ckpt_detail {

inline constexpr char kMagic[8] = {'R', 'C', 'T', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kVersion = 1;

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw BadCheckpoint("truncated checkpoint");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw BadCheckpoint("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline float get_f32(std::istream& in) {
  const std::uint32_t bits = get_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace ckpt_detail

inline void save_checkpoint(const std::string& path, const ModelParams& params,
                            std::uint64_t alphabet_hash, const std::string& config_text) {
  namespace d = ckpt_detail;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path);
  out.write(d::kMagic, 8);
  d::put_u32(out, d::kVersion);
  d::put_u64(out, alphabet_hash);
  d::put_u64(out, config_text.size());
  out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  d::put_u32(out, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, tensor] : params.tensors) {
    d::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    d::put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (int i = 0; i < tensor.rank(); ++i) d::put_u64(out, static_cast<std::uint64_t>(tensor.dim(i)));
    for (std::int64_t i = 0; i < tensor.size(); ++i) d::put_f32(out, static_cast<float>(tensor[i]));
  }
  if (!out) throw Error("failed writing checkpoint: " + path);
}

/// Refuses checkpoints whose alphabet differs from the one in use; decoding
/// against the wrong symbol table would silently produce garbage text.
inline void ensure_alphabet(const Checkpoint& ckpt, const Alphabet& alphabet,
                            const std::string& origin = "checkpoint") {
  if (ckpt.alphabet_hash != alphabet.hash()) {
    throw AlphabetMismatch(origin + " was written with a different alphabet (hash " +
                           std::to_string(ckpt.alphabet_hash) + " vs " +
                           std::to_string(alphabet.hash()) + ")");
  }
}

inline Checkpoint load_checkpoint(const std::string& path) {
  namespace d = ckpt_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BadCheckpoint("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, d::kMagic, 8) != 0) {
    throw BadCheckpoint("bad checkpoint magic: " + path);
  }
  const std::uint32_t version = d::get_u32(in);
  if (version != d::kVersion) {
    throw BadCheckpoint("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.alphabet_hash = d::get_u64(in);
  const std::uint64_t config_len = d::get_u64(in);
  ckpt.config_text.resize(config_len);
  in.read(ckpt.config_text.data(), static_cast<std::streamsize>(config_len));
  if (!in) throw BadCheckpoint("truncated checkpoint config block: " + path);

  {
    std::istringstream cfg_stream(ckpt.config_text);
    ckpt.params.config = Config::parse(cfg_stream).model();
  }

  const std::uint32_t count = d::get_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = d::get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rank = d::get_u32(in);
    std::vector<std::int64_t> dims(rank);
    for (std::uint32_t r = 0; r < rank; ++r) dims[r] = static_cast<std::int64_t>(d::get_u64(in));
    Tensor t(dims);
    for (std::int64_t j = 0; j < t.size(); ++j) t[j] = static_cast<double>(d::get_f32(in));
    if (!in) throw BadCheckpoint("truncated tensor data: " + path);
    ckpt.params.tensors[name] = std::move(t);
  }
  return ckpt;
}

}  // namespace recite
