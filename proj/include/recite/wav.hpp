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
#include <string>
#include <vector>

#include "recite/errors.hpp"

namespace recite {

/// Mono PCM signal in [-1, 1].
struct PcmSignal {
  std::vector<double> samples;
  int sample_rate = 0;
};

namespace wav_detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  int bits = 0;
  std::uint16_t format = 0;
  std::size_t data_offset = 0;
  std::size_t data_size = 0;
};

/// Walks the RIFF chunk list; validates fmt and locates data.
inline WavInfo parse_header(const std::vector<unsigned char>& bytes, const std::string& path) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw CorruptHeader("not a RIFF/WAVE file: " + path);
  }
  WavInfo info;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    char id[5] = {0};
    std::memcpy(id, bytes.data() + pos, 4);
    const std::uint32_t chunk_size = read_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (std::strncmp(id, "fmt ", 4) == 0) {
      if (body + 16 > bytes.size()) throw CorruptHeader("truncated fmt chunk: " + path);
      info.format = read_u16(bytes.data() + body);
      info.channels = read_u16(bytes.data() + body + 2);
      info.sample_rate = static_cast<int>(read_u32(bytes.data() + body + 4));
      info.bits = read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::strncmp(id, "data", 4) == 0) {
      info.data_offset = body;
      info.data_size = std::min<std::size_t>(chunk_size, bytes.size() - body);
      if (!have_fmt) throw CorruptHeader("data chunk precedes fmt chunk: " + path);
      return info;
    }
    pos = body + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }
  if (!have_fmt) throw CorruptHeader("missing fmt chunk: " + path);
  throw CorruptHeader("missing data chunk: " + path);
}

}  // namespace wav_detail

/// Loads a 16-bit PCM RIFF/WAVE file. Stereo is downmixed by per-sample
/// channel average; integer samples are scaled by 1/32768.
inline PcmSignal load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptHeader("cannot open WAV file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const auto info = wav_detail::parse_header(bytes, path);
  if (info.format != 1) {
    throw UnsupportedFormat("WAV codec " + std::to_string(info.format) +
                            " is not PCM: " + path);
  }
  if (info.bits != 16) {
    throw UnsupportedFormat("WAV bit depth " + std::to_string(info.bits) +
                            " (need 16): " + path);
  }
  if (info.channels != 1 && info.channels != 2) {
    throw UnsupportedFormat("WAV has " + std::to_string(info.channels) +
                            " channels (need 1 or 2): " + path);
  }
  const std::size_t frame_bytes = static_cast<std::size_t>(info.channels) * 2;
  const std::size_t num_frames = info.data_size / frame_bytes;
  PcmSignal sig;
  sig.sample_rate = info.sample_rate;
  sig.samples.resize(num_frames);
  const unsigned char* p = bytes.data() + info.data_offset;
  for (std::size_t i = 0; i < num_frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < info.channels; ++c) {
      const std::uint16_t raw = wav_detail::read_u16(p + i * frame_bytes + static_cast<std::size_t>(c) * 2);
      acc += static_cast<double>(static_cast<std::int16_t>(raw));
    }
    sig.samples[i] = acc / info.channels / 32768.0;
  }
  return sig;
}

/// Duration in seconds straight from the header, without decoding samples.
inline double wav_duration_seconds(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptHeader("cannot open WAV file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const auto info = wav_detail::parse_header(bytes, path);
  if (info.sample_rate <= 0 || info.channels <= 0 || info.bits <= 0) {
    throw CorruptHeader("degenerate fmt chunk: " + path);
  }
  const double bytes_per_second =
      static_cast<double>(info.sample_rate) * info.channels * (info.bits / 8);
  return static_cast<double>(info.data_size) / bytes_per_second;
}

/// Writes a mono 16-bit PCM WAV. Values are clipped to [-1, 1].
inline void write_wav(const std::string& path, const std::vector<double>& samples,
                      int sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write WAV file: " + path);
  const std::uint32_t data_size = static_cast<std::uint32_t>(samples.size() * 2);
  auto put_u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  auto put_u16 = [&](std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
  };
  out.write("RIFF", 4);
  put_u32(36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<std::uint32_t>(sample_rate));
  put_u32(static_cast<std::uint32_t>(sample_rate) * 2);
  put_u16(2);
  put_u16(16);
  out.write("data", 4);
  put_u32(data_size);
  for (double v : samples) {
    double clipped = v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
    const auto s = static_cast<std::int16_t>(clipped * 32767.0);
    put_u16(static_cast<std::uint16_t>(s));
  }
}

}  // namespace recite
