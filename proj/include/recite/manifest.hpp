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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "recite/errors.hpp"
#include "recite/rng.hpp"
#include "recite/text_codec.hpp"
#include "recite/wav.hpp"

namespace recite {

inline constexpr int kManifestVersion = 1;

struct ManifestEntry {
  std::string id;          // "<reciter>/<chapter:3><verse:3>"
  std::string audio_path;  // absolute or root-relative path to the clip
  std::string reciter;
  int chapter = 0;
  int verse = 0;
  std::string text;        // normalized transcript
  double duration_s = 0.0;
};

struct RejectEntry {
  std::string id;
  std::string reason;
  std::string detail;
};

struct BuildResult {
  std::vector<ManifestEntry> entries;
  std::vector<RejectEntry> rejects;
};

/// 80/10/10 by default; sizes are floored and the remainder goes to train.
struct SplitSpec {
  double train_ratio = 0.8;
  double val_ratio = 0.1;
  double test_ratio = 0.1;
  std::uint64_t seed = 42;
};

struct Splits {
  std::vector<ManifestEntry> train, val, test;
};

// ---------------------------------------------------------------------------
// dataset scan

namespace ingest_detail {

/// Transcript file: one verse per line, "chapter|verse|text".
inline std::map<std::pair<int, int>, std::string> read_transcripts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingTranscripts("cannot open transcript file: " + path);
  std::map<std::pair<int, int>, std::string> table;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto p1 = line.find('|');
    const auto p2 = p1 == std::string::npos ? std::string::npos : line.find('|', p1 + 1);
    if (p2 == std::string::npos) {
      throw MissingTranscripts("transcript line " + std::to_string(lineno) +
                               " is not chapter|verse|text");
    }
    try {
      const int chapter = std::stoi(line.substr(0, p1));
      const int verse = std::stoi(line.substr(p1 + 1, p2 - p1 - 1));
      table[{chapter, verse}] = line.substr(p2 + 1);
    } catch (const std::exception&) {
      throw MissingTranscripts("transcript line " + std::to_string(lineno) +
                               " has a malformed chapter/verse number");
    }
  }
  return table;
}

inline bool parse_clip_stem(const std::string& stem, int& chapter, int& verse) {
  if (stem.size() != 6) return false;
  for (char c : stem) {
    if (c < '0' || c > '9') return false;
  }
  chapter = std::stoi(stem.substr(0, 3));
  verse = std::stoi(stem.substr(3, 3));
  return true;
}

}  // namespace ingest_detail

/// Scans `root/audio/<reciter>/<CCCVVV>.wav` against `root/transcripts.txt`,
/// normalizes transcripts (Basmala stripped on first-verse clips), and
/// rejects clips whose transcript is missing, empty after normalization, or
/// not covered by the alphabet. Entries come back sorted by id.
inline BuildResult build_manifest(const std::string& dataset_root, const Alphabet& alphabet) {
  namespace fs = std::filesystem;
  const fs::path root(dataset_root);
  const auto transcripts = ingest_detail::read_transcripts((root / "transcripts.txt").string());

  const fs::path audio_root = root / "audio";
  if (!fs::is_directory(audio_root)) {
    throw EmptyDataset("no audio/ directory under " + dataset_root);
  }

  BuildResult result;
  std::size_t clips_seen = 0;
  std::vector<fs::path> wavs;
  for (const auto& entry : fs::recursive_directory_iterator(audio_root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") wavs.push_back(entry.path());
  }
  std::sort(wavs.begin(), wavs.end());

  for (const auto& wav : wavs) {
    ++clips_seen;
    const std::string reciter = wav.parent_path().filename().string();
    const std::string stem = wav.stem().string();
    const std::string id = reciter + "/" + stem;
    int chapter = 0, verse = 0;
    if (!ingest_detail::parse_clip_stem(stem, chapter, verse)) {
      result.rejects.push_back({id, "bad_clip_name", "expected a 6-digit CCCVVV stem"});
      continue;
    }
    const auto it = transcripts.find({chapter, verse});
    if (it == transcripts.end()) {
      result.rejects.push_back({id, "no_transcript", "no transcript line for this verse"});
      continue;
    }
    const std::string text = normalize_transcript(it->second, /*strip_basmala=*/verse == 1);
    if (text.empty()) {
      result.rejects.push_back({id, "empty_transcript", "transcript empty after normalization"});
      continue;
    }
    try {
      encode(text, alphabet);
    } catch (const OutOfAlphabet& e) {
      result.rejects.push_back({id, "out_of_alphabet", e.what()});
      continue;
    }
    ManifestEntry entry;
    entry.id = id;
    entry.audio_path = wav.string();
    entry.reciter = reciter;
    entry.chapter = chapter;
    entry.verse = verse;
    entry.text = text;
    try {
      entry.duration_s = wav_duration_seconds(wav.string());
    } catch (const Error& e) {
      result.rejects.push_back({id, "bad_audio", e.what()});
      continue;
    }
    result.entries.push_back(std::move(entry));
  }
  if (clips_seen == 0) throw EmptyDataset("no .wav clips under " + audio_root.string());
  std::sort(result.entries.begin(), result.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
  return result;
}

// ---------------------------------------------------------------------------
// split

inline void check_ratios(const SplitSpec& spec) {
  if (spec.train_ratio < 0 || spec.val_ratio < 0 || spec.test_ratio < 0 ||
      std::fabs(spec.train_ratio + spec.val_ratio + spec.test_ratio - 1.0) > 1e-9) {
    throw BadRatios("split ratios must be non-negative and sum to 1");
  }
}

/// Seeded uniform shuffle, then a contiguous partition. Validation and test
/// sizes are floor(ratio * n); train absorbs the remainder, which reproduces
/// the published 12648/1581/1581 partition of 15810 clips.
inline Splits split_manifest(const std::vector<ManifestEntry>& entries, const SplitSpec& spec) {
  check_ratios(spec);
  if (entries.empty()) throw EmptyDataset("split: no manifest entries");
  std::vector<ManifestEntry> pool = entries;
  Rng rng(spec.seed);
  rng.shuffle(pool);
  const auto n = static_cast<std::int64_t>(pool.size());
  const auto n_val = static_cast<std::int64_t>(std::floor(spec.val_ratio * static_cast<double>(n)));
  const auto n_test = static_cast<std::int64_t>(std::floor(spec.test_ratio * static_cast<double>(n)));
  const std::int64_t n_train = n - n_val - n_test;
  Splits out;
  out.train.assign(pool.begin(), pool.begin() + n_train);
  out.val.assign(pool.begin() + n_train, pool.begin() + n_train + n_val);
  out.test.assign(pool.begin() + n_train + n_val, pool.end());
  return out;
}

/// Held-out-speaker variant: reciters (not clips) are shuffled and
/// partitioned, so no reciter spans two splits.
inline Splits split_manifest_by_reciter(const std::vector<ManifestEntry>& entries,
                                        const SplitSpec& spec) {
  check_ratios(spec);
  if (entries.empty()) throw EmptyDataset("split: no manifest entries");
  std::vector<std::string> reciters;
  for (const auto& e : entries) {
    if (std::find(reciters.begin(), reciters.end(), e.reciter) == reciters.end()) {
      reciters.push_back(e.reciter);
    }
  }
  std::sort(reciters.begin(), reciters.end());
  Rng rng(spec.seed);
  rng.shuffle(reciters);
  const auto n = static_cast<std::int64_t>(reciters.size());
  const auto n_val = static_cast<std::int64_t>(std::floor(spec.val_ratio * static_cast<double>(n)));
  const auto n_test = static_cast<std::int64_t>(std::floor(spec.test_ratio * static_cast<double>(n)));
  const std::int64_t n_train = n - n_val - n_test;
  auto bucket_of = [&](const std::string& reciter) {
    for (std::int64_t i = 0; i < n; ++i) {
      if (reciters[static_cast<std::size_t>(i)] == reciter) {
        return i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
      }
    }
    return 0;
  };
  Splits out;
  for (const auto& e : entries) {
    switch (bucket_of(e.reciter)) {
      case 0: out.train.push_back(e); break;
      case 1: out.val.push_back(e); break;
      default: out.test.push_back(e); break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// serialization (JSON lines; first line is the header record)

inline void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries,
                           std::uint64_t alphabet_hash, const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest: " + path);
  nlohmann::json header{{"format", "recite-manifest"},
                        {"version", kManifestVersion},
                        {"alphabet_hash", alphabet_hash},
                        {"config_hash", config_hash}};
  out << header.dump() << '\n';
  for (const auto& e : entries) {
    nlohmann::json j{{"id", e.id},          {"audio", e.audio_path}, {"reciter", e.reciter},
                     {"chapter", e.chapter}, {"verse", e.verse},      {"text", e.text},
                     {"duration_s", e.duration_s}};
    out << j.dump() << '\n';
  }
}

struct ManifestFile {
  std::uint64_t alphabet_hash = 0;
  std::string config_hash;
  std::vector<ManifestEntry> entries;
};

inline ManifestFile read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open manifest: " + path);
  ManifestFile m;
  std::string line;
  if (!std::getline(in, line)) throw Error("empty manifest: " + path);
  const auto header = nlohmann::json::parse(line);
  if (header.value("format", "") != "recite-manifest") {
    throw Error("not a manifest file: " + path);
  }
  m.alphabet_hash = header.value("alphabet_hash", std::uint64_t{0});
  m.config_hash = header.value("config_hash", "");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.audio_path = j.at("audio").get<std::string>();
    e.reciter = j.value("reciter", "");
    e.chapter = j.value("chapter", 0);
    e.verse = j.value("verse", 0);
    e.text = j.at("text").get<std::string>();
    e.duration_s = j.value("duration_s", 0.0);
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline void write_rejects(const std::string& path, const std::vector<RejectEntry>& rejects) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write rejects file: " + path);
  for (const auto& r : rejects) {
    nlohmann::json j{{"id", r.id}, {"reason", r.reason}, {"detail", r.detail}};
    out << j.dump() << '\n';
  }
}

}  // namespace recite
