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
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "recite/errors.hpp"
#include "recite/rng.hpp"
#include "recite/utf8.hpp"

namespace recite {

/// Label indices into the alphabet. Never contains the blank class.
using LabelSequence = std::vector<int>;

inline constexpr int kAlphabetSize = 45;
inline constexpr int kNumClasses = 46;   // 45 symbols + CTC blank
inline constexpr int kBlankIndex = 45;   // blank is the last class

/// The recognition alphabet: an ordered list of 45 distinct code points.
/// Loaded from a symbol-list file (one symbol per line, '#' lines ignored)
/// so the inventory stays auditable and swappable. The CTC blank is not a
/// member; it occupies the extra output class at index 45.
class Alphabet {
 public:
  static Alphabet load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw BadAlphabet("cannot open alphabet file: " + path);
    return parse(in);
  }

  static Alphabet parse(std::istream& in) {
    std::vector<char32_t> symbols;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const auto cps = utf8::decode(line);
      if (cps.size() != 1) {
        throw BadAlphabet("alphabet line must hold exactly one symbol, got \"" + line + "\"");
      }
      symbols.push_back(cps[0]);
    }
    return from_symbols(symbols);
  }

  static Alphabet from_symbols(const std::vector<char32_t>& symbols) {
    if (static_cast<int>(symbols.size()) != kAlphabetSize) {
      throw BadAlphabet("alphabet must hold exactly 45 symbols, got " +
                        std::to_string(symbols.size()));
    }
    Alphabet a;
    a.symbols_ = symbols;
    for (int i = 0; i < kAlphabetSize; ++i) {
      if (!a.index_.emplace(symbols[static_cast<std::size_t>(i)], i).second) {
        throw BadAlphabet("duplicate alphabet symbol at index " + std::to_string(i));
      }
    }
    std::string joined;
    for (char32_t cp : symbols) {
      utf8::append(joined, cp);
      joined.push_back('\n');
    }
    a.hash_ = fnv1a64(joined);
    return a;
  }

  int size() const { return kAlphabetSize; }
  int num_classes() const { return kNumClasses; }
  int blank_index() const { return kBlankIndex; }

  /// Fingerprint of the ordered symbol list; embedded in checkpoints and
  /// manifests so mismatched vocabularies are rejected instead of decoded.
  std::uint64_t hash() const { return hash_; }

  bool contains(char32_t cp) const { return index_.count(cp) != 0; }

  int index_of(char32_t cp) const {
    auto it = index_.find(cp);
    return it == index_.end() ? -1 : it->second;
  }

  char32_t symbol(int index) const {
    if (index < 0 || index >= kAlphabetSize) {
      throw IndexOutOfRange("label index " + std::to_string(index) +
                            " is outside the 45-symbol alphabet");
    }
    return symbols_[static_cast<std::size_t>(index)];
  }

  const std::vector<char32_t>& symbols() const { return symbols_; }

 private:
  std::vector<char32_t> symbols_;
  std::unordered_map<char32_t, int> index_;
  std::uint64_t hash_ = 0;
};

/// Arabic vocalization marks (tashkeel): fathatan..sukun, U+064B..U+0652.
/// These are the eight diacritic symbols of the default alphabet and the
/// token class used for the diacritic-substitution report.
inline bool is_arabic_diacritic(char32_t cp) { return cp >= 0x064B && cp <= 0x0652; }

/// Maps a transcript to label indices. Out-of-alphabet code points are a hard
/// error so corpus defects surface during preparation instead of silently
/// corrupting CTC targets.
inline LabelSequence encode(const std::string& text, const Alphabet& alphabet) {
  const auto cps = utf8::decode(text);
  LabelSequence labels;
  labels.reserve(cps.size());
  for (std::size_t pos = 0; pos < cps.size(); ++pos) {
    const int idx = alphabet.index_of(cps[pos]);
    if (idx < 0) {
      std::ostringstream msg;
      msg << "code point U+" << std::hex << std::uppercase << static_cast<std::uint32_t>(cps[pos])
          << std::dec << " at position " << pos << " is not in the alphabet";
      throw OutOfAlphabet(msg.str(), pos, cps[pos]);
    }
    labels.push_back(idx);
  }
  return labels;
}

/// Inverse of encode on its image. The blank index (45) is not decodable text.
inline std::string decode_labels(const LabelSequence& labels, const Alphabet& alphabet) {
  std::string out;
  for (int idx : labels) utf8::append(out, alphabet.symbol(idx));
  return out;
}

/// The Basmala sentence that opens most chapters. First-verse transcripts in
/// the corpus carry it even though the audio does not, so preparation strips it.
inline const std::string& basmala() {
  static const std::string kBasmala = "بِسْمِ اللَّهِ الرَّحْمَنِ الرَّحِيمِ";
  return kBasmala;
}

/// Collapses whitespace runs to single spaces, trims, and (optionally) removes
/// a leading Basmala. Idempotent.
inline std::string normalize_transcript(const std::string& raw, bool strip_basmala) {
  const auto cps = utf8::decode(raw);
  std::vector<char32_t> collapsed;
  collapsed.reserve(cps.size());
  bool pending_space = false;
  for (char32_t cp : cps) {
    const bool ws = (cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == 0x00A0);
    if (ws) {
      if (!collapsed.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      collapsed.push_back(U' ');
      pending_space = false;
    }
    collapsed.push_back(cp);
  }
  std::string text = utf8::encode(collapsed);
  if (strip_basmala) {
    const std::string& b = basmala();
    if (text.compare(0, b.size(), b) == 0) {
      std::size_t start = b.size();
      while (start < text.size() && text[start] == ' ') ++start;
      text.erase(0, start);
    }
  }
  return text;
}

}  // namespace recite
