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
#include <map>
#include <string>
#include <vector>

#include "recite/ctc.hpp"
#include "recite/errors.hpp"
#include "recite/tensor.hpp"
#include "recite/text_codec.hpp"

namespace recite {

struct DecodeCandidate {
  LabelSequence labels;
  std::string text;
  double log_prob = kNegInf;
};

struct BeamSearchResult {
  std::string text;
  double log_prob = kNegInf;
  std::vector<DecodeCandidate> candidates;  // sorted best-first
};

/// Best path: per-frame argmax, collapse consecutive repeats, drop blanks.
inline LabelSequence greedy_decode_labels(const Tensor& post, int blank = kBlankIndex) {
  if (post.rank() != 2 || post.dim(0) == 0) throw EmptyPosterior("greedy: empty posterior");
  const std::int64_t T = post.dim(0), C = post.dim(1);
  std::vector<int> path(static_cast<std::size_t>(T));
  for (std::int64_t t = 0; t < T; ++t) {
    int best = 0;
    double best_p = post.at(t, 0);
    for (std::int64_t k = 1; k < C; ++k) {
      if (post.at(t, k) > best_p) {
        best_p = post.at(t, k);
        best = static_cast<int>(k);
      }
    }
    path[static_cast<std::size_t>(t)] = best;
  }
  return ctc_detail::collapse_path(path, blank);
}

inline std::string greedy_decode(const Tensor& post, const Alphabet& alphabet) {
  return decode_labels(greedy_decode_labels(post, alphabet.blank_index()), alphabet);
}

/// Lexicon-free prefix beam search over linear posteriors. Per frame each
/// kept prefix is extended by blank, by a repeat of its last symbol, and by
/// every symbol; probability mass of identical prefixes merges, split into
/// blank-ending and symbol-ending components. Ties in the pruning order are
/// broken by lexicographic prefix comparison so results are deterministic.
/// `prune_threshold` skips symbol extensions whose frame probability is
/// below it (0 disables pruning, used by the oracle-equivalence tests).
inline std::vector<DecodeCandidate> prefix_beam_search_labels(const Tensor& post, int blank,
                                                              int beam_width,
                                                              double prune_threshold = 1e-6) {
  if (post.rank() != 2 || post.dim(0) == 0) throw EmptyPosterior("beam search: empty posterior");
  if (beam_width < 1) throw ShapeMismatch("beam search: beam_width must be >= 1");
  const std::int64_t T = post.dim(0), C = post.dim(1);

  struct Mass {
    double blank_end = kNegInf;    // log prob of paths ending in blank
    double symbol_end = kNegInf;   // log prob of paths ending in a symbol
    double total() const { return logaddexp(blank_end, symbol_end); }
  };
  using Beam = std::map<LabelSequence, Mass>;

  Beam beam;
  beam[{}] = Mass{0.0, kNegInf};  // empty prefix: certain before any frame

  std::vector<double> log_row(static_cast<std::size_t>(C));
  for (std::int64_t t = 0; t < T; ++t) {
    for (std::int64_t k = 0; k < C; ++k) {
      const double p = post.at(t, k);
      log_row[static_cast<std::size_t>(k)] = p > 0.0 ? std::log(p) : kNegInf;
    }
    Beam next;
    for (const auto& [prefix, mass] : beam) {
      const double total = mass.total();

      // stay on this prefix via blank
      {
        Mass& m = next[prefix];
        m.blank_end = logaddexp(m.blank_end, total + log_row[static_cast<std::size_t>(blank)]);
      }
      // stay on this prefix by repeating its last symbol without a blank
      if (!prefix.empty()) {
        const int last = prefix.back();
        if (post.at(t, last) >= prune_threshold && mass.symbol_end != kNegInf &&
            log_row[static_cast<std::size_t>(last)] != kNegInf) {
          Mass& m = next[prefix];
          m.symbol_end =
              logaddexp(m.symbol_end, mass.symbol_end + log_row[static_cast<std::size_t>(last)]);
        }
      }
      // grow the prefix by one symbol
      for (int c = 0; c < static_cast<int>(C); ++c) {
        if (c == blank) continue;
        if (post.at(t, c) < prune_threshold) continue;
        const double lp = log_row[static_cast<std::size_t>(c)];
        if (lp == kNegInf) continue;
        // a repeated symbol may only follow a blank-ending path
        const double source = (!prefix.empty() && prefix.back() == c) ? mass.blank_end : total;
        if (source == kNegInf) continue;
        LabelSequence grown = prefix;
        grown.push_back(c);
        Mass& m = next[grown];
        m.symbol_end = logaddexp(m.symbol_end, source + lp);
      }
    }

    // keep the top beam_width prefixes
    std::vector<Beam::iterator> order;
    order.reserve(next.size());
    for (auto it = next.begin(); it != next.end(); ++it) order.push_back(it);
    std::sort(order.begin(), order.end(), [](const Beam::iterator& a, const Beam::iterator& b) {
      const double sa = a->second.total(), sb = b->second.total();
      if (sa != sb) return sa > sb;
      return a->first < b->first;
    });
    Beam pruned;
    for (std::size_t i = 0; i < order.size() && i < static_cast<std::size_t>(beam_width); ++i) {
      if (order[i]->second.total() == kNegInf) break;  // impossible prefixes carry no mass
      pruned.insert(*order[i]);
    }
    beam = std::move(pruned);
  }

  std::vector<DecodeCandidate> out;
  out.reserve(beam.size());
  for (const auto& [prefix, mass] : beam) {
    DecodeCandidate c;
    c.labels = prefix;
    c.log_prob = mass.total();
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), [](const DecodeCandidate& a, const DecodeCandidate& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.labels < b.labels;
  });
  return out;
}

inline BeamSearchResult beam_search_decode(const Tensor& post, const Alphabet& alphabet,
                                           int beam_width, int top_k = 1,
                                           double prune_threshold = 1e-6) {
  auto candidates = prefix_beam_search_labels(post, alphabet.blank_index(), beam_width,
                                              prune_threshold);
  BeamSearchResult result;
  if (top_k < 1) top_k = 1;
  if (candidates.size() > static_cast<std::size_t>(top_k)) {
    candidates.resize(static_cast<std::size_t>(top_k));
  }
  for (auto& c : candidates) c.text = decode_labels(c.labels, alphabet);
  result.text = candidates.empty() ? std::string() : candidates.front().text;
  result.log_prob = candidates.empty() ? kNegInf : candidates.front().log_prob;
  result.candidates = std::move(candidates);
  return result;
}

}  // namespace recite
