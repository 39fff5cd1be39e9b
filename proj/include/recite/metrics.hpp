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
#include <string>
#include <vector>

#include "recite/errors.hpp"
#include "recite/text_codec.hpp"
#include "recite/utf8.hpp"

namespace recite {

enum class EditOpKind { Match, Substitute, Delete, Insert };

inline const char* to_string(EditOpKind k) {
  switch (k) {
    case EditOpKind::Match: return "match";
    case EditOpKind::Substitute: return "substitute";
    case EditOpKind::Delete: return "delete";
    case EditOpKind::Insert: return "insert";
  }
  return "?";
}

/// One step of the minimum edit script. Positions are token indices;
/// -1 where the op has no position on that side (insert has no ref_pos,
/// delete has no hyp_pos).
struct EditOp {
  EditOpKind kind = EditOpKind::Match;
  int ref_pos = -1;
  int hyp_pos = -1;
  std::string ref_token;
  std::string hyp_token;
};

struct AlignmentCounts {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int matches = 0;
  std::vector<EditOp> ops;

  int total_errors() const { return substitutions + deletions + insertions; }
};

/// Levenshtein alignment with unit costs. The backtrace prefers
/// match > substitute > delete > insert so the op list is deterministic.
inline AlignmentCounts align(const std::vector<std::string>& ref,
                             const std::vector<std::string>& hyp) {
  if (ref.empty()) throw EmptyReference("align: reference token list is empty");
  const std::size_t R = ref.size(), H = hyp.size();
  std::vector<std::vector<int>> dp(R + 1, std::vector<int>(H + 1, 0));
  for (std::size_t i = 0; i <= R; ++i) dp[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= H; ++j) dp[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= R; ++i) {
    for (std::size_t j = 1; j <= H; ++j) {
      const int sub = dp[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const int del = dp[i - 1][j] + 1;
      const int ins = dp[i][j - 1] + 1;
      dp[i][j] = std::min(sub, std::min(del, ins));
    }
  }

  AlignmentCounts out;
  std::size_t i = R, j = H;
  std::vector<EditOp> rev;
  while (i > 0 || j > 0) {
    EditOp op;
    if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] && dp[i][j] == dp[i - 1][j - 1]) {
      op.kind = EditOpKind::Match;
      op.ref_pos = static_cast<int>(i - 1);
      op.hyp_pos = static_cast<int>(j - 1);
      op.ref_token = ref[i - 1];
      op.hyp_token = hyp[j - 1];
      --i;
      --j;
    } else if (i > 0 && j > 0 && dp[i][j] == dp[i - 1][j - 1] + 1) {
      op.kind = EditOpKind::Substitute;
      op.ref_pos = static_cast<int>(i - 1);
      op.hyp_pos = static_cast<int>(j - 1);
      op.ref_token = ref[i - 1];
      op.hyp_token = hyp[j - 1];
      --i;
      --j;
    } else if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
      op.kind = EditOpKind::Delete;
      op.ref_pos = static_cast<int>(i - 1);
      op.ref_token = ref[i - 1];
      --i;
    } else {
      op.kind = EditOpKind::Insert;
      op.hyp_pos = static_cast<int>(j - 1);
      op.hyp_token = hyp[j - 1];
      --j;
    }
    rev.push_back(std::move(op));
  }
  out.ops.assign(rev.rbegin(), rev.rend());
  for (const auto& op : out.ops) {
    switch (op.kind) {
      case EditOpKind::Match: ++out.matches; break;
      case EditOpKind::Substitute: ++out.substitutions; break;
      case EditOpKind::Delete: ++out.deletions; break;
      case EditOpKind::Insert: ++out.insertions; break;
    }
  }
  return out;
}

/// Applies an edit script to the reference; returns the reconstructed
/// hypothesis. Alignment soundness means this reproduces hyp exactly.
inline std::vector<std::string> replay_ops(const std::vector<std::string>& ref,
                                           const std::vector<EditOp>& ops) {
  std::vector<std::string> out;
  std::size_t next_ref = 0;
  for (const auto& op : ops) {
    switch (op.kind) {
      case EditOpKind::Match:
        out.push_back(ref.at(next_ref++));
        break;
      case EditOpKind::Substitute:
        out.push_back(op.hyp_token);
        ++next_ref;
        break;
      case EditOpKind::Delete:
        ++next_ref;
        break;
      case EditOpKind::Insert:
        out.push_back(op.hyp_token);
        break;
    }
  }
  return out;
}

inline std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    if (ch == ' ') {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

inline std::vector<std::string> split_chars(const std::string& text) {
  std::vector<std::string> tokens;
  for (char32_t cp : utf8::decode(text)) tokens.push_back(utf8::encode(cp));
  return tokens;
}

/// Word Error Rate: (S + D + I) / N over whitespace tokens. May exceed 1.
inline double wer(const std::string& ref_text, const std::string& hyp_text) {
  const auto ref = split_words(ref_text);
  if (ref.empty()) throw EmptyReference("wer: reference has no words");
  const auto counts = align(ref, split_words(hyp_text));
  return static_cast<double>(counts.total_errors()) / static_cast<double>(ref.size());
}

/// Character Error Rate: (S + D + I) / M over code points (spaces and
/// diacritics included).
inline double cer(const std::string& ref_text, const std::string& hyp_text) {
  const auto ref = split_chars(ref_text);
  if (ref.empty()) throw EmptyReference("cer: reference has no characters");
  const auto counts = align(ref, split_chars(hyp_text));
  return static_cast<double>(counts.total_errors()) / static_cast<double>(ref.size());
}

struct LevelReport {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int matches = 0;
  int ref_len = 0;
  double rate = 0.0;
  std::vector<EditOp> ops;
};

/// Word- and character-level alignment plus the diacritic-substitution
/// sublist: character substitutions where both sides are vocalization marks,
/// the verifiable core of pronunciation-rule feedback.
struct ErrorReport {
  LevelReport word;
  LevelReport character;
  std::vector<EditOp> diacritic_substitutions;
};

namespace metrics_detail {

inline LevelReport level_report(const std::vector<std::string>& ref,
                                const std::vector<std::string>& hyp) {
  auto counts = align(ref, hyp);
  LevelReport rep;
  rep.substitutions = counts.substitutions;
  rep.deletions = counts.deletions;
  rep.insertions = counts.insertions;
  rep.matches = counts.matches;
  rep.ref_len = static_cast<int>(ref.size());
  rep.rate = static_cast<double>(counts.total_errors()) / static_cast<double>(ref.size());
  rep.ops = std::move(counts.ops);
  return rep;
}

inline bool is_diacritic_token(const std::string& token) {
  const auto cps = utf8::decode(token);
  return cps.size() == 1 && is_arabic_diacritic(cps[0]);
}

}  // namespace metrics_detail

inline ErrorReport error_report(const std::string& ref_text, const std::string& hyp_text) {
  ErrorReport report;
  const auto ref_words = split_words(ref_text);
  if (ref_words.empty()) throw EmptyReference("error report: reference has no words");
  report.word = metrics_detail::level_report(ref_words, split_words(hyp_text));
  report.character = metrics_detail::level_report(split_chars(ref_text), split_chars(hyp_text));
  for (const auto& op : report.character.ops) {
    if (op.kind == EditOpKind::Substitute && metrics_detail::is_diacritic_token(op.ref_token) &&
        metrics_detail::is_diacritic_token(op.hyp_token)) {
      report.diacritic_substitutions.push_back(op);
    }
  }
  return report;
}

}  // namespace recite
