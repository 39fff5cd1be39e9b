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

#include <string>

#include <json.hpp>

#include "recite/metrics.hpp"

namespace recite {

inline nlohmann::json to_json(const EditOp& op) {
  nlohmann::json j{{"kind", to_string(op.kind)}};
  if (op.ref_pos >= 0) j["ref_pos"] = op.ref_pos;
  if (op.hyp_pos >= 0) j["hyp_pos"] = op.hyp_pos;
  if (!op.ref_token.empty()) j["ref"] = op.ref_token;
  if (!op.hyp_token.empty()) j["hyp"] = op.hyp_token;
  return j;
}

inline nlohmann::json to_json(const LevelReport& level, bool include_matches) {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& op : level.ops) {
    if (!include_matches && op.kind == EditOpKind::Match) continue;
    ops.push_back(to_json(op));
  }
  return nlohmann::json{{"substitutions", level.substitutions},
                        {"deletions", level.deletions},
                        {"insertions", level.insertions},
                        {"matches", level.matches},
                        {"ref_len", level.ref_len},
                        {"rate", level.rate},
                        {"ops", ops}};
}

/// One line-delimited record per utterance. Matches are kept in the op lists
/// so the edit script replays to the hypothesis.
inline nlohmann::json report_record(const std::string& id, const ErrorReport& report) {
  nlohmann::json diacritics = nlohmann::json::array();
  for (const auto& op : report.diacritic_substitutions) diacritics.push_back(to_json(op));
  return nlohmann::json{{"id", id},
                        {"word", to_json(report.word, /*include_matches=*/true)},
                        {"char", to_json(report.character, /*include_matches=*/true)},
                        {"diacritic_substitutions", diacritics},
                        {"wer", report.word.rate},
                        {"cer", report.character.rate}};
}

}  // namespace recite
