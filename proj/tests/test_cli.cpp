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

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "recite/metrics.hpp"
#include "recite/text_codec.hpp"
#include "recite/wav.hpp"
#include "testutil.hpp"

using nlohmann::json;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string out;
};

std::string tool_path() {
  if (const char* env = std::getenv("RECITE_BIN")) return env;
  return "./recite";
}

/// Runs the CLI, capturing stdout; stderr goes to a scratch file.
CmdResult run_cli(const std::string& args) {
  const std::string cmd = tool_path() + " " + args + " 2>/tmp/recite-cli-stderr.log";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CmdResult result;
  char buffer[4096];
  std::size_t n;
  while ((n = fread(buffer, 1, sizeof(buffer), pipe)) > 0) result.out.append(buffer, n);
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::vector<json> parse_records(const std::string& out) {
  std::vector<json> records;
  std::istringstream in(out);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) records.push_back(json::parse(line));
  }
  return records;
}

void write_tone_word_wav(const std::string& path, const std::string& text,
                         const recite::Alphabet& alphabet, int rate = 8000) {
  std::vector<double> samples(static_cast<std::size_t>(0.06 * rate), 0.0);
  for (char32_t cp : recite::utf8::decode(text)) {
    if (cp == U' ') {
      samples.insert(samples.end(), static_cast<std::size_t>(0.12 * rate), 0.0);
      continue;
    }
    const double freq = 300.0 + 120.0 * alphabet.index_of(cp);
    const auto n = static_cast<std::size_t>(0.12 * rate);
    for (std::size_t i = 0; i < n; ++i) {
      samples.push_back(0.5 * std::sin(2.0 * 3.14159265358979323846 * freq *
                                       static_cast<double>(i) / rate));
    }
    samples.insert(samples.end(), static_cast<std::size_t>(0.02 * rate), 0.0);
  }
  samples.insert(samples.end(), static_cast<std::size_t>(0.06 * rate), 0.0);
  recite::write_wav(path, samples, rate);
}

std::filesystem::path make_dataset(const std::string& name, bool with_defect) {
  const auto root = testutil::fresh_dir(name);
  namespace fs = std::filesystem;
  const recite::Alphabet alphabet = recite::Alphabet::load(testutil::alphabet_path());
  fs::create_directories(root / "audio" / "R1");
  fs::create_directories(root / "audio" / "R2");
  const std::string v1 = "بت سر";
  const std::string v2 = "مب تر";
  {
    std::ofstream t((root / "transcripts.txt").string(), std::ios::binary);
    t << "1|1|" << recite::basmala() << " " << v1 << "\n";
    t << "1|2|" << v2 << "\n";
    if (with_defect) t << "1|3|bad latin text\n";
  }
  write_tone_word_wav((root / "audio/R1/001001.wav").string(), v1, alphabet);
  write_tone_word_wav((root / "audio/R1/001002.wav").string(), v2, alphabet);
  write_tone_word_wav((root / "audio/R2/001001.wav").string(), v1, alphabet);
  write_tone_word_wav((root / "audio/R2/001002.wav").string(), v2, alphabet);
  if (with_defect) {
    write_tone_word_wav((root / "audio/R2/001003.wav").string(), v1, alphabet);
  }
  return root;
}

std::string shared_run_dir() {
  static std::string dir = testutil::fresh_dir("cli-train").string();
  return dir;
}

std::string tiny_config_path();

/// Trains the shared tiny checkpoint once; later test cases reuse it.
std::string shared_checkpoint() {
  const std::string ckpt = shared_run_dir() + "/best.ckpt";
  if (std::filesystem::exists(ckpt)) return ckpt;
  const auto root = make_dataset("cli-train-data", /*with_defect=*/false);
  const auto prep = testutil::fresh_dir("cli-train-prep");
  REQUIRE(run_cli("prepare " + root.string() + " " + prep.string() + " --alphabet " +
                  testutil::alphabet_path())
              .exit_code == 0);
  const auto trained =
      run_cli("train " + (prep / "manifest.jsonl").string() + " " +
              (prep / "manifest.jsonl").string() + " --config " + tiny_config_path() +
              " --out " + shared_run_dir() + " --alphabet " + testutil::alphabet_path());
  REQUIRE(trained.exit_code == 0);
  REQUIRE(std::filesystem::exists(ckpt));
  return ckpt;
}

/// Tiny config shared by the CLI train/decode/eval tests.
std::string tiny_config_path() {
  static std::string path = [] {
    const auto dir = testutil::fresh_dir("cli-config");
    const std::string p = (dir / "tiny.ini").string();
    std::ofstream out(p);
    out << "[features]\nfft_size = 128\nhop_size = 64\n"
        << "[model]\nconv_layers = 1\nconv0_kernel = 5x9\nconv0_stride = 2x2\n"
        << "conv0_filters = 2\nnum_gru_layers = 1\ngru_units = 6\ndense_units = 8\n"
        << "dropout_rate = 0\n"
        << "[train]\nepochs = 2\nbatch_size = 2\nseed = 9\n";
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("prepare scans a tree into manifest, splits, rejects, and audit") {
  const auto root = make_dataset("cli-prepare", /*with_defect=*/false);
  const auto out_dir = testutil::fresh_dir("cli-prepare-out");
  const auto res = run_cli("prepare " + root.string() + " " + out_dir.string() + " --alphabet " +
                           testutil::alphabet_path());
  CHECK(res.exit_code == 0);
  for (const char* f : {"manifest.jsonl", "train.jsonl", "val.jsonl", "test.jsonl",
                        "rejects.jsonl", "audit.json", "resolved_config.ini"}) {
    INFO(f);
    CHECK(std::filesystem::exists(out_dir / f));
  }
  std::ifstream audit((out_dir / "audit.json").string());
  const json a = json::parse(audit);
  CHECK(a["entries"] == 4);
  CHECK(a["rejects"] == 0);
}

TEST_CASE("prepare exits 2 in strict mode when clips are rejected") {
  const auto root = make_dataset("cli-strict", /*with_defect=*/true);
  const auto out_dir = testutil::fresh_dir("cli-strict-out");
  const auto relaxed = run_cli("prepare " + root.string() + " " + out_dir.string() +
                               " --alphabet " + testutil::alphabet_path());
  CHECK(relaxed.exit_code == 0);
  const auto strict = run_cli("prepare " + root.string() + " " + out_dir.string() + " --strict" +
                              " --alphabet " + testutil::alphabet_path());
  CHECK(strict.exit_code == 2);
}

TEST_CASE("prepare fails loudly on an unreadable root") {
  const auto out_dir = testutil::fresh_dir("cli-noroot-out");
  const auto res = run_cli("prepare /nonexistent/nowhere " + out_dir.string() + " --alphabet " +
                           testutil::alphabet_path());
  CHECK(res.exit_code != 0);
}

TEST_CASE("train then decode: deterministic records with provenance header") {
  const auto root = make_dataset("cli-flow", /*with_defect=*/false);
  const std::string ckpt = shared_checkpoint();
  CHECK(std::filesystem::exists(shared_run_dir() + "/final.ckpt"));
  CHECK(std::filesystem::exists(shared_run_dir() + "/train_log.jsonl"));

  const std::string wav = (root / "audio/R1/001001.wav").string();
  const auto d1 = run_cli("decode " + ckpt + " " + wav + " --beam-width 8 --alphabet " +
                          testutil::alphabet_path());
  const auto d2 = run_cli("decode " + ckpt + " " + wav + " --beam-width 8 --alphabet " +
                          testutil::alphabet_path());
  CHECK(d1.exit_code == 0);
  CHECK(d1.out == d2.out);  // byte-identical reruns
  const auto records = parse_records(d1.out);
  REQUIRE(records.size() == 2);
  CHECK(records[0]["format"] == "recite-decode");
  CHECK(records[0].contains("config_hash"));
  CHECK(records[0].contains("alphabet_hash"));
  CHECK(records[1]["id"] == "001001");
  CHECK(records[1].contains("text"));
  CHECK(records[1].contains("score"));

  // greedy mode runs and stays deterministic too
  const auto g1 = run_cli("decode " + ckpt + " " + wav + " --greedy --alphabet " +
                          testutil::alphabet_path());
  const auto g2 = run_cli("decode " + ckpt + " " + wav + " --greedy --alphabet " +
                          testutil::alphabet_path());
  CHECK(g1.exit_code == 0);
  CHECK(g1.out == g2.out);
}

TEST_CASE("decode on a manifest emits one record per utterance in order") {
  const auto prep = testutil::fresh_dir("cli-flow-prep2");
  const auto root = make_dataset("cli-flow2", /*with_defect=*/false);
  REQUIRE(run_cli("prepare " + root.string() + " " + prep.string() + " --alphabet " +
                  testutil::alphabet_path())
              .exit_code == 0);
  const std::string ckpt = shared_checkpoint();

  const auto res = run_cli("decode " + ckpt + " " + (prep / "manifest.jsonl").string() +
                           " --greedy --alphabet " + testutil::alphabet_path());
  REQUIRE(res.exit_code == 0);
  const auto records = parse_records(res.out);
  REQUIRE(records.size() == 5);  // header + 4 utterances
  CHECK(records[1]["id"] == "R1/001001");
  CHECK(records[2]["id"] == "R1/001002");
  CHECK(records[3]["id"] == "R2/001001");
  CHECK(records[4]["id"] == "R2/001002");
}

TEST_CASE("a checkpoint trained on a different alphabet is rejected with exit 2") {
  const std::string ckpt = shared_checkpoint();
  // craft an alternative 45-symbol alphabet file
  const auto dir = testutil::fresh_dir("cli-alpha");
  const std::string other = (dir / "other.txt").string();
  {
    std::ofstream out(other, std::ios::binary);
    for (char c = 'a'; c <= 'z'; ++c) out << c << "\n";
    for (char c = 'A'; c <= 'S'; ++c) out << c << "\n";
  }
  const auto root = make_dataset("cli-alpha-data", false);
  const auto res = run_cli("decode " + ckpt + " " + (root / "audio/R1/001001.wav").string() +
                           " --alphabet " + other);
  CHECK(res.exit_code == 2);
}

TEST_CASE("eval reports pooled rates and replay-sound per-utterance ops") {
  const auto prep = testutil::fresh_dir("cli-eval-prep");
  const auto root = make_dataset("cli-eval", /*with_defect=*/false);
  REQUIRE(run_cli("prepare " + root.string() + " " + prep.string() + " --alphabet " +
                  testutil::alphabet_path())
              .exit_code == 0);
  const std::string ckpt = shared_checkpoint();
  const auto res = run_cli("eval " + ckpt + " " + (prep / "manifest.jsonl").string() +
                           " --greedy --alphabet " + testutil::alphabet_path());
  REQUIRE(res.exit_code == 0);
  const auto records = parse_records(res.out);
  REQUIRE(records.size() >= 3);  // header + 4 utterances + summary
  const json summary = records.back();
  REQUIRE(summary.value("summary", false));
  CHECK(summary["utterances"] == 4);
  // pooled rates: total errors over total reference size
  CHECK(summary["wer"].get<double>() ==
        Catch::Approx(summary["word_errors"].get<double>() /
                      summary["word_total"].get<double>()));

  // replay the char-level ops of every record onto its reference
  for (std::size_t i = 1; i + 1 < records.size(); ++i) {
    const json& rec = records[i];
    const std::string ref = rec["ref"];
    const std::string hyp = rec["hyp"];
    std::vector<recite::EditOp> ops;
    for (const auto& j : rec["char"]["ops"]) {
      recite::EditOp op;
      const std::string kind = j["kind"];
      op.kind = kind == "match" ? recite::EditOpKind::Match
                : kind == "substitute" ? recite::EditOpKind::Substitute
                : kind == "delete" ? recite::EditOpKind::Delete
                                   : recite::EditOpKind::Insert;
      op.ref_token = j.value("ref", "");
      op.hyp_token = j.value("hyp", "");
      ops.push_back(op);
    }
    const auto rebuilt = recite::replay_ops(recite::split_chars(ref), ops);
    std::string joined;
    for (const auto& tok : rebuilt) joined += tok;
    REQUIRE(joined == hyp);
  }
}

TEST_CASE("diff compares id-aligned text files") {
  const auto dir = testutil::fresh_dir("cli-diff");
  const std::string ref = (dir / "ref.txt").string();
  const std::string hyp = (dir / "hyp.txt").string();
  {
    std::ofstream r(ref), h(hyp);
    r << "u1\tabc\nu2\txyz w\n";
    h << "u1\taxc\nu2\txyz w\n";
  }
  const auto res = run_cli("diff " + ref + " " + hyp);
  REQUIRE(res.exit_code == 0);
  const auto records = parse_records(res.out);
  REQUIRE(records.size() == 3);
  CHECK(records[0]["id"] == "u1");
  CHECK(records[0]["char"]["substitutions"] == 1);
  const auto& ops = records[0]["char"]["ops"];
  bool found = false;
  for (const auto& op : ops) {
    if (op["kind"] == "substitute") {
      CHECK(op["ref_pos"] == 1);
      CHECK(op["ref"] == "b");
      CHECK(op["hyp"] == "x");
      found = true;
    }
  }
  CHECK(found);
  CHECK(records[1]["cer"] == 0.0);
  CHECK(records[2]["wer"].get<double>() == Catch::Approx(1.0 / 3.0));

  // identical files: all-zero reports
  const auto same = run_cli("diff " + ref + " " + ref);
  REQUIRE(same.exit_code == 0);
  const auto same_records = parse_records(same.out);
  CHECK(same_records.back()["wer"] == 0.0);
  CHECK(same_records.back()["cer"] == 0.0);

  // mismatched ids exit 2 and name the culprit
  const std::string bad = (dir / "bad.txt").string();
  {
    std::ofstream b(bad);
    b << "u1\tabc\nuX\txyz w\n";
  }
  const auto mismatch = run_cli("diff " + ref + " " + bad);
  CHECK(mismatch.exit_code == 2);
}

TEST_CASE("train refuses a manifest hashed against a different alphabet") {
  const auto dir = testutil::fresh_dir("cli-train-mismatch");
  const std::string manifest = (dir / "m.jsonl").string();
  {
    std::ofstream out(manifest, std::ios::binary);
    out << R"({"format":"recite-manifest","version":1,"alphabet_hash":12345,"config_hash":"x"})"
        << "\n"
        << R"({"id":"u0","audio":"/nope.wav","text":"xx","duration_s":1.0})" << "\n";
  }
  const auto res = run_cli("train " + manifest + " " + manifest + " --config " +
                           tiny_config_path() + " --out " + (dir / "run").string() +
                           " --alphabet " + testutil::alphabet_path());
  CHECK(res.exit_code == 2);
}

TEST_CASE("corpus rates are pooled over utterances, not averaged") {
  // (S+D+I, N) = (1, 4) and (0, 6) pools to 1/10
  const auto dir = testutil::fresh_dir("cli-pooled");
  const std::string ref = (dir / "ref.txt").string();
  const std::string hyp = (dir / "hyp.txt").string();
  {
    std::ofstream r(ref), h(hyp);
    r << "u1\tw1 w2 w3 w4\nu2\ta b c d e f\n";
    h << "u1\tw1 XX w3 w4\nu2\ta b c d e f\n";
  }
  const auto res = run_cli("diff " + ref + " " + hyp);
  REQUIRE(res.exit_code == 0);
  const auto records = parse_records(res.out);
  CHECK(records.back()["wer"].get<double>() == Catch::Approx(0.1));
}
