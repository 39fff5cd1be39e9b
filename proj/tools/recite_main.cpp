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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "recite/checkpoint.hpp"
#include "recite/config.hpp"
#include "recite/ctc.hpp"
#include "recite/decoder.hpp"
#include "recite/manifest.hpp"
#include "recite/metrics.hpp"
#include "recite/network.hpp"
#include "recite/report_io.hpp"
#include "recite/spectrogram.hpp"
#include "recite/text_codec.hpp"
#include "recite/threading.hpp"
#include "recite/trainer.hpp"
#include "recite/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitDataQuality = 2;

struct CommonFlags {
  std::string config_path;
  std::string alphabet_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> fft_size;
  std::optional<int> hop_size;
  std::optional<int> beam_width;
  bool greedy = false;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> lr;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Config file (INI sections)");
  cmd->add_option("--alphabet", flags.alphabet_path, "Alphabet symbol-list file");
  cmd->add_option("--seed", flags.seed, "Random seed override");
  cmd->add_option("--fft-size", flags.fft_size, "STFT frame length in samples");
  cmd->add_option("--hop-size", flags.hop_size, "STFT hop in samples");
  cmd->add_option("--beam-width", flags.beam_width, "Beam width for decoding");
  cmd->add_flag("--greedy", flags.greedy, "Greedy (best-path) decoding");
  cmd->add_option("--epochs", flags.epochs, "Training epochs");
  cmd->add_option("--batch-size", flags.batch_size, "Training batch size");
  cmd->add_option("--lr", flags.lr, "Adam learning rate");
}

recite::Config resolve_config(const CommonFlags& flags) {
  recite::Config cfg =
      flags.config_path.empty() ? recite::Config() : recite::Config::load(flags.config_path);
  if (flags.seed) cfg.set("train", "seed", std::to_string(*flags.seed));
  if (flags.fft_size) cfg.set("features", "fft_size", std::to_string(*flags.fft_size));
  if (flags.hop_size) cfg.set("features", "hop_size", std::to_string(*flags.hop_size));
  if (flags.beam_width) cfg.set("decode", "beam_width", std::to_string(*flags.beam_width));
  if (flags.greedy) cfg.set("decode", "greedy", "true");
  if (flags.epochs) cfg.set("train", "epochs", std::to_string(*flags.epochs));
  if (flags.batch_size) cfg.set("train", "batch_size", std::to_string(*flags.batch_size));
  if (flags.lr) cfg.set("train", "lr", std::to_string(*flags.lr));
  if (!flags.alphabet_path.empty()) cfg.set("data", "alphabet", flags.alphabet_path);
  return cfg;
}

recite::Alphabet load_alphabet(const recite::Config& cfg) {
  return recite::Alphabet::load(cfg.get("data", "alphabet"));
}

/// Per-utterance transcript with its total path probability under the model.
struct DecodedUtterance {
  std::string id;
  std::string text;
  double log_prob = 0.0;
};

DecodedUtterance decode_one(const std::string& id, const std::string& audio_path,
                            const recite::ModelParams& params, const recite::Alphabet& alphabet,
                            const recite::FeatureConfig& fcfg, bool greedy, int beam_width,
                            double prune_threshold, int sample_rate_expected = 44100) {
  const recite::PcmSignal pcm = recite::load_wav(audio_path);
  if (pcm.sample_rate != sample_rate_expected) {
    std::cerr << "warning: " << id << " has sample rate " << pcm.sample_rate << " (expected "
              << sample_rate_expected << "); no resampling is applied\n";
  }
  const auto features = recite::featurize(pcm, fcfg);
  const recite::Tensor post = recite::model_forward(params, features.frames, /*training=*/false);
  DecodedUtterance out;
  out.id = id;
  if (greedy) {
    const auto labels = recite::greedy_decode_labels(post, alphabet.blank_index());
    out.text = recite::decode_labels(labels, alphabet);
    recite::Tensor log_post(post.dims());
    for (std::int64_t i = 0; i < post.size(); ++i) {
      log_post[i] = post[i] > 0.0 ? std::log(post[i]) : recite::kNegInf;
    }
    out.log_prob = -recite::ctc_loss(log_post, labels, alphabet.blank_index());
  } else {
    const auto result = recite::beam_search_decode(post, alphabet, beam_width, /*top_k=*/1,
                                                   prune_threshold);
    out.text = result.text;
    out.log_prob = result.log_prob;
  }
  return out;
}

struct CheckpointBundle {
  recite::ModelParams params;
  recite::Config config;
  std::uint64_t alphabet_hash = 0;
};

CheckpointBundle load_bundle(const std::string& path, const recite::Alphabet& alphabet) {
  auto ckpt = recite::load_checkpoint(path);
  CheckpointBundle bundle;
  recite::ensure_alphabet(ckpt, alphabet, "checkpoint " + path);
  std::istringstream cfg_stream(ckpt.config_text);
  bundle.config = recite::Config::parse(cfg_stream);
  bundle.params = std::move(ckpt.params);
  bundle.alphabet_hash = ckpt.alphabet_hash;
  return bundle;
}

std::vector<std::pair<std::string, std::string>> collect_inputs(const std::string& input_path) {
  std::vector<std::pair<std::string, std::string>> items;  // (id, audio path)
  if (fs::path(input_path).extension() == ".wav") {
    items.emplace_back(fs::path(input_path).stem().string(), input_path);
  } else {
    const auto manifest = recite::read_manifest(input_path);
    for (const auto& e : manifest.entries) items.emplace_back(e.id, e.audio_path);
  }
  return items;
}

// ---------------------------------------------------------------------------

int run_prepare(const CommonFlags& flags, const std::string& dataset_root,
                const std::string& out_dir, bool strict, bool by_reciter) {
  const recite::Config cfg = resolve_config(flags);
  const recite::Alphabet alphabet = load_alphabet(cfg);
  const auto built = recite::build_manifest(dataset_root, alphabet);

  fs::create_directories(out_dir);
  const std::string config_hash = cfg.hash_hex();
  recite::write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), built.entries,
                         alphabet.hash(), config_hash);
  recite::write_rejects((fs::path(out_dir) / "rejects.jsonl").string(), built.rejects);

  recite::SplitSpec spec;
  spec.seed = cfg.get_u64("train", "seed");
  const auto splits = by_reciter ? recite::split_manifest_by_reciter(built.entries, spec)
                                 : recite::split_manifest(built.entries, spec);
  recite::write_manifest((fs::path(out_dir) / "train.jsonl").string(), splits.train,
                         alphabet.hash(), config_hash);
  recite::write_manifest((fs::path(out_dir) / "val.jsonl").string(), splits.val, alphabet.hash(),
                         config_hash);
  recite::write_manifest((fs::path(out_dir) / "test.jsonl").string(), splits.test, alphabet.hash(),
                         config_hash);

  // alphabet audit: symbol frequencies over the accepted transcripts
  std::map<std::string, std::int64_t> symbol_counts;
  for (int i = 0; i < alphabet.size(); ++i) {
    symbol_counts[recite::utf8::encode(alphabet.symbol(i))] = 0;
  }
  for (const auto& e : built.entries) {
    for (int idx : recite::encode(e.text, alphabet)) {
      ++symbol_counts[recite::utf8::encode(alphabet.symbol(idx))];
    }
  }
  std::map<std::string, std::int64_t> reject_counts;
  for (const auto& r : built.rejects) ++reject_counts[r.reason];
  json audit{{"entries", built.entries.size()},
             {"rejects", built.rejects.size()},
             {"reject_reasons", reject_counts},
             {"symbol_counts", symbol_counts},
             {"alphabet_hash", alphabet.hash()},
             {"config_hash", config_hash},
             {"splits",
              {{"train", splits.train.size()}, {"val", splits.val.size()}, {"test", splits.test.size()}}}};
  std::ofstream audit_out((fs::path(out_dir) / "audit.json").string());
  audit_out << audit.dump(2) << '\n';
  std::ofstream cfg_out((fs::path(out_dir) / "resolved_config.ini").string());
  cfg_out << cfg.canonical();

  std::cout << "manifest: " << built.entries.size() << " entries, " << built.rejects.size()
            << " rejects; splits " << splits.train.size() << "/" << splits.val.size() << "/"
            << splits.test.size() << "\n";
  if (strict && !built.rejects.empty()) {
    std::cerr << "error: strict mode and " << built.rejects.size() << " rejected clips (see "
              << (fs::path(out_dir) / "rejects.jsonl").string() << ")\n";
    return kExitDataQuality;
  }
  return kExitOk;
}

int run_train(const CommonFlags& flags, const std::string& train_manifest,
              const std::string& val_manifest, const std::string& out_dir) {
  const recite::Config cfg = resolve_config(flags);
  const recite::Alphabet alphabet = load_alphabet(cfg);
  const auto train_file = recite::read_manifest(train_manifest);
  const auto val_file = recite::read_manifest(val_manifest);
  if (train_file.alphabet_hash != alphabet.hash() || val_file.alphabet_hash != alphabet.hash()) {
    throw recite::AlphabetMismatch("manifest alphabet hash differs from the loaded alphabet");
  }
  fs::create_directories(out_dir);
  {
    std::ofstream cfg_out((fs::path(out_dir) / "resolved_config.ini").string());
    cfg_out << cfg.canonical();
  }
  const auto result =
      recite::train(cfg, train_file.entries, val_file.entries, alphabet, out_dir, &std::cerr);
  json summary{{"best_epoch", result.best_epoch},
               {"best_val_cer", result.best_val_cer},
               {"best_checkpoint", result.best_checkpoint_path},
               {"final_checkpoint", result.final_checkpoint_path},
               {"config_hash", cfg.hash_hex()}};
  std::cout << summary.dump() << '\n';
  return kExitOk;
}

int run_decode(const CommonFlags& flags, const std::string& checkpoint_path,
               const std::string& input_path) {
  const recite::Config cli_cfg = resolve_config(flags);
  const recite::Alphabet alphabet = load_alphabet(cli_cfg);
  const auto bundle = load_bundle(checkpoint_path, alphabet);
  // feature geometry comes from the checkpoint; decoding knobs from the CLI
  const recite::FeatureConfig fcfg = bundle.config.features();
  const bool greedy = cli_cfg.get_bool("decode", "greedy");
  const int beam_width = cli_cfg.get_int("decode", "beam_width");
  const double prune = cli_cfg.get_double("decode", "prune_threshold");

  const auto items = collect_inputs(input_path);
  std::vector<DecodedUtterance> results(items.size());
  recite::parallel_for(static_cast<std::int64_t>(items.size()), [&](std::int64_t i) {
    const auto& [id, path] = items[static_cast<std::size_t>(i)];
    results[static_cast<std::size_t>(i)] =
        decode_one(id, path, bundle.params, alphabet, fcfg, greedy, beam_width, prune);
  });

  json header{{"format", "recite-decode"},
              {"config_hash", bundle.config.hash_hex()},
              {"alphabet_hash", alphabet.hash()},
              {"mode", greedy ? "greedy" : "beam"}};
  std::cout << header.dump() << '\n';
  for (const auto& r : results) {
    json rec{{"id", r.id}, {"text", r.text}, {"score", r.log_prob}};
    std::cout << rec.dump() << '\n';
  }
  return kExitOk;
}

int run_eval(const CommonFlags& flags, const std::string& checkpoint_path,
             const std::string& manifest_path, const std::string& report_path) {
  const recite::Config cli_cfg = resolve_config(flags);
  const recite::Alphabet alphabet = load_alphabet(cli_cfg);
  const auto bundle = load_bundle(checkpoint_path, alphabet);
  const recite::FeatureConfig fcfg = bundle.config.features();
  const bool greedy = cli_cfg.get_bool("decode", "greedy");
  const int beam_width = cli_cfg.get_int("decode", "beam_width");
  const double prune = cli_cfg.get_double("decode", "prune_threshold");

  const auto manifest = recite::read_manifest(manifest_path);
  if (manifest.alphabet_hash != alphabet.hash()) {
    throw recite::AlphabetMismatch("manifest alphabet hash differs from the loaded alphabet");
  }

  std::vector<DecodedUtterance> decoded(manifest.entries.size());
  recite::parallel_for(static_cast<std::int64_t>(manifest.entries.size()), [&](std::int64_t i) {
    const auto& e = manifest.entries[static_cast<std::size_t>(i)];
    decoded[static_cast<std::size_t>(i)] =
        decode_one(e.id, e.audio_path, bundle.params, alphabet, fcfg, greedy, beam_width, prune);
  });

  std::ofstream report_file;
  std::ostream* records = &std::cout;
  if (!report_path.empty()) {
    report_file.open(report_path, std::ios::binary);
    if (!report_file) throw recite::Error("cannot write report file: " + report_path);
    records = &report_file;
  }

  json header{{"format", "recite-eval"},
              {"config_hash", bundle.config.hash_hex()},
              {"alphabet_hash", alphabet.hash()},
              {"mode", greedy ? "greedy" : "beam"}};
  (*records) << header.dump() << '\n';

  std::int64_t word_errors = 0, word_total = 0, char_errors = 0, char_total = 0;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    const auto report = recite::error_report(e.text, decoded[i].text);
    word_errors += report.word.substitutions + report.word.deletions + report.word.insertions;
    word_total += report.word.ref_len;
    char_errors += report.character.substitutions + report.character.deletions +
                   report.character.insertions;
    char_total += report.character.ref_len;
    json rec = recite::report_record(e.id, report);
    rec["hyp"] = decoded[i].text;
    rec["ref"] = e.text;
    (*records) << rec.dump() << '\n';
  }
  // corpus rates are pooled: total errors over total reference tokens
  json summary{{"summary", true},
               {"utterances", manifest.entries.size()},
               {"wer", word_total > 0 ? static_cast<double>(word_errors) / word_total : 0.0},
               {"cer", char_total > 0 ? static_cast<double>(char_errors) / char_total : 0.0},
               {"word_errors", word_errors},
               {"word_total", word_total},
               {"char_errors", char_errors},
               {"char_total", char_total}};
  (*records) << summary.dump() << '\n';
  if (records != &std::cout) std::cout << summary.dump() << '\n';
  return kExitOk;
}

std::vector<std::pair<std::string, std::string>> read_id_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw recite::Error("cannot open file: " + path);
  std::vector<std::pair<std::string, std::string>> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw recite::Error(path + ": expected <id>\\t<text> on every line");
    }
    lines.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return lines;
}

int run_diff(const std::string& ref_path, const std::string& hyp_path) {
  const auto refs = read_id_text_file(ref_path);
  const auto hyps = read_id_text_file(hyp_path);
  if (refs.size() != hyps.size()) {
    throw recite::IdMismatch("files hold " + std::to_string(refs.size()) + " vs " +
                             std::to_string(hyps.size()) + " records");
  }
  std::int64_t word_errors = 0, word_total = 0, char_errors = 0, char_total = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].first != hyps[i].first) {
      throw recite::IdMismatch("line " + std::to_string(i + 1) + ": id \"" + refs[i].first +
                               "\" vs \"" + hyps[i].first + "\"");
    }
    const auto report = recite::error_report(refs[i].second, hyps[i].second);
    word_errors += report.word.substitutions + report.word.deletions + report.word.insertions;
    word_total += report.word.ref_len;
    char_errors += report.character.substitutions + report.character.deletions +
                   report.character.insertions;
    char_total += report.character.ref_len;
    std::cout << recite::report_record(refs[i].first, report).dump() << '\n';
  }
  json summary{{"summary", true},
               {"utterances", refs.size()},
               {"wer", word_total > 0 ? static_cast<double>(word_errors) / word_total : 0.0},
               {"cer", char_total > 0 ? static_cast<double>(char_errors) / char_total : 0.0}};
  std::cout << summary.dump() << '\n';
  return kExitOk;
}

bool is_data_quality_error(const recite::Error& e) {
  return dynamic_cast<const recite::AlphabetMismatch*>(&e) ||
         dynamic_cast<const recite::IdMismatch*>(&e) ||
         dynamic_cast<const recite::OutOfAlphabet*>(&e) ||
         dynamic_cast<const recite::NoValidAlignment*>(&e) ||
         dynamic_cast<const recite::MissingTranscripts*>(&e) ||
         dynamic_cast<const recite::EmptyDataset*>(&e);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recite: CNN-BiGRU-CTC recitation recognition toolkit"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Scan a dataset tree into manifest + splits");
  CommonFlags prepare_flags;
  std::string dataset_root, prepare_out;
  bool strict = false, by_reciter = false;
  prepare->add_option("dataset_root", dataset_root, "Dataset root directory")->required();
  prepare->add_option("out_dir", prepare_out, "Output directory")->required();
  prepare->add_flag("--strict", strict, "Fail (exit 2) when any clip is rejected");
  prepare->add_flag("--by-reciter", by_reciter, "Split by held-out reciters instead of clips");
  add_common_flags(prepare, prepare_flags);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the encoder with CTC");
  CommonFlags train_flags;
  std::string train_manifest, val_manifest, train_out = "runs/default";
  train_cmd->add_option("train_manifest", train_manifest, "Training manifest")->required();
  train_cmd->add_option("val_manifest", val_manifest, "Validation manifest")->required();
  train_cmd->add_option("--out", train_out, "Output directory for checkpoints and the log");
  add_common_flags(train_cmd, train_flags);

  // decode
  auto* decode_cmd = app.add_subcommand("decode", "Transcribe audio with a trained checkpoint");
  CommonFlags decode_flags;
  std::string decode_ckpt, decode_input;
  decode_cmd->add_option("checkpoint", decode_ckpt, "Checkpoint file")->required();
  decode_cmd->add_option("input", decode_input, "A .wav file or a manifest")->required();
  add_common_flags(decode_cmd, decode_flags);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Decode a manifest and score against references");
  CommonFlags eval_flags;
  std::string eval_ckpt, eval_manifest, eval_report;
  eval_cmd->add_option("checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("manifest", eval_manifest, "Manifest with reference transcripts")->required();
  eval_cmd->add_option("--report", eval_report, "Write per-utterance records here instead of stdout");
  add_common_flags(eval_cmd, eval_flags);

  // diff
  auto* diff_cmd = app.add_subcommand("diff", "Error analysis between two id\\ttext files");
  std::string diff_ref, diff_hyp;
  diff_cmd->add_option("ref", diff_ref, "Reference file (id<TAB>text per line)")->required();
  diff_cmd->add_option("hyp", diff_hyp, "Hypothesis file (id<TAB>text per line)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) return run_prepare(prepare_flags, dataset_root, prepare_out, strict, by_reciter);
    if (train_cmd->parsed()) return run_train(train_flags, train_manifest, val_manifest, train_out);
    if (decode_cmd->parsed()) return run_decode(decode_flags, decode_ckpt, decode_input);
    if (eval_cmd->parsed()) return run_eval(eval_flags, eval_ckpt, eval_manifest, eval_report);
    if (diff_cmd->parsed()) return run_diff(diff_ref, diff_hyp);
  } catch (const recite::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_data_quality_error(e) ? kExitDataQuality : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
