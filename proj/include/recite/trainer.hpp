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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "recite/checkpoint.hpp"
#include "recite/config.hpp"
#include "recite/ctc.hpp"
#include "recite/decoder.hpp"
#include "recite/manifest.hpp"
#include "recite/metrics.hpp"
#include "recite/network.hpp"
#include "recite/spectrogram.hpp"
#include "recite/text_codec.hpp"

namespace recite {

// ---------------------------------------------------------------------------
// batching

/// Zero-padded mini-batch. True lengths ride along; the network only ever
/// consumes the true-length slice of each item, which is what makes the
/// padding-invariance guarantee hold exactly.
struct Batch {
  Tensor features;                              // B x T_max x F
  std::vector<std::int64_t> frame_counts;       // true frames per item
  std::vector<std::vector<int>> label_matrix;   // B x L_max, padded with -1
  std::vector<int> label_lengths;
  std::vector<std::string> ids;                 // optional provenance

  int size() const { return static_cast<int>(frame_counts.size()); }

  /// True-length T_b x F view (copied out of the padded tensor).
  Tensor item_features(int b) const {
    const std::int64_t T = frame_counts[static_cast<std::size_t>(b)];
    const std::int64_t F = features.dim(2);
    Tensor out({T, F});
    for (std::int64_t t = 0; t < T; ++t) {
      for (std::int64_t f = 0; f < F; ++f) out.at(t, f) = features.at(b, t, f);
    }
    return out;
  }

  LabelSequence item_labels(int b) const {
    const auto& row = label_matrix[static_cast<std::size_t>(b)];
    return LabelSequence(row.begin(), row.begin() + label_lengths[static_cast<std::size_t>(b)]);
  }
};

inline Batch pad_batch(const std::vector<std::pair<NormalizedSpectrogram, LabelSequence>>& items) {
  if (items.empty()) throw ShapeMismatch("pad_batch: empty batch");
  const std::int64_t F = items.front().first.num_bins();
  std::int64_t t_max = 0;
  std::size_t l_max = 0;
  for (const auto& [spec, labels] : items) {
    if (spec.num_bins() != F) {
      throw InconsistentBins("pad_batch: items disagree on frequency bins");
    }
    t_max = std::max(t_max, spec.num_frames());
    l_max = std::max(l_max, labels.size());
  }
  Batch batch;
  batch.features = Tensor({static_cast<std::int64_t>(items.size()), t_max, F});
  for (std::size_t b = 0; b < items.size(); ++b) {
    const auto& spec = items[b].first;
    const auto& labels = items[b].second;
    for (std::int64_t t = 0; t < spec.num_frames(); ++t) {
      for (std::int64_t f = 0; f < F; ++f) {
        batch.features.at(static_cast<std::int64_t>(b), t, f) = spec.frames.at(t, f);
      }
    }
    batch.frame_counts.push_back(spec.num_frames());
    std::vector<int> row(l_max, -1);
    std::copy(labels.begin(), labels.end(), row.begin());
    batch.label_matrix.push_back(std::move(row));
    batch.label_lengths.push_back(static_cast<int>(labels.size()));
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates per tensor plus the shared timestep.
struct AdamState {
  NamedTensors m, v;
  std::int64_t t = 0;
  AdamOptions opts;
};

/// Standard bias-corrected Adam update over every tensor named in grads.
inline void adam_step(NamedTensors& params, const NamedTensors& grads, AdamState& state) {
  state.t += 1;
  const double b1 = state.opts.beta1, b2 = state.opts.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (const auto& [name, g] : grads) {
    auto pit = params.find(name);
    if (pit == params.end()) throw ShapeMismatch("adam_step: gradient for unknown tensor " + name);
    Tensor& p = pit->second;
    if (!p.same_shape(g)) throw ShapeMismatch("adam_step: shape mismatch for " + name);
    Tensor& m = state.m.try_emplace(name, Tensor(p.dims())).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(p.dims())).first->second;
    if (!m.same_shape(p)) throw ShapeMismatch("adam_step: stale state shape for " + name);
    for (std::int64_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= state.opts.lr * mhat / (std::sqrt(vhat) + state.opts.epsilon);
    }
  }
}

inline void adam_step(ModelParams& params, const NamedTensors& grads, AdamState& state) {
  adam_step(params.tensors, grads, state);
}

// ---------------------------------------------------------------------------
// training loop

struct TrainOptions {
  int epochs = 20;
  int batch_size = 8;
  AdamOptions adam{};
  double grad_clip = 0.0;          // 0 disables the global-norm clip
  bool per_frame_reduction = false;
  bool sort_by_duration = true;
  std::uint64_t seed = 42;

  static TrainOptions from_config(const Config& cfg) {
    TrainOptions o;
    o.epochs = cfg.get_int("train", "epochs");
    o.batch_size = cfg.get_int("train", "batch_size");
    o.adam.lr = cfg.get_double("train", "lr");
    o.adam.beta1 = cfg.get_double("train", "beta1");
    o.adam.beta2 = cfg.get_double("train", "beta2");
    o.adam.epsilon = cfg.get_double("train", "adam_epsilon");
    o.grad_clip = cfg.get_double("train", "grad_clip");
    const std::string reduction = cfg.get("train", "loss_reduction");
    if (reduction != "mean" && reduction != "per_frame") {
      throw BadConfig("train.loss_reduction must be mean or per_frame");
    }
    o.per_frame_reduction = reduction == "per_frame";
    o.sort_by_duration = cfg.get_bool("train", "sort_by_duration");
    o.seed = cfg.get_u64("train", "seed");
    if (o.epochs < 1 || o.batch_size < 1) throw BadConfig("train: epochs and batch_size must be >= 1");
    return o;
  }
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_cer = 0.0;
  double val_wer = 0.0;
  double wall_time_s = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> log;
  std::string best_checkpoint_path;
  std::string final_checkpoint_path;
  int best_epoch = -1;
  double best_val_cer = std::numeric_limits<double>::infinity();
};

namespace train_detail {

struct PreparedItem {
  std::string id;
  NormalizedSpectrogram features;
  LabelSequence labels;
  std::string text;
};

inline std::vector<PreparedItem> prepare_items(const std::vector<ManifestEntry>& entries,
                                               const FeatureConfig& fcfg, const Alphabet& alphabet) {
  std::vector<PreparedItem> items;
  items.reserve(entries.size());
  for (const auto& e : entries) {
    PreparedItem item;
    item.id = e.id;
    item.features = featurize(load_wav(e.audio_path), fcfg);
    item.labels = encode(e.text, alphabet);
    item.text = e.text;
    items.push_back(std::move(item));
  }
  return items;
}

inline double global_grad_norm(const NamedTensors& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (std::int64_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
  }
  return std::sqrt(sq);
}

/// Pooled (corpus-level) error rates over greedy transcripts.
struct PooledRates {
  double cer = 0.0;
  double wer = 0.0;
};

inline PooledRates pooled_greedy_rates(const ModelParams& params,
                                       const std::vector<PreparedItem>& items,
                                       const Alphabet& alphabet) {
  std::int64_t char_errors = 0, char_total = 0, word_errors = 0, word_total = 0;
  for (const auto& item : items) {
    const Tensor post = model_forward(params, item.features.frames, /*training=*/false);
    const std::string hyp = greedy_decode(post, alphabet);
    const auto chars_ref = split_chars(item.text);
    const auto chars_hyp = split_chars(hyp);
    const auto cc = align(chars_ref, chars_hyp);
    char_errors += cc.total_errors();
    char_total += static_cast<std::int64_t>(chars_ref.size());
    const auto words_ref = split_words(item.text);
    const auto words_hyp = split_words(hyp);
    const auto wc = align(words_ref, words_hyp);
    word_errors += wc.total_errors();
    word_total += static_cast<std::int64_t>(words_ref.size());
  }
  PooledRates rates;
  rates.cer = char_total > 0 ? static_cast<double>(char_errors) / static_cast<double>(char_total) : 0.0;
  rates.wer = word_total > 0 ? static_cast<double>(word_errors) / static_cast<double>(word_total) : 0.0;
  return rates;
}

}  // namespace train_detail

/// Mini-batch CTC training: seeded shuffle, padded batches, forward +
/// alpha-beta gradients + backprop, Adam at the configured rate, greedy-CER
/// validation after every epoch. The best-on-validation checkpoint and the
/// final checkpoint are both persisted. Deterministic given (config, seed).
inline TrainResult train(const Config& config, const std::vector<ManifestEntry>& train_entries,
                         const std::vector<ManifestEntry>& val_entries, const Alphabet& alphabet,
                         const std::string& out_dir, std::ostream* progress = nullptr) {
  namespace fs = std::filesystem;
  if (train_entries.empty()) throw EmptyDataset("train: empty training manifest");
  const FeatureConfig fcfg = config.features();
  const ModelConfig mcfg = config.model();
  const TrainOptions opts = TrainOptions::from_config(config);

  auto items = train_detail::prepare_items(train_entries, fcfg, alphabet);
  auto val_items = train_detail::prepare_items(val_entries, fcfg, alphabet);

  // fail fast on any target that cannot align to its encoder output length
  for (const auto& item : items) {
    std::int64_t repeats = 0;
    for (std::size_t i = 1; i < item.labels.size(); ++i) {
      if (item.labels[i] == item.labels[i - 1]) ++repeats;
    }
    const std::int64_t out_frames = mcfg.output_time(item.features.num_frames());
    if (static_cast<std::int64_t>(item.labels.size()) + repeats > out_frames) {
      throw NoValidAlignment("utterance " + item.id + ": " + std::to_string(item.labels.size()) +
                                 " labels cannot align to " + std::to_string(out_frames) +
                                 " encoder frames",
                             item.id);
    }
  }

  if (opts.sort_by_duration) {
    std::stable_sort(items.begin(), items.end(),
                     [](const train_detail::PreparedItem& a, const train_detail::PreparedItem& b) {
                       return a.features.num_frames() < b.features.num_frames();
                     });
  }
  std::vector<Batch> batches;
  std::vector<std::vector<std::string>> batch_ids;
  for (std::size_t start = 0; start < items.size(); start += static_cast<std::size_t>(opts.batch_size)) {
    const std::size_t end = std::min(items.size(), start + static_cast<std::size_t>(opts.batch_size));
    std::vector<std::pair<NormalizedSpectrogram, LabelSequence>> chunk;
    std::vector<std::string> ids;
    for (std::size_t i = start; i < end; ++i) {
      chunk.emplace_back(items[i].features, items[i].labels);
      ids.push_back(items[i].id);
    }
    Batch b = pad_batch(chunk);
    b.ids = ids;
    batches.push_back(std::move(b));
  }

  ModelParams params = init_model(mcfg, opts.seed);
  AdamState adam;
  adam.opts = opts.adam;

  fs::create_directories(out_dir);
  const std::string best_path = (fs::path(out_dir) / "best.ckpt").string();
  const std::string final_path = (fs::path(out_dir) / "final.ckpt").string();
  const std::string log_path = (fs::path(out_dir) / "train_log.jsonl").string();
  std::ofstream log_out(log_path, std::ios::binary);
  if (!log_out) throw Error("cannot write training log: " + log_path);

  const std::string config_text = config.canonical();
  const std::string config_hash = config.hash_hex();

  TrainResult result;
  Rng shuffle_rng(opts.seed ^ 0x5AFEC0DEULL);
  std::vector<std::size_t> order(batches.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::int64_t items_seen = 0;

    for (std::size_t bi = 0; bi < order.size(); ++bi) {
      const Batch& batch = batches[order[bi]];
      NamedTensors grad_sum;
      double batch_loss = 0.0;
      for (int b = 0; b < batch.size(); ++b) {
        const Tensor feats = batch.item_features(b);
        const LabelSequence labels = batch.item_labels(b);
        ForwardCache cache;
        std::uint64_t dropout_seed = opts.seed;
        dropout_seed = Rng::splitmix64(dropout_seed);
        dropout_seed ^= static_cast<std::uint64_t>(epoch) * 0x9E3779B97F4A7C15ULL;
        dropout_seed ^= (static_cast<std::uint64_t>(order[bi]) << 20) ^ static_cast<std::uint64_t>(b);
        model_forward(params, feats, /*training=*/true, dropout_seed, &cache);
        CtcResult ctc;
        try {
          ctc = ctc_grad(cache.logits, labels);
        } catch (const NoValidAlignment&) {
          throw NoValidAlignment("utterance " + batch.ids[static_cast<std::size_t>(b)] +
                                     ": target cannot align to encoder output",
                                 batch.ids[static_cast<std::size_t>(b)]);
        }
        if (!std::isfinite(ctc.loss)) {
          throw DivergedLoss("non-finite loss at epoch " + std::to_string(epoch) + ", utterance " +
                             batch.ids[static_cast<std::size_t>(b)]);
        }
        double scale = 1.0 / static_cast<double>(batch.size());
        double loss_contrib = ctc.loss;
        if (opts.per_frame_reduction) {
          const auto frames = static_cast<double>(cache.logits.dim(0));
          scale /= frames;
          loss_contrib /= frames;
        }
        batch_loss += loss_contrib / static_cast<double>(batch.size());
        Tensor dlogits = ctc.grad;
        tensor_ops::scale_inplace(dlogits, scale);
        NamedTensors grads = model_backward(params, cache, dlogits);
        if (grad_sum.empty()) {
          grad_sum = std::move(grads);
        } else {
          for (auto& [name, g] : grads) tensor_ops::add_inplace(grad_sum.at(name), g);
        }
        update_running_stats(params, cache);
      }
      if (opts.grad_clip > 0.0) {
        const double norm = train_detail::global_grad_norm(grad_sum);
        if (norm > opts.grad_clip) {
          const double factor = opts.grad_clip / norm;
          for (auto& [name, g] : grad_sum) tensor_ops::scale_inplace(g, factor);
        }
      }
      adam_step(params, grad_sum, adam);
      epoch_loss += batch_loss * batch.size();
      items_seen += batch.size();
      if (!std::isfinite(batch_loss)) {
        throw DivergedLoss("non-finite batch loss at epoch " + std::to_string(epoch));
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(items_seen);
    const auto rates = train_detail::pooled_greedy_rates(params, val_items, alphabet);
    stats.val_cer = rates.cer;
    stats.val_wer = rates.wer;
    stats.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(stats);

    nlohmann::json rec{{"epoch", stats.epoch},     {"train_loss", stats.train_loss},
                       {"val_cer", stats.val_cer}, {"val_wer", stats.val_wer},
                       {"wall_time_s", stats.wall_time_s}, {"seed", opts.seed},
                       {"config_hash", config_hash}};
    log_out << rec.dump() << '\n';
    log_out.flush();
    if (progress) {
      (*progress) << "epoch " << stats.epoch << " loss " << stats.train_loss << " val_cer "
                  << stats.val_cer << "\n";
    }

    if (stats.val_cer < result.best_val_cer) {
      result.best_val_cer = stats.val_cer;
      result.best_epoch = epoch;
      save_checkpoint(best_path, params, alphabet.hash(), config_text);
    }
  }

  save_checkpoint(final_path, params, alphabet.hash(), config_text);
  if (result.best_epoch < 0) {
    save_checkpoint(best_path, params, alphabet.hash(), config_text);
    result.best_epoch = opts.epochs;
  }
  result.best_checkpoint_path = best_path;
  result.final_checkpoint_path = final_path;
  return result;
}

}  // namespace recite
