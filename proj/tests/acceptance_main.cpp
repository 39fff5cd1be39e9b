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

// Acceptance suite: oracle-equivalence, gradient, and invariant checks, plus
// a scaled-down end-to-end training run. Prints one PASS/FAIL line per
// criterion and exits nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "recite/checkpoint.hpp"
#include "recite/config.hpp"
#include "recite/ctc.hpp"
#include "recite/decoder.hpp"
#include "recite/manifest.hpp"
#include "recite/metrics.hpp"
#include "recite/network.hpp"
#include "recite/trainer.hpp"
#include "recite/wav.hpp"
#include "testutil.hpp"

using namespace recite;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, double seconds,
            const std::string& detail) {
  std::printf("%s criterion %2d (%6.1fs): %s%s%s\n", pass ? "PASS" : "FAIL", number, seconds,
              name.c_str(), detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

void run(int number, const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = false;
  std::string detail;
  try {
    auto [ok, text] = body();
    pass = ok;
    detail = text;
  } catch (const std::exception& e) {
    pass = false;
    detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(number, name, pass, secs, detail);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

// --------------------------------------------------------------------------
// criterion 1: ctc dynamic program vs brute force, |diff| <= 1e-9

std::pair<bool, std::string> ctc_oracle_sweep() {
  Rng rng(2024);
  double worst = 0.0;
  int cases = 0, infinite = 0;
  for (int T = 1; T <= 6; ++T) {
    for (int L = 0; L <= 3; ++L) {
      for (int trial = 0; trial < 20; ++trial) {
        const Tensor post = testutil::random_posteriors(rng, T, 4);
        const Tensor lp = testutil::log_of(post);
        LabelSequence labels;
        for (int i = 0; i < L; ++i) labels.push_back(static_cast<int>(rng.uniform_int(3)));
        const double dp = ctc_loss(lp, labels, 3);
        const double bf = ctc_loss_bruteforce(lp, labels, 3);
        ++cases;
        if (std::isinf(dp) || std::isinf(bf)) {
          ++infinite;
          if (std::isinf(dp) != std::isinf(bf)) return {false, "infinity disagreement"};
          continue;
        }
        worst = std::max(worst, std::fabs(dp - bf));
      }
    }
  }
  return {worst <= 1e-9, std::to_string(cases) + " cases, worst |dp-bf| = " + fmt(worst) + ", " +
                             std::to_string(infinite) + " infeasible"};
}

// --------------------------------------------------------------------------
// criterion 2: total probability over all collapsed sequences = 1 +- 1e-9

std::pair<bool, std::string> ctc_total_probability() {
  Rng rng(2025);
  double worst = 0.0;
  for (int T = 1; T <= 5; ++T) {
    const Tensor post = testutil::random_posteriors(rng, T, 4);
    const Tensor lp = testutil::log_of(post);
    double total = 0.0;
    for (const auto& labels : testutil::all_label_sequences(3, T)) {
      const double loss = ctc_loss(lp, labels, 3);
      if (!std::isinf(loss)) total += std::exp(-loss);
    }
    worst = std::max(worst, std::fabs(total - 1.0));
  }
  return {worst <= 1e-9, "worst |total-1| = " + fmt(worst)};
}

// --------------------------------------------------------------------------
// criterion 3: gradient checks, max relative error <= 1e-4, >= 50 trials each

double weighted(const Tensor& t, const Tensor& w) {
  double s = 0.0;
  for (std::int64_t i = 0; i < t.size(); ++i) s += t[i] * w[i];
  return s;
}

std::pair<bool, std::string> gradient_checks() {
  Rng rng(2026);
  double worst_overall = 0.0;
  std::string worst_layer = "none";
  auto track = [&](const char* layer, double err) {
    if (err > worst_overall) {
      worst_overall = err;
      worst_layer = layer;
    }
  };

  // ctc_grad (absolute tolerance 1e-6 per its own example, also tracked here)
  double ctc_worst_abs = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t T = 2 + static_cast<std::int64_t>(rng.uniform_int(3));
    Tensor logits = testutil::random_tensor(rng, {T, 4}, 2.0);
    LabelSequence labels;
    const int L = 1 + static_cast<int>(rng.uniform_int(2));
    for (int i = 0; i < L; ++i) labels.push_back(static_cast<int>(rng.uniform_int(3)));
    CtcResult res;
    try {
      res = ctc_grad(logits, labels, 3);
    } catch (const NoValidAlignment&) {
      continue;
    }
    auto loss_of = [&]() {
      Tensor lsm(logits.dims());
      for (std::int64_t t = 0; t < T; ++t) {
        double mx = logits.at(t, 0);
        for (std::int64_t k = 1; k < 4; ++k) mx = std::max(mx, logits.at(t, k));
        double z = 0.0;
        for (std::int64_t k = 0; k < 4; ++k) z += std::exp(logits.at(t, k) - mx);
        for (std::int64_t k = 0; k < 4; ++k) lsm.at(t, k) = logits.at(t, k) - mx - std::log(z);
      }
      return ctc_loss(lsm, labels, 3);
    };
    for (std::int64_t i = 0; i < logits.size(); ++i) {
      const double h = 1e-5, orig = logits[i];
      logits[i] = orig + h;
      const double lp = loss_of();
      logits[i] = orig - h;
      const double lm = loss_of();
      logits[i] = orig;
      const double fd = (lp - lm) / (2 * h);
      ctc_worst_abs = std::max(ctc_worst_abs, std::fabs(fd - res.grad[i]));
      track("ctc", testutil::rel_err(fd, res.grad[i]));
    }
  }
  if (ctc_worst_abs > 1e-6) return {false, "ctc abs err " + fmt(ctc_worst_abs)};

  // conv
  for (int trial = 0; trial < 50; ++trial) {
    Tensor in = testutil::random_tensor(rng, {5, 6, 2});
    Tensor ker = testutil::random_tensor(rng, {3, 3, 2, 3});
    Tensor bias = testutil::random_tensor(rng, {3});
    const Tensor c = testutil::random_tensor(rng, {3, 3, 3});
    auto loss = [&]() { return weighted(nn::conv2d(in, ker, bias, 2, 2), c); };
    Tensor din, dker, dbias;
    nn::conv2d_backward(in, ker, 2, 2, c, din, dker, dbias);
    track("conv", testutil::max_fd_rel_err(in, loss, din));
    track("conv", testutil::max_fd_rel_err(ker, loss, dker));
    track("conv", testutil::max_fd_rel_err(bias, loss, dbias));
  }

  // batch norm (training mode, through the batch statistics)
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = testutil::random_tensor(rng, {4, 5, 3}, 2.0);
    Tensor gamma = testutil::random_tensor(rng, {3});
    Tensor beta = testutil::random_tensor(rng, {3});
    Tensor rm({3}), rv({3});
    rv.fill(1.0);
    const Tensor c = testutil::random_tensor(rng, {4, 5, 3});
    auto loss = [&]() {
      return weighted(nn::batchnorm_forward(x, gamma, beta, rm, rv, true, 1e-5), c);
    };
    nn::BnCache cache;
    nn::batchnorm_forward(x, gamma, beta, rm, rv, true, 1e-5, &cache);
    Tensor dx, dgamma, dbeta;
    nn::batchnorm_backward(cache, gamma, c, dx, dgamma, dbeta);
    track("batchnorm", testutil::max_fd_rel_err(x, loss, dx));
    track("batchnorm", testutil::max_fd_rel_err(gamma, loss, dgamma));
    track("batchnorm", testutil::max_fd_rel_err(beta, loss, dbeta));
  }

  // GRU cell: T=1 (fresh state) and T=2 (nonzero h_prev through the chain)
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t T = 1 + (trial % 2), I = 3, H = 4;
    Tensor X = testutil::random_tensor(rng, {T, I});
    Tensor wx = testutil::random_tensor(rng, {3 * H, I});
    Tensor wh = testutil::random_tensor(rng, {3 * H, H});
    Tensor b = testutil::random_tensor(rng, {3 * H});
    const Tensor c = testutil::random_tensor(rng, {T, H});
    auto loss = [&]() {
      Tensor out({T, H});
      nn::gru_dir_forward(X, {wx, wh, b}, false, out, nullptr);
      return weighted(out, c);
    };
    Tensor out({T, H});
    nn::GruDirCache cache;
    nn::gru_dir_forward(X, {wx, wh, b}, false, out, &cache);
    Tensor dX(X.dims()), dwx(wx.dims()), dwh(wh.dims()), db(b.dims());
    nn::gru_dir_backward(X, {wx, wh, b}, false, cache, c, dX, dwx, dwh, db);
    track("gru-cell", testutil::max_fd_rel_err(X, loss, dX));
    track("gru-cell", testutil::max_fd_rel_err(wx, loss, dwx));
    track("gru-cell", testutil::max_fd_rel_err(wh, loss, dwh));
    track("gru-cell", testutil::max_fd_rel_err(b, loss, db));
  }

  // BiGRU layer (sum and concat modes)
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t T = 2 + (trial % 3), I = 2, H = 3;
    const bool sum = trial % 2 == 0;
    Tensor X = testutil::random_tensor(rng, {T, I});
    Tensor wxf = testutil::random_tensor(rng, {3 * H, I});
    Tensor whf = testutil::random_tensor(rng, {3 * H, H});
    Tensor bf = testutil::random_tensor(rng, {3 * H});
    Tensor wxb = testutil::random_tensor(rng, {3 * H, I});
    Tensor whb = testutil::random_tensor(rng, {3 * H, H});
    Tensor bb = testutil::random_tensor(rng, {3 * H});
    const Tensor c = testutil::random_tensor(rng, {T, sum ? H : 2 * H});
    auto loss = [&]() {
      return weighted(nn::bigru_layer_forward(X, {wxf, whf, bf}, {wxb, whb, bb}, sum), c);
    };
    nn::BiGruCache cache;
    nn::bigru_layer_forward(X, {wxf, whf, bf}, {wxb, whb, bb}, sum, &cache);
    Tensor dX, dwxf(wxf.dims()), dwhf(whf.dims()), dbf(bf.dims());
    Tensor dwxb(wxb.dims()), dwhb(whb.dims()), dbb(bb.dims());
    nn::bigru_layer_backward({wxf, whf, bf}, {wxb, whb, bb}, sum, cache, c, dX, dwxf, dwhf, dbf,
                             dwxb, dwhb, dbb);
    track("bigru", testutil::max_fd_rel_err(X, loss, dX));
    track("bigru", testutil::max_fd_rel_err(wxf, loss, dwxf));
    track("bigru", testutil::max_fd_rel_err(whb, loss, dwhb));
    track("bigru", testutil::max_fd_rel_err(bb, loss, dbb));
  }

  // dense
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = testutil::random_tensor(rng, {4, 3});
    Tensor w = testutil::random_tensor(rng, {5, 3});
    Tensor b = testutil::random_tensor(rng, {5});
    const Tensor c = testutil::random_tensor(rng, {4, 5});
    auto loss = [&]() { return weighted(nn::dense_forward(x, w, b), c); };
    Tensor dx, dw, db;
    nn::dense_backward(x, w, c, dx, dw, db);
    track("dense", testutil::max_fd_rel_err(x, loss, dx));
    track("dense", testutil::max_fd_rel_err(w, loss, dw));
    track("dense", testutil::max_fd_rel_err(b, loss, db));
  }

  // softmax
  for (int trial = 0; trial < 50; ++trial) {
    Tensor logits = testutil::random_tensor(rng, {3, 5}, 2.0);
    const Tensor c = testutil::random_tensor(rng, {3, 5});
    auto loss = [&]() { return weighted(nn::softmax_rows(logits), c); };
    const Tensor dlogits = nn::softmax_backward_rows(nn::softmax_rows(logits), c);
    track("softmax", testutil::max_fd_rel_err(logits, loss, dlogits));
  }

  return {worst_overall <= 1e-4,
          "worst rel err " + fmt(worst_overall) + " (" + worst_layer + ")"};
}

// --------------------------------------------------------------------------
// criterion 4: full-width beam equals the exhaustive argmax; divergence case

std::pair<bool, std::string> decoder_oracle() {
  Rng rng(2027);
  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t T = 1 + static_cast<std::int64_t>(rng.uniform_int(6));
    const Tensor post = testutil::random_posteriors(rng, T, 4);
    const Tensor lp = testutil::log_of(post);
    LabelSequence best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (const auto& labels : testutil::all_label_sequences(3, static_cast<int>(T))) {
      const double loss = ctc_loss(lp, labels, 3);
      if (std::isinf(loss)) continue;
      if (-loss > best_score + 1e-15 ||
          (std::fabs(-loss - best_score) <= 1e-15 && labels < best)) {
        best_score = -loss;
        best = labels;
      }
    }
    const auto beam = prefix_beam_search_labels(post, 3, 4000, 0.0);
    if (beam.front().labels != best) {
      return {false, "argmax mismatch at trial " + std::to_string(trial)};
    }
    if (std::fabs(beam.front().log_prob - best_score) > 1e-9) {
      return {false, "score mismatch " + fmt(std::fabs(beam.front().log_prob - best_score))};
    }
  }

  // documented divergence: p(blank)=0.6, p(a)=0.4 on both frames
  Tensor post({2, 2});
  post.at(0, 0) = 0.4;
  post.at(0, 1) = 0.6;
  post.at(1, 0) = 0.4;
  post.at(1, 1) = 0.6;
  const bool greedy_empty = greedy_decode_labels(post, 1).empty();
  const auto beam = prefix_beam_search_labels(post, 1, 10, 0.0);
  const bool beam_a = beam.front().labels == LabelSequence{0};
  if (!greedy_empty || !beam_a) return {false, "divergence case failed"};
  return {true, "100 trials + divergence case"};
}

// --------------------------------------------------------------------------
// criterion 5: overfit a tiny model to CER 0 within the epoch budget

std::string synth_utterance(const std::string& text, const Alphabet& alphabet,
                            const std::string& path, int rate) {
  std::vector<double> samples(static_cast<std::size_t>(0.08 * rate), 0.0);
  for (char32_t cp : utf8::decode(text)) {
    if (cp == U' ') {
      samples.insert(samples.end(), static_cast<std::size_t>(0.15 * rate), 0.0);
      continue;
    }
    const double freq = 350.0 + 300.0 * alphabet.index_of(cp);
    const auto n = static_cast<std::size_t>(0.14 * rate);
    for (std::size_t i = 0; i < n; ++i) {
      const double env = std::min({1.0, static_cast<double>(i) / (0.01 * rate),
                                   (static_cast<double>(n) - 1.0 - static_cast<double>(i)) /
                                       (0.01 * rate)});
      samples.push_back(0.6 * env *
                        std::sin(2.0 * 3.14159265358979323846 * freq * static_cast<double>(i) / rate));
    }
    samples.insert(samples.end(), static_cast<std::size_t>(0.02 * rate), 0.0);
  }
  samples.insert(samples.end(), static_cast<std::size_t>(0.08 * rate), 0.0);
  write_wav(path, samples, rate);
  return path;
}

std::pair<bool, std::string> overfit_integration() {
  const int rate = 8000;
  const Alphabet alphabet = Alphabet::load(testutil::alphabet_path());
  const auto dir = testutil::fresh_dir("acceptance-overfit");
  const std::vector<std::string> texts = {
      "بت سر مب", "تر سم رب",
      "بس تم سر", "مب بت تر",
      "سر رب بس", "تم مب سم",
      "رب بس بت", "سم تر تم"};
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    ManifestEntry e;
    e.id = "u" + std::to_string(i);
    e.audio_path =
        synth_utterance(texts[i], alphabet, (dir / ("u" + std::to_string(i) + ".wav")).string(), rate);
    e.text = texts[i];
    e.duration_s = 1.5;
    entries.push_back(e);
  }

  // tiny model pinned by the criterion: 1 conv of 8 filters, 1 BiGRU of 32
  // units, dense 64, Adam at 1e-4
  Config cfg;
  cfg.set("features", "fft_size", "512");
  cfg.set("features", "hop_size", "256");
  cfg.set("model", "conv_layers", "1");
  cfg.set("model", "conv0_kernel", "11x41");
  cfg.set("model", "conv0_stride", "2x2");
  cfg.set("model", "conv0_filters", "8");
  cfg.set("model", "num_gru_layers", "1");
  cfg.set("model", "gru_units", "32");
  cfg.set("model", "dense_units", "64");
  cfg.set("model", "dropout_rate", "0");
  cfg.set("train", "epochs", "150");  // the criterion allows up to 300
  cfg.set("train", "batch_size", "2");
  cfg.set("train", "lr", "1e-4");
  cfg.set("train", "seed", "7");

  const auto result = train(cfg, entries, entries, alphabet, (dir / "run").string());
  int zero_epoch = -1;
  for (const auto& s : result.log) {
    if (s.val_cer == 0.0) {
      zero_epoch = s.epoch;
      break;
    }
  }
  if (zero_epoch < 0) {
    return {false, "training-set CER never reached 0 (best " + fmt(result.best_val_cer) + ")"};
  }
  return {true, "training-set CER hit 0% at epoch " + std::to_string(zero_epoch) + " (budget 300)"};
}

// --------------------------------------------------------------------------
// criterion 6: metrics vs recursive oracle + replay soundness

std::pair<bool, std::string> metrics_oracle() {
  const std::vector<std::string> pool{"a", "b", "c"};
  std::vector<std::vector<std::string>> all{{}};
  std::vector<std::vector<std::string>> frontier{{}};
  for (int l = 0; l < 6; ++l) {
    std::vector<std::vector<std::string>> next;
    for (const auto& seq : frontier) {
      for (const auto& tok : pool) {
        auto grown = seq;
        grown.push_back(tok);
        all.push_back(grown);
        next.push_back(std::move(grown));
      }
    }
    frontier = std::move(next);
  }
  long long checked = 0;
  for (const auto& ref : all) {
    if (ref.empty()) continue;
    for (const auto& hyp : all) {
      if (align(ref, hyp).total_errors() != testutil::reference_edit_distance(ref, hyp)) {
        return {false, "minimality violated"};
      }
      ++checked;
    }
  }

  Rng rng(2028);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<std::string> ref, hyp;
    const auto rl = 1 + rng.uniform_int(8);
    const auto hl = rng.uniform_int(9);
    for (std::uint64_t i = 0; i < rl; ++i) ref.push_back(pool[rng.uniform_int(3)]);
    for (std::uint64_t i = 0; i < hl; ++i) hyp.push_back(pool[rng.uniform_int(3)]);
    const auto counts = align(ref, hyp);
    if (replay_ops(ref, counts.ops) != hyp) return {false, "replay failed"};
  }
  return {true, std::to_string(checked) + " exhaustive pairs + 10000 replays"};
}

// --------------------------------------------------------------------------
// criterion 7: shape law and row-stochastic softmax

std::pair<bool, std::string> shape_law() {
  // the published stack on a (109, 401) input
  const ModelConfig cfg = ModelConfig::paper_default(401);
  if (cfg.output_time(109) != 55 || cfg.output_bins() != 101) {
    return {false, "static shape law broken"};
  }
  const ModelParams params = init_model(cfg, 1);
  Rng rng(2029);
  const Tensor spec = testutil::random_tensor(rng, {109, 401});
  ForwardCache cache;
  const Tensor post = model_forward(params, spec, false, 0, &cache);
  const auto& conv_out = cache.convs.back().activated;
  if (conv_out.dims() != std::vector<std::int64_t>{55, 101, 32}) {
    return {false, "conv stack output is not (55, 101, 32)"};
  }
  if (post.dims() != std::vector<std::int64_t>{55, 46}) {
    return {false, "posterior is not (55, 46)"};
  }

  // row sums on 1000 random tiny-model inputs
  double worst = 0.0;
  ModelConfig tiny;
  tiny.convs = {{3, 5, 2, 2, 2}};
  tiny.num_gru_layers = 1;
  tiny.gru_units = 4;
  tiny.dense_units = 5;
  tiny.num_classes = 46;
  tiny.input_bins = 8;
  for (int i = 0; i < 10; ++i) {
    const ModelParams p = init_model(tiny, 100 + static_cast<std::uint64_t>(i));
    for (int j = 0; j < 100; ++j) {
      const std::int64_t T = 1 + static_cast<std::int64_t>(rng.uniform_int(7));
      const Tensor x = testutil::random_tensor(rng, {T, 8}, 2.0);
      const Tensor probs = model_forward(p, x, false);
      for (std::int64_t t = 0; t < probs.dim(0); ++t) {
        double row = 0.0;
        for (std::int64_t k = 0; k < probs.dim(1); ++k) row += probs.at(t, k);
        worst = std::max(worst, std::fabs(row - 1.0));
      }
    }
  }
  if (worst > 1e-6) return {false, "row sum off by " + fmt(worst)};
  return {true, "stack (109,401)->(55,101,32), width 46; 1000 inputs, worst row-sum err " + fmt(worst)};
}

// --------------------------------------------------------------------------
// criterion 8: split fidelity

std::pair<bool, std::string> split_fidelity() {
  std::vector<ManifestEntry> entries(15810);
  for (std::size_t i = 0; i < entries.size(); ++i) entries[i].id = "clip" + std::to_string(i);
  SplitSpec spec;
  spec.seed = 20240601;
  const auto s1 = split_manifest(entries, spec);
  if (s1.train.size() != 12648 || s1.val.size() != 1581 || s1.test.size() != 1581) {
    return {false, "sizes " + std::to_string(s1.train.size()) + "/" + std::to_string(s1.val.size()) +
                       "/" + std::to_string(s1.test.size())};
  }
  const auto s2 = split_manifest(entries, spec);
  for (std::size_t i = 0; i < s1.train.size(); ++i) {
    if (s1.train[i].id != s2.train[i].id) return {false, "split not deterministic"};
  }
  return {true, "12648/1581/1581, deterministic"};
}

// --------------------------------------------------------------------------
// criterion 9: checkpoint round trip + alphabet hash rejection

std::pair<bool, std::string> checkpoint_round_trip() {
  const auto dir = testutil::fresh_dir("acceptance-ckpt");
  const Alphabet alphabet = Alphabet::load(testutil::alphabet_path());
  Config cfg;
  cfg.set("features", "fft_size", "16");
  cfg.set("features", "hop_size", "8");
  cfg.set("model", "conv_layers", "1");
  cfg.set("model", "conv0_kernel", "3x3");
  cfg.set("model", "conv0_stride", "2x2");
  cfg.set("model", "conv0_filters", "2");
  cfg.set("model", "num_gru_layers", "1");
  cfg.set("model", "gru_units", "3");
  cfg.set("model", "dense_units", "4");
  const ModelParams params = init_model(cfg.model(), 5);

  const std::string p1 = (dir / "one.ckpt").string();
  const std::string p2 = (dir / "two.ckpt").string();
  save_checkpoint(p1, params, alphabet.hash(), cfg.canonical());
  const Checkpoint first = load_checkpoint(p1);
  save_checkpoint(p2, first.params, first.alphabet_hash, first.config_text);
  const Checkpoint second = load_checkpoint(p2);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  if (b1 != b2 || b1.empty()) return {false, "file round trip not bit-exact"};

  Rng rng(2030);
  const Tensor spec = testutil::random_tensor(rng, {6, 9});
  const Tensor post1 = model_forward(first.params, spec, false);
  const Tensor post2 = model_forward(second.params, spec, false);
  for (std::int64_t i = 0; i < post1.size(); ++i) {
    if (post1[i] != post2[i]) return {false, "forward not bit-identical"};
  }

  // a checkpoint written under a different alphabet must be rejected
  std::vector<char32_t> other_symbols;
  for (char32_t c = U'a'; c < U'a' + 45; ++c) other_symbols.push_back(c);
  const Alphabet other = Alphabet::from_symbols(other_symbols);
  bool rejected = false;
  try {
    ensure_alphabet(first, other);
  } catch (const AlphabetMismatch&) {
    rejected = true;
  }
  if (!rejected) return {false, "alphabet mismatch accepted"};
  return {true, "bit-exact file + forward; mismatched alphabet rejected"};
}

// --------------------------------------------------------------------------
// criterion 10: padding invariance

std::pair<bool, std::string> padding_invariance() {
  ModelConfig cfg;
  cfg.convs = {{3, 5, 2, 2, 2}};
  cfg.num_gru_layers = 1;
  cfg.gru_units = 4;
  cfg.dense_units = 5;
  cfg.num_classes = 5;
  cfg.input_bins = 6;
  cfg.dropout_rate = 0.0;
  const ModelParams params = init_model(cfg, 77);

  Rng rng(2031);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<NormalizedSpectrogram, LabelSequence>> items;
    const int B = 2 + static_cast<int>(rng.uniform_int(4));
    for (int b = 0; b < B; ++b) {
      NormalizedSpectrogram s;
      s.frames = testutil::random_tensor(rng, {4 + static_cast<std::int64_t>(rng.uniform_int(14)), 6});
      items.emplace_back(s, LabelSequence{static_cast<int>(rng.uniform_int(4))});
    }
    const Batch batch = pad_batch(items);
    for (int b = 0; b < batch.size(); ++b) {
      ForwardCache cache;
      model_forward(params, batch.item_features(b), true, 9, &cache);
      const double batched = ctc_grad(cache.logits, batch.item_labels(b), 4).loss;
      ForwardCache solo;
      model_forward(params, items[static_cast<std::size_t>(b)].first.frames, true, 9, &solo);
      const double alone = ctc_grad(solo.logits, items[static_cast<std::size_t>(b)].second, 4).loss;
      worst = std::max(worst, std::fabs(batched - alone));
    }
  }
  return {worst <= 1e-9, "20 batch configurations, worst |batched-solo| = " + fmt(worst)};
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  run(1, "CTC loss equals brute-force path enumeration (<= 1e-9)", ctc_oracle_sweep);
  run(2, "CTC total probability sums to 1 (<= 1e-9)", ctc_total_probability);
  run(3, "finite-difference gradient checks (<= 1e-4 rel)", gradient_checks);
  run(4, "beam search equals exhaustive argmax; greedy/beam divergence", decoder_oracle);
  run(5, "tiny-model overfit reaches 0% training CER", overfit_integration);
  run(6, "alignment counts match the recursive oracle; ops replay", metrics_oracle);
  run(7, "conv shape law (109,401)->(55,101,32); softmax rows sum to 1", shape_law);
  run(8, "15810-entry split is 12648/1581/1581 and deterministic", split_fidelity);
  run(9, "checkpoint round trip bit-exact; alphabet mismatch rejected", checkpoint_round_trip);
  run(10, "per-item CTC loss is invariant to batch padding (<= 1e-9)", padding_invariance);
  if (g_failures > 0) {
    std::printf("%d criterion(s) FAILED\n", g_failures);
    return 1;
  }
  std::printf("all 10 criteria passed\n");
  return 0;
}
