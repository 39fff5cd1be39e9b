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
#include <limits>
#include <vector>

#include "recite/errors.hpp"
#include "recite/tensor.hpp"
#include "recite/text_codec.hpp"

namespace recite {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(exp(a) + exp(b)) without leaving log space.
inline double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = a > b ? a : b;
  return m + std::log1p(std::exp(-std::fabs(a - b)));
}

struct CtcResult {
  double loss = 0.0;
  Tensor grad;  // T' x num_classes, dL/dlogits; empty unless gradient requested
};

namespace ctc_detail {

/// Labels interleaved with blanks: [blank, l1, blank, l2, ..., blank].
inline std::vector<int> extend_labels(const LabelSequence& labels, int blank) {
  std::vector<int> ext(2 * labels.size() + 1, blank);
  for (std::size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
  return ext;
}

inline void check_inputs(const Tensor& log_post, const LabelSequence& labels, int blank) {
  if (log_post.rank() != 2) throw ShapeMismatch("ctc: posteriors must be T' x classes");
  if (log_post.dim(0) == 0) throw EmptyPosterior("ctc: zero posterior frames");
  const int classes = static_cast<int>(log_post.dim(1));
  for (int l : labels) {
    if (l == blank) throw BlankInLabels("ctc: labels must not contain the blank class");
    if (l < 0 || l >= classes) {
      throw IndexOutOfRange("ctc: label index " + std::to_string(l) + " out of range");
    }
  }
}

/// Alpha recursion in log space. Returns the T' x (2L+1) lattice.
inline Tensor forward_lattice(const Tensor& log_post, const std::vector<int>& ext, int blank) {
  const std::int64_t T = log_post.dim(0);
  const std::int64_t S = static_cast<std::int64_t>(ext.size());
  Tensor alpha({T, S});
  alpha.fill(kNegInf);
  alpha.at(0, 0) = log_post.at(0, ext[0]);
  if (S > 1) alpha.at(0, 1) = log_post.at(0, ext[1]);
  for (std::int64_t t = 1; t < T; ++t) {
    for (std::int64_t s = 0; s < S; ++s) {
      double a = alpha.at(t - 1, s);
      if (s >= 1) a = logaddexp(a, alpha.at(t - 1, s - 1));
      if (s >= 2 && ext[static_cast<std::size_t>(s)] != blank &&
          ext[static_cast<std::size_t>(s)] != ext[static_cast<std::size_t>(s - 2)]) {
        a = logaddexp(a, alpha.at(t - 1, s - 2));
      }
      alpha.at(t, s) = a + log_post.at(t, ext[static_cast<std::size_t>(s)]);
    }
  }
  return alpha;
}

/// Beta recursion (mirrored alpha), also including the frame-t emission.
inline Tensor backward_lattice(const Tensor& log_post, const std::vector<int>& ext, int blank) {
  const std::int64_t T = log_post.dim(0);
  const std::int64_t S = static_cast<std::int64_t>(ext.size());
  Tensor beta({T, S});
  beta.fill(kNegInf);
  beta.at(T - 1, S - 1) = log_post.at(T - 1, ext[static_cast<std::size_t>(S - 1)]);
  if (S > 1) beta.at(T - 1, S - 2) = log_post.at(T - 1, ext[static_cast<std::size_t>(S - 2)]);
  for (std::int64_t t = T - 2; t >= 0; --t) {
    for (std::int64_t s = S - 1; s >= 0; --s) {
      double b = beta.at(t + 1, s);
      if (s + 1 < S) b = logaddexp(b, beta.at(t + 1, s + 1));
      if (s + 2 < S && ext[static_cast<std::size_t>(s)] != blank &&
          ext[static_cast<std::size_t>(s)] != ext[static_cast<std::size_t>(s + 2)]) {
        b = logaddexp(b, beta.at(t + 1, s + 2));
      }
      beta.at(t, s) = b + log_post.at(t, ext[static_cast<std::size_t>(s)]);
    }
  }
  return beta;
}

inline double total_log_prob(const Tensor& alpha) {
  const std::int64_t T = alpha.dim(0), S = alpha.dim(1);
  double lp = alpha.at(T - 1, S - 1);
  if (S > 1) lp = logaddexp(lp, alpha.at(T - 1, S - 2));
  return lp;
}

/// Merge consecutive repeats, then drop blanks.
inline LabelSequence collapse_path(const std::vector<int>& path, int blank) {
  LabelSequence out;
  int prev = -1;
  for (int c : path) {
    if (c != prev && c != blank) out.push_back(c);
    prev = c;
  }
  return out;
}

}  // namespace ctc_detail

/// Negative log probability of `labels` under per-frame log posteriors
/// (rows are log-softmax outputs over 45 symbols + blank). Sums over every
/// frame alignment that collapses to the labels via the forward recursion.
/// Returns +inf when no alignment exists (too few frames for the target).
inline double ctc_loss(const Tensor& log_posteriors, const LabelSequence& labels,
                       int blank = kBlankIndex) {
  ctc_detail::check_inputs(log_posteriors, labels, blank);
  const std::int64_t T = log_posteriors.dim(0);
  const auto L = static_cast<std::int64_t>(labels.size());
  std::int64_t repeats = 0;
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (labels[i] == labels[i - 1]) ++repeats;
  }
  if (T < L + repeats) return std::numeric_limits<double>::infinity();
  const auto ext = ctc_detail::extend_labels(labels, blank);
  const Tensor alpha = ctc_detail::forward_lattice(log_posteriors, ext, blank);
  const double lp = ctc_detail::total_log_prob(alpha);
  return -lp;
}

/// Loss plus dL/dlogits from the alpha-beta occupancies. Input rows are raw
/// logits; the gradient is p_t - gamma_t where gamma_t is the per-frame
/// label-occupancy distribution, so every row sums to zero.
inline CtcResult ctc_grad(const Tensor& logits, const LabelSequence& labels,
                          int blank = kBlankIndex) {
  ctc_detail::check_inputs(logits, labels, blank);
  const std::int64_t T = logits.dim(0);
  const std::int64_t C = logits.dim(1);

  // log-softmax per row
  Tensor log_post({T, C});
  Tensor post({T, C});
  for (std::int64_t t = 0; t < T; ++t) {
    double mx = kNegInf;
    for (std::int64_t k = 0; k < C; ++k) mx = std::max(mx, logits.at(t, k));
    double z = 0.0;
    for (std::int64_t k = 0; k < C; ++k) z += std::exp(logits.at(t, k) - mx);
    const double log_z = mx + std::log(z);
    for (std::int64_t k = 0; k < C; ++k) {
      log_post.at(t, k) = logits.at(t, k) - log_z;
      post.at(t, k) = std::exp(log_post.at(t, k));
    }
  }

  const double loss = ctc_loss(log_post, labels, blank);
  if (!std::isfinite(loss)) {
    throw NoValidAlignment("ctc: target of length " + std::to_string(labels.size()) +
                           " cannot align to " + std::to_string(T) + " frames");
  }

  const auto ext = ctc_detail::extend_labels(labels, blank);
  const Tensor alpha = ctc_detail::forward_lattice(log_post, ext, blank);
  const Tensor beta = ctc_detail::backward_lattice(log_post, ext, blank);
  const double log_p = -loss;

  CtcResult result;
  result.loss = loss;
  result.grad = post;  // start from softmax, subtract occupancies
  for (std::int64_t t = 0; t < T; ++t) {
    std::vector<double> occ(static_cast<std::size_t>(C), kNegInf);
    for (std::size_t s = 0; s < ext.size(); ++s) {
      const int k = ext[s];
      const double v =
          alpha.at(t, static_cast<std::int64_t>(s)) + beta.at(t, static_cast<std::int64_t>(s)) -
          log_post.at(t, k) - log_p;
      occ[static_cast<std::size_t>(k)] = logaddexp(occ[static_cast<std::size_t>(k)], v);
    }
    for (std::int64_t k = 0; k < C; ++k) {
      if (occ[static_cast<std::size_t>(k)] != kNegInf) {
        result.grad.at(t, k) -= std::exp(occ[static_cast<std::size_t>(k)]);
      }
    }
  }
  return result;
}

/// Test oracle: explicit sum over all alignment paths, restricted to the
/// symbols present in the labels plus blank (other symbols cannot appear in a
/// path that collapses to the labels). Kept deliberately independent of the
/// dynamic-programming route above.
inline double ctc_loss_bruteforce(const Tensor& log_posteriors, const LabelSequence& labels,
                                  int blank = kBlankIndex, std::int64_t path_cap = 20'000'000) {
  ctc_detail::check_inputs(log_posteriors, labels, blank);
  const std::int64_t T = log_posteriors.dim(0);

  std::vector<int> symbols;
  for (int l : labels) {
    bool seen = false;
    for (int s : symbols) seen = seen || (s == l);
    if (!seen) symbols.push_back(l);
  }
  symbols.push_back(blank);

  double num_paths = 1.0;
  for (std::int64_t t = 0; t < T; ++t) num_paths *= static_cast<double>(symbols.size());
  if (num_paths > static_cast<double>(path_cap)) {
    throw TooLarge("ctc bruteforce: " + std::to_string(num_paths) + " paths exceed cap");
  }

  double total = 0.0;
  std::vector<int> path(static_cast<std::size_t>(T), 0);
  // odometer enumeration over symbols^T
  while (true) {
    std::vector<int> concrete(static_cast<std::size_t>(T));
    double log_prob = 0.0;
    for (std::int64_t t = 0; t < T; ++t) {
      concrete[static_cast<std::size_t>(t)] = symbols[static_cast<std::size_t>(path[static_cast<std::size_t>(t)])];
      log_prob += log_posteriors.at(t, concrete[static_cast<std::size_t>(t)]);
    }
    if (ctc_detail::collapse_path(concrete, blank) == labels) total += std::exp(log_prob);
    std::int64_t pos = 0;
    while (pos < T) {
      if (++path[static_cast<std::size_t>(pos)] < static_cast<int>(symbols.size())) break;
      path[static_cast<std::size_t>(pos)] = 0;
      ++pos;
    }
    if (pos == T) break;
  }
  if (total <= 0.0) return std::numeric_limits<double>::infinity();
  return -std::log(total);
}

}  // namespace recite
