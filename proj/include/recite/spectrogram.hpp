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

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "recite/errors.hpp"
#include "recite/tensor.hpp"
#include "recite/wav.hpp"

namespace recite {

/// Time-major magnitude spectrogram: frames x (fft_size/2 + 1) bins.
struct Spectrogram {
  Tensor frames;  // T x F, magnitudes >= 0
  int fft_size = 0;
  int hop_size = 0;

  std::int64_t num_frames() const { return frames.dim(0); }
  std::int64_t num_bins() const { return frames.dim(1); }
};

/// Spectrogram standardized to zero mean / unit variance over all cells.
/// The source statistics are retained for audit.
struct NormalizedSpectrogram {
  Tensor frames;  // T x F
  double source_mean = 0.0;
  double source_std = 0.0;
  int fft_size = 0;
  int hop_size = 0;

  std::int64_t num_frames() const { return frames.dim(0); }
  std::int64_t num_bins() const { return frames.dim(1); }
};

struct FeatureConfig {
  int fft_size = 800;   // frame length in samples
  int hop_size = 400;
  bool log_magnitude = false;
  double norm_epsilon = 1e-8;
};

namespace fft_detail {

/// Complex DFT, unnormalized, recursive radix-2 with a naive fallback for odd
/// lengths. Handles every frame length the config allows (512/800/1024 and
/// other even sizes split cleanly; odd factors fall back to O(n^2), which is
/// fine at the small sizes they occur in).
inline void dft_naive(const std::vector<std::complex<double>>& in,
                      std::vector<std::complex<double>>& out) {
  const std::size_t n = in.size();
  out.assign(n, {0.0, 0.0});
  const double w = -2.0 * 3.14159265358979323846 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = w * static_cast<double>(k * t % n);
      acc += in[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
}

inline void fft(const std::vector<std::complex<double>>& in,
                std::vector<std::complex<double>>& out) {
  const std::size_t n = in.size();
  if (n == 1) {
    out = in;
    return;
  }
  if (n % 2 != 0) {
    dft_naive(in, out);
    return;
  }
  std::vector<std::complex<double>> even(n / 2), odd(n / 2);
  for (std::size_t i = 0; i < n / 2; ++i) {
    even[i] = in[2 * i];
    odd[i] = in[2 * i + 1];
  }
  std::vector<std::complex<double>> even_out, odd_out;
  fft(even, even_out);
  fft(odd, odd_out);
  out.assign(n, {0.0, 0.0});
  const double w = -2.0 * 3.14159265358979323846 / static_cast<double>(n);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const std::complex<double> tw(std::cos(w * static_cast<double>(k)),
                                  std::sin(w * static_cast<double>(k)));
    const auto t = tw * odd_out[k];
    out[k] = even_out[k] + t;
    out[k + n / 2] = even_out[k] - t;
  }
}

/// Periodic Hann window.
inline std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * i / static_cast<double>(n));
  }
  return w;
}

}  // namespace fft_detail

/// STFT magnitudes over Hann-windowed frames. T = 1 + floor((N - fft)/hop);
/// the partial tail frame is dropped. F = fft_size/2 + 1.
inline Spectrogram spectrogram(const PcmSignal& signal, int fft_size, int hop_size) {
  if (fft_size <= 0 || hop_size <= 0 || hop_size > fft_size) {
    throw ShapeMismatch("spectrogram: need 0 < hop_size <= fft_size");
  }
  const std::int64_t n = static_cast<std::int64_t>(signal.samples.size());
  if (n < fft_size) {
    throw SignalTooShort("signal has " + std::to_string(n) + " samples, need at least " +
                         std::to_string(fft_size));
  }
  const std::int64_t num_frames = 1 + (n - fft_size) / hop_size;
  const std::int64_t num_bins = fft_size / 2 + 1;
  const auto window = fft_detail::hann_window(fft_size);

  Spectrogram spec;
  spec.fft_size = fft_size;
  spec.hop_size = hop_size;
  spec.frames = Tensor({num_frames, num_bins});

  std::vector<std::complex<double>> frame(static_cast<std::size_t>(fft_size));
  std::vector<std::complex<double>> transformed;
  for (std::int64_t t = 0; t < num_frames; ++t) {
    const double* src = signal.samples.data() + t * hop_size;
    for (int i = 0; i < fft_size; ++i) {
      frame[static_cast<std::size_t>(i)] = {src[i] * window[static_cast<std::size_t>(i)], 0.0};
    }
    fft_detail::fft(frame, transformed);
    for (std::int64_t k = 0; k < num_bins; ++k) {
      spec.frames.at(t, k) = std::abs(transformed[static_cast<std::size_t>(k)]);
    }
  }
  return spec;
}

/// Per-utterance scalar standardization: (x - mean) / max(std, eps). A flat
/// spectrogram (std below eps) maps to all zeros instead of blowing up.
inline NormalizedSpectrogram normalize(const Spectrogram& spec, double eps = 1e-8,
                                       bool log_magnitude = false) {
  NormalizedSpectrogram out;
  out.fft_size = spec.fft_size;
  out.hop_size = spec.hop_size;
  out.frames = spec.frames;
  if (log_magnitude) {
    for (std::int64_t i = 0; i < out.frames.size(); ++i) {
      out.frames[i] = std::log(out.frames[i] + 1e-10);
    }
  }
  const double m = tensor_ops::mean(out.frames);
  const double s = tensor_ops::stddev(out.frames, m);
  out.source_mean = m;
  out.source_std = s;
  const double denom = s > eps ? s : eps;
  for (std::int64_t i = 0; i < out.frames.size(); ++i) {
    out.frames[i] = (out.frames[i] - m) / denom;
  }
  return out;
}

inline NormalizedSpectrogram featurize(const PcmSignal& signal, const FeatureConfig& cfg) {
  return normalize(spectrogram(signal, cfg.fft_size, cfg.hop_size), cfg.norm_epsilon,
                   cfg.log_magnitude);
}

}  // namespace recite
