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
#include <cstdint>
#include <string>
#include <vector>

#include "recite/errors.hpp"
#include "recite/rng.hpp"
#include "recite/tensor.hpp"
#include "recite/text_codec.hpp"

namespace recite {

struct ConvSpec {
  int kernel_t = 0;
  int kernel_f = 0;
  int stride_t = 1;
  int stride_f = 1;
  int filters = 0;
};

/// Architecture hyperparameters. The defaults are the published topology:
/// two 2-D convolutions (kernels (11,41)/(11,21), strides (2,2)/(1,2), 32
/// filters each), five bidirectional GRU layers of 512 units with summed
/// directions and 0.5 dropout, a 1024-unit dense layer, and 46 output
/// classes (45 symbols + CTC blank).
struct ModelConfig {
  std::vector<ConvSpec> convs{{11, 41, 2, 2, 32}, {11, 21, 1, 2, 32}};
  int num_gru_layers = 5;
  int gru_units = 512;
  int dense_units = 1024;
  int num_classes = kNumClasses;
  double dropout_rate = 0.5;
  int input_bins = 401;
  bool sum_directions = true;  // false concatenates the two directions instead
  bool dense_relu = true;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.9;  // running = momentum*running + (1-momentum)*batch

  static ModelConfig paper_default(int bins) {
    ModelConfig c;
    c.input_bins = bins;
    return c;
  }

  void validate() const {
    if (input_bins <= 0) throw ShapeMismatch("model config: input_bins must be positive");
    if (num_classes < 2) throw ShapeMismatch("model config: need at least 2 classes");
    if (gru_units <= 0 && num_gru_layers > 0) throw ShapeMismatch("model config: gru_units must be positive");
    if (dense_units <= 0) throw ShapeMismatch("model config: dense_units must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ShapeMismatch("model config: dropout_rate must be in [0,1)");
    for (const auto& c : convs) {
      if (c.kernel_t <= 0 || c.kernel_f <= 0 || c.stride_t < 1 || c.stride_f < 1 || c.filters <= 0) {
        throw ShapeMismatch("model config: malformed conv spec");
      }
    }
  }

  static std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

  /// Output frame count after the conv stack (same padding: ceil division
  /// per time stride; the default stack halves time exactly once).
  std::int64_t output_time(std::int64_t t) const {
    for (const auto& c : convs) t = ceil_div(t, c.stride_t);
    return t;
  }

  std::int64_t output_bins() const {
    std::int64_t f = input_bins;
    for (const auto& c : convs) f = ceil_div(f, c.stride_f);
    return f;
  }

  std::int64_t gru_input_dim() const {
    return convs.empty() ? input_bins : output_bins() * convs.back().filters;
  }

  std::int64_t gru_output_dim() const {
    return sum_directions ? gru_units : 2 * static_cast<std::int64_t>(gru_units);
  }

  std::int64_t dense_input_dim() const {
    return num_gru_layers > 0 ? gru_output_dim() : gru_input_dim();
  }
};

/// All trainable tensors plus batch-norm running statistics, addressed by
/// name (conv0.kernel, gru2.bwd.w_h, dense.w, out.b, ...). GRU gate rows are
/// packed [update; reset; candidate].
struct ModelParams {
  ModelConfig config;
  NamedTensors tensors;

  Tensor& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("model params: missing tensor " + name);
    return it->second;
  }
  const Tensor& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("model params: missing tensor " + name);
    return it->second;
  }
};

namespace nn {

// ---------------------------------------------------------------------------
// initialization

inline void fill_scaled_uniform(Tensor& t, std::int64_t fan_in, Rng& rng) {
  const double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
}

// ---------------------------------------------------------------------------
// convolution (same padding)

struct ConvGeometry {
  std::int64_t out_t, out_f, pad_t, pad_f;
};

inline ConvGeometry conv_geometry(std::int64_t T, std::int64_t F, std::int64_t kt, std::int64_t kf,
                                  std::int64_t st, std::int64_t sf) {
  ConvGeometry g;
  g.out_t = ModelConfig::ceil_div(T, st);
  g.out_f = ModelConfig::ceil_div(F, sf);
  const std::int64_t need_t = (g.out_t - 1) * st + kt;
  const std::int64_t need_f = (g.out_f - 1) * sf + kf;
  g.pad_t = std::max<std::int64_t>(need_t - T, 0) / 2;
  g.pad_f = std::max<std::int64_t>(need_f - F, 0) / 2;
  return g;
}

/// 2-D convolution over a T x F x C input with symmetric zero padding so the
/// output is ceil(T/st) x ceil(F/sf) x filters.
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride_t,
                     int stride_f) {
  if (input.rank() != 3) throw ShapeMismatch("conv2d: input must be T x F x C");
  if (kernel.rank() != 4) throw ShapeMismatch("conv2d: kernel must be kt x kf x cin x cout");
  if (input.dim(2) != kernel.dim(2)) throw ShapeMismatch("conv2d: channel mismatch");
  const std::int64_t T = input.dim(0), F = input.dim(1), Cin = input.dim(2);
  const std::int64_t kt = kernel.dim(0), kf = kernel.dim(1), Cout = kernel.dim(3);
  if (bias.size() != Cout) throw ShapeMismatch("conv2d: bias size mismatch");
  const auto g = conv_geometry(T, F, kt, kf, stride_t, stride_f);

  Tensor out({g.out_t, g.out_f, Cout});
  for (std::int64_t ot = 0; ot < g.out_t; ++ot) {
    for (std::int64_t of = 0; of < g.out_f; ++of) {
      double* optr = &out.at(ot, of, 0);
      for (std::int64_t co = 0; co < Cout; ++co) optr[co] = bias[co];
    }
  }
  for (std::int64_t ot = 0; ot < g.out_t; ++ot) {
    for (std::int64_t p = 0; p < kt; ++p) {
      const std::int64_t it = ot * stride_t - g.pad_t + p;
      if (it < 0 || it >= T) continue;
      for (std::int64_t of = 0; of < g.out_f; ++of) {
        double* optr = &out.at(ot, of, 0);
        for (std::int64_t q = 0; q < kf; ++q) {
          const std::int64_t jf = of * stride_f - g.pad_f + q;
          if (jf < 0 || jf >= F) continue;
          const double* iptr = &input.at(it, jf, 0);
          const double* kptr = &kernel.at(p, q, 0, 0);
          for (std::int64_t ci = 0; ci < Cin; ++ci) {
            const double v = iptr[ci];
            if (v == 0.0) continue;
            const double* krow = kptr + ci * Cout;
            for (std::int64_t co = 0; co < Cout; ++co) optr[co] += v * krow[co];
          }
        }
      }
    }
  }
  return out;
}

inline void conv2d_backward(const Tensor& input, const Tensor& kernel, int stride_t, int stride_f,
                            const Tensor& dout, Tensor& dinput, Tensor& dkernel, Tensor& dbias) {
  const std::int64_t T = input.dim(0), F = input.dim(1), Cin = input.dim(2);
  const std::int64_t kt = kernel.dim(0), kf = kernel.dim(1), Cout = kernel.dim(3);
  const auto g = conv_geometry(T, F, kt, kf, stride_t, stride_f);
  if (dout.rank() != 3 || dout.dim(0) != g.out_t || dout.dim(1) != g.out_f || dout.dim(2) != Cout) {
    throw ShapeMismatch("conv2d_backward: upstream gradient shape mismatch");
  }
  dinput = Tensor(input.dims());
  dkernel = Tensor(kernel.dims());
  dbias = Tensor({Cout});

  for (std::int64_t ot = 0; ot < g.out_t; ++ot) {
    for (std::int64_t of = 0; of < g.out_f; ++of) {
      const double* dptr = &dout.at(ot, of, 0);
      for (std::int64_t co = 0; co < Cout; ++co) dbias[co] += dptr[co];
    }
  }
  for (std::int64_t ot = 0; ot < g.out_t; ++ot) {
    for (std::int64_t p = 0; p < kt; ++p) {
      const std::int64_t it = ot * stride_t - g.pad_t + p;
      if (it < 0 || it >= T) continue;
      for (std::int64_t of = 0; of < g.out_f; ++of) {
        const double* dptr = &dout.at(ot, of, 0);
        for (std::int64_t q = 0; q < kf; ++q) {
          const std::int64_t jf = of * stride_f - g.pad_f + q;
          if (jf < 0 || jf >= F) continue;
          const double* iptr = &input.at(it, jf, 0);
          double* diptr = &dinput.at(it, jf, 0);
          const double* kptr = &kernel.at(p, q, 0, 0);
          double* dkptr = &dkernel.at(p, q, 0, 0);
          for (std::int64_t ci = 0; ci < Cin; ++ci) {
            const double v = iptr[ci];
            const double* krow = kptr + ci * Cout;
            double* dkrow = dkptr + ci * Cout;
            double acc = 0.0;
            for (std::int64_t co = 0; co < Cout; ++co) {
              acc += krow[co] * dptr[co];
              dkrow[co] += v * dptr[co];
            }
            diptr[ci] += acc;
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// batch normalization (per channel over the T x F plane)

struct BnCache {
  Tensor xhat;                   // normalized input
  std::vector<double> mean;      // batch mean per channel
  std::vector<double> var;       // biased batch variance per channel
  std::vector<double> inv_std;   // 1/sqrt(var + eps)
  std::int64_t count = 0;        // elements per channel
};

inline Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                const Tensor& running_mean, const Tensor& running_var,
                                bool training, double eps, BnCache* cache = nullptr) {
  if (x.rank() != 3) throw ShapeMismatch("batchnorm: input must be T x F x C");
  const std::int64_t T = x.dim(0), F = x.dim(1), C = x.dim(2);
  if (gamma.size() != C || beta.size() != C) throw ShapeMismatch("batchnorm: parameter size mismatch");
  Tensor y(x.dims());
  const std::int64_t n = T * F;

  std::vector<double> mean(static_cast<std::size_t>(C)), var(static_cast<std::size_t>(C));
  if (training) {
    for (std::int64_t c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double* row = x.data() + i * C;
      for (std::int64_t c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] += row[c];
    }
    for (std::int64_t c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] /= static_cast<double>(n);
    for (std::int64_t c = 0; c < C; ++c) var[static_cast<std::size_t>(c)] = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double* row = x.data() + i * C;
      for (std::int64_t c = 0; c < C; ++c) {
        const double d = row[c] - mean[static_cast<std::size_t>(c)];
        var[static_cast<std::size_t>(c)] += d * d;
      }
    }
    for (std::int64_t c = 0; c < C; ++c) var[static_cast<std::size_t>(c)] /= static_cast<double>(n);
  } else {
    for (std::int64_t c = 0; c < C; ++c) {
      mean[static_cast<std::size_t>(c)] = running_mean[c];
      var[static_cast<std::size_t>(c)] = running_var[c];
    }
  }

  std::vector<double> inv_std(static_cast<std::size_t>(C));
  for (std::int64_t c = 0; c < C; ++c) {
    inv_std[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
  }
  Tensor xhat(x.dims());
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = x.data() + i * C;
    double* hrow = xhat.data() + i * C;
    double* yrow = y.data() + i * C;
    for (std::int64_t c = 0; c < C; ++c) {
      hrow[c] = (row[c] - mean[static_cast<std::size_t>(c)]) * inv_std[static_cast<std::size_t>(c)];
      yrow[c] = gamma[c] * hrow[c] + beta[c];
    }
  }
  if (cache) {
    if (!training) throw MissingCache("batchnorm: gradient cache requires training mode");
    cache->xhat = std::move(xhat);
    cache->mean = std::move(mean);
    cache->var = std::move(var);
    cache->inv_std = std::move(inv_std);
    cache->count = n;
  }
  return y;
}

/// Backward through the training-mode transform, including the dependence of
/// the batch statistics on the input.
inline void batchnorm_backward(const BnCache& cache, const Tensor& gamma, const Tensor& dout,
                               Tensor& dx, Tensor& dgamma, Tensor& dbeta) {
  const Tensor& xhat = cache.xhat;
  const std::int64_t C = xhat.dim(2);
  const std::int64_t n = cache.count;
  if (!dout.same_shape(xhat)) throw ShapeMismatch("batchnorm_backward: gradient shape mismatch");
  dx = Tensor(xhat.dims());
  dgamma = Tensor({C});
  dbeta = Tensor({C});

  std::vector<double> sum_dy(static_cast<std::size_t>(C), 0.0);
  std::vector<double> sum_dy_xhat(static_cast<std::size_t>(C), 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    const double* drow = dout.data() + i * C;
    const double* hrow = xhat.data() + i * C;
    for (std::int64_t c = 0; c < C; ++c) {
      sum_dy[static_cast<std::size_t>(c)] += drow[c];
      sum_dy_xhat[static_cast<std::size_t>(c)] += drow[c] * hrow[c];
    }
  }
  for (std::int64_t c = 0; c < C; ++c) {
    dbeta[c] = sum_dy[static_cast<std::size_t>(c)];
    dgamma[c] = sum_dy_xhat[static_cast<std::size_t>(c)];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const double* drow = dout.data() + i * C;
    const double* hrow = xhat.data() + i * C;
    double* xrow = dx.data() + i * C;
    for (std::int64_t c = 0; c < C; ++c) {
      const auto cc = static_cast<std::size_t>(c);
      xrow[c] = gamma[c] * cache.inv_std[cc] *
                (drow[c] - inv_n * sum_dy[cc] - hrow[c] * inv_n * sum_dy_xhat[cc]);
    }
  }
}

// ---------------------------------------------------------------------------
// activations

inline void relu_inplace(Tensor& t) {
  for (std::int64_t i = 0; i < t.size(); ++i) {
    if (t[i] < 0.0) t[i] = 0.0;
  }
}

/// dpre = dout where the activation was positive; relu output doubles as the
/// positivity cache.
inline Tensor relu_backward(const Tensor& post, const Tensor& dout) {
  if (!post.same_shape(dout)) throw ShapeMismatch("relu_backward: shape mismatch");
  Tensor d(dout.dims());
  for (std::int64_t i = 0; i < d.size(); ++i) d[i] = post[i] > 0.0 ? dout[i] : 0.0;
  return d;
}

/// One encoder conv stage: same-padded convolution, batch normalization,
/// then ReLU.
inline Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                             const Tensor& gamma, const Tensor& beta, const Tensor& running_mean,
                             const Tensor& running_var, int stride_t, int stride_f, bool training,
                             double bn_epsilon, BnCache* bn_cache = nullptr) {
  Tensor out = conv2d(input, kernel, bias, stride_t, stride_f);
  out = batchnorm_forward(out, gamma, beta, running_mean, running_var, training, bn_epsilon,
                          bn_cache);
  relu_inplace(out);
  return out;
}

inline Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeMismatch("softmax: expected a matrix");
  Tensor p(logits.dims());
  const std::int64_t T = logits.dim(0), C = logits.dim(1);
  for (std::int64_t t = 0; t < T; ++t) {
    double mx = logits.at(t, 0);
    for (std::int64_t k = 1; k < C; ++k) mx = std::max(mx, logits.at(t, k));
    double z = 0.0;
    for (std::int64_t k = 0; k < C; ++k) {
      p.at(t, k) = std::exp(logits.at(t, k) - mx);
      z += p.at(t, k);
    }
    for (std::int64_t k = 0; k < C; ++k) p.at(t, k) /= z;
  }
  return p;
}

/// dlogits = p .* (dprobs - rowdot(dprobs, p))
inline Tensor softmax_backward_rows(const Tensor& probs, const Tensor& dprobs) {
  if (!probs.same_shape(dprobs)) throw ShapeMismatch("softmax_backward: shape mismatch");
  Tensor d(probs.dims());
  const std::int64_t T = probs.dim(0), C = probs.dim(1);
  for (std::int64_t t = 0; t < T; ++t) {
    double dot = 0.0;
    for (std::int64_t k = 0; k < C; ++k) dot += dprobs.at(t, k) * probs.at(t, k);
    for (std::int64_t k = 0; k < C; ++k) d.at(t, k) = probs.at(t, k) * (dprobs.at(t, k) - dot);
  }
  return d;
}

// ---------------------------------------------------------------------------
// dense

/// y = x * W^T + b, with W laid out (out x in).
inline Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = tensor_ops::matmul_nt(x, w);
  const std::int64_t T = y.dim(0), O = y.dim(1);
  if (b.size() != O) throw ShapeMismatch("dense: bias size mismatch");
  for (std::int64_t t = 0; t < T; ++t) {
    double* row = y.data() + t * O;
    for (std::int64_t o = 0; o < O; ++o) row[o] += b[o];
  }
  return y;
}

inline void dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dx,
                           Tensor& dw, Tensor& db) {
  dx = tensor_ops::matmul(dy, w);
  dw = tensor_ops::matmul_tn(dy, x);
  const std::int64_t T = dy.dim(0), O = dy.dim(1);
  db = Tensor({O});
  for (std::int64_t t = 0; t < T; ++t) {
    const double* row = dy.data() + t * O;
    for (std::int64_t o = 0; o < O; ++o) db[o] += row[o];
  }
}

// ---------------------------------------------------------------------------
// GRU

struct GruDirView {
  const Tensor& w_x;  // 3H x I, gate rows packed [update; reset; candidate]
  const Tensor& w_h;  // 3H x H
  const Tensor& b;    // 3H
};

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// One GRU step:
///   z = sigma(Wz*[h,x] + bz), r = sigma(Wr*[h,x] + br)
///   c = tanh(Wc*[r.h, x] + bc), h' = (1-z).h + z.c
inline Tensor gru_cell_step(const Tensor& x, const Tensor& h_prev, const GruDirView& p) {
  const std::int64_t I = x.size(), H = h_prev.size();
  if (p.w_x.dim(0) != 3 * H || p.w_x.dim(1) != I || p.w_h.dim(0) != 3 * H || p.w_h.dim(1) != H ||
      p.b.size() != 3 * H) {
    throw ShapeMismatch("gru_cell_step: parameter shapes inconsistent");
  }
  std::vector<double> a(static_cast<std::size_t>(3 * H));
  for (std::int64_t i = 0; i < 3 * H; ++i) a[static_cast<std::size_t>(i)] = p.b[i];
  tensor_ops::matvec_accum(p.w_x, x.data(), a.data());
  // update and reset rows see h_prev directly
  for (std::int64_t i = 0; i < 2 * H; ++i) {
    const double* row = p.w_h.data() + i * H;
    double s = 0.0;
    for (std::int64_t j = 0; j < H; ++j) s += row[j] * h_prev[j];
    a[static_cast<std::size_t>(i)] += s;
  }
  std::vector<double> rh(static_cast<std::size_t>(H));
  for (std::int64_t j = 0; j < H; ++j) {
    rh[static_cast<std::size_t>(j)] = sigmoid(a[static_cast<std::size_t>(H + j)]) * h_prev[j];
  }
  for (std::int64_t i = 0; i < H; ++i) {
    const double* row = p.w_h.data() + (2 * H + i) * H;
    double s = 0.0;
    for (std::int64_t j = 0; j < H; ++j) s += row[j] * rh[static_cast<std::size_t>(j)];
    a[static_cast<std::size_t>(2 * H + i)] += s;
  }
  Tensor h({H});
  for (std::int64_t j = 0; j < H; ++j) {
    const double z = sigmoid(a[static_cast<std::size_t>(j)]);
    const double c = std::tanh(a[static_cast<std::size_t>(2 * H + j)]);
    h[j] = (1.0 - z) * h_prev[j] + z * c;
  }
  return h;
}

/// Per-direction activations, indexed by absolute time step.
struct GruDirCache {
  Tensor h_prev;  // T x H: hidden state entering each step
  Tensor z, r, c; // T x H each
  Tensor h;       // T x H: hidden state leaving each step
};

/// Runs one direction over the whole sequence. The input projection for all
/// steps is a single matrix product; only the recurrent term runs stepwise.
inline void gru_dir_forward(const Tensor& x_seq, const GruDirView& p, bool reverse,
                            Tensor& out_seq, GruDirCache* cache) {
  const std::int64_t T = x_seq.dim(0);
  const std::int64_t H = p.w_h.dim(1);
  if (p.w_x.dim(1) != x_seq.dim(1)) throw ShapeMismatch("gru layer: input width mismatch");
  Tensor gates_x = tensor_ops::matmul_nt(x_seq, p.w_x);  // T x 3H

  if (cache) {
    cache->h_prev = Tensor({T, H});
    cache->z = Tensor({T, H});
    cache->r = Tensor({T, H});
    cache->c = Tensor({T, H});
    cache->h = Tensor({T, H});
  }
  if (out_seq.rank() != 2 || out_seq.dim(0) != T) throw ShapeMismatch("gru layer: bad output buffer");

  std::vector<double> h(static_cast<std::size_t>(H), 0.0);
  std::vector<double> a(static_cast<std::size_t>(3 * H));
  std::vector<double> rh(static_cast<std::size_t>(H));
  for (std::int64_t step = 0; step < T; ++step) {
    const std::int64_t t = reverse ? T - 1 - step : step;
    const double* gx = gates_x.data() + t * 3 * H;
    for (std::int64_t i = 0; i < 3 * H; ++i) a[static_cast<std::size_t>(i)] = gx[i] + p.b[i];
    for (std::int64_t i = 0; i < 2 * H; ++i) {
      const double* row = p.w_h.data() + i * H;
      double s = 0.0;
      for (std::int64_t j = 0; j < H; ++j) s += row[j] * h[static_cast<std::size_t>(j)];
      a[static_cast<std::size_t>(i)] += s;
    }
    for (std::int64_t j = 0; j < H; ++j) {
      const double r = sigmoid(a[static_cast<std::size_t>(H + j)]);
      rh[static_cast<std::size_t>(j)] = r * h[static_cast<std::size_t>(j)];
      if (cache) {
        cache->r.at(t, j) = r;
        cache->h_prev.at(t, j) = h[static_cast<std::size_t>(j)];
      }
    }
    for (std::int64_t i = 0; i < H; ++i) {
      const double* row = p.w_h.data() + (2 * H + i) * H;
      double s = 0.0;
      for (std::int64_t j = 0; j < H; ++j) s += row[j] * rh[static_cast<std::size_t>(j)];
      a[static_cast<std::size_t>(2 * H + i)] += s;
    }
    for (std::int64_t j = 0; j < H; ++j) {
      const double z = sigmoid(a[static_cast<std::size_t>(j)]);
      const double c = std::tanh(a[static_cast<std::size_t>(2 * H + j)]);
      const double hv = (1.0 - z) * h[static_cast<std::size_t>(j)] + z * c;
      if (cache) {
        cache->z.at(t, j) = z;
        cache->c.at(t, j) = c;
        cache->h.at(t, j) = hv;
      }
      h[static_cast<std::size_t>(j)] = hv;
      out_seq.at(t, j) = hv;
    }
  }
}

/// Backpropagation through time for one direction. dout_seq is indexed by
/// absolute time. Accumulates parameter gradients and writes dx_seq.
inline void gru_dir_backward(const Tensor& x_seq, const GruDirView& p, bool reverse,
                             const GruDirCache& cache, const Tensor& dout_seq, Tensor& dx_seq,
                             Tensor& dw_x, Tensor& dw_h, Tensor& db) {
  const std::int64_t T = x_seq.dim(0);
  const std::int64_t H = p.w_h.dim(1);
  Tensor da_seq({T, 3 * H});      // gate pre-activation gradients, by time
  Tensor rh_seq({T, H});          // r .* h_prev, for the candidate weight gradient

  std::vector<double> dh(static_cast<std::size_t>(H), 0.0);
  std::vector<double> v(static_cast<std::size_t>(H));
  for (std::int64_t step = T - 1; step >= 0; --step) {
    // walk the processing order backwards
    const std::int64_t t = reverse ? T - 1 - step : step;
    for (std::int64_t j = 0; j < H; ++j) dh[static_cast<std::size_t>(j)] += dout_seq.at(t, j);

    double* da = da_seq.data() + t * 3 * H;
    for (std::int64_t j = 0; j < H; ++j) {
      const double z = cache.z.at(t, j);
      const double c = cache.c.at(t, j);
      const double hp = cache.h_prev.at(t, j);
      const double dz = dh[static_cast<std::size_t>(j)] * (c - hp);
      const double dc = dh[static_cast<std::size_t>(j)] * z;
      da[2 * H + j] = dc * (1.0 - c * c);
      da[j] = dz * z * (1.0 - z);
      // dh w.r.t. h_prev via the (1-z) leak; gate paths added below
      dh[static_cast<std::size_t>(j)] = dh[static_cast<std::size_t>(j)] * (1.0 - z);
      rh_seq.at(t, j) = cache.r.at(t, j) * hp;
    }
    // candidate row of w_h feeds r .* h_prev
    for (std::int64_t j = 0; j < H; ++j) v[static_cast<std::size_t>(j)] = 0.0;
    for (std::int64_t i = 0; i < H; ++i) {
      const double g = da[2 * H + i];
      if (g == 0.0) continue;
      const double* row = p.w_h.data() + (2 * H + i) * H;
      for (std::int64_t j = 0; j < H; ++j) v[static_cast<std::size_t>(j)] += g * row[j];
    }
    for (std::int64_t j = 0; j < H; ++j) {
      const double r = cache.r.at(t, j);
      const double hp = cache.h_prev.at(t, j);
      const double dr = v[static_cast<std::size_t>(j)] * hp;
      da[H + j] = dr * r * (1.0 - r);
      dh[static_cast<std::size_t>(j)] += v[static_cast<std::size_t>(j)] * r;
    }
    // update and reset rows of w_h feed h_prev directly
    for (std::int64_t i = 0; i < 2 * H; ++i) {
      const double g = da[i];
      if (g == 0.0) continue;
      const double* row = p.w_h.data() + i * H;
      for (std::int64_t j = 0; j < H; ++j) dh[static_cast<std::size_t>(j)] += g * row[j];
    }
  }

  // one pass of matrix products for the parameter and input gradients
  Tensor dwx_acc({3 * H, x_seq.dim(1)});
  tensor_ops::matmul_tn_into(da_seq, x_seq, dwx_acc);
  tensor_ops::add_inplace(dw_x, dwx_acc);
  Tensor dx_acc = tensor_ops::matmul(da_seq, p.w_x);
  tensor_ops::add_inplace(dx_seq, dx_acc);
  for (std::int64_t t = 0; t < T; ++t) {
    const double* da = da_seq.data() + t * 3 * H;
    for (std::int64_t i = 0; i < 3 * H; ++i) db[i] += da[i];
  }
  // dw_h: update/reset rows against h_prev, candidate rows against r.*h_prev
  const std::int64_t I2 = 2 * H;
  for (std::int64_t t = 0; t < T; ++t) {
    const double* da = da_seq.data() + t * 3 * H;
    const double* hp = cache.h_prev.data() + t * H;
    const double* rh = rh_seq.data() + t * H;
    for (std::int64_t i = 0; i < I2; ++i) {
      const double g = da[i];
      if (g == 0.0) continue;
      double* row = dw_h.data() + i * H;
      for (std::int64_t j = 0; j < H; ++j) row[j] += g * hp[j];
    }
    for (std::int64_t i = 0; i < H; ++i) {
      const double g = da[I2 + i];
      if (g == 0.0) continue;
      double* row = dw_h.data() + (I2 + i) * H;
      for (std::int64_t j = 0; j < H; ++j) row[j] += g * rh[j];
    }
  }
}

struct BiGruCache {
  Tensor input;         // T x I
  GruDirCache fwd, bwd;
  Tensor output;        // T x H (sum) or T x 2H (concat), before dropout
};

/// Bidirectional layer: left-to-right and right-to-left passes whose hidden
/// states are combined elementwise (sum) or stacked (concat).
inline Tensor bigru_layer_forward(const Tensor& x_seq, const GruDirView& fwd, const GruDirView& bwd,
                                  bool sum_directions, BiGruCache* cache = nullptr) {
  if (x_seq.rank() != 2 || x_seq.dim(0) < 1) throw ShapeMismatch("bigru: input must be T x I, T >= 1");
  const std::int64_t T = x_seq.dim(0);
  const std::int64_t H = fwd.w_h.dim(1);
  Tensor h_fwd({T, H}), h_bwd({T, H});
  gru_dir_forward(x_seq, fwd, false, h_fwd, cache ? &cache->fwd : nullptr);
  gru_dir_forward(x_seq, bwd, true, h_bwd, cache ? &cache->bwd : nullptr);
  Tensor out;
  if (sum_directions) {
    out = h_fwd;
    tensor_ops::add_inplace(out, h_bwd);
  } else {
    out = Tensor({T, 2 * H});
    for (std::int64_t t = 0; t < T; ++t) {
      for (std::int64_t j = 0; j < H; ++j) {
        out.at(t, j) = h_fwd.at(t, j);
        out.at(t, H + j) = h_bwd.at(t, j);
      }
    }
  }
  if (cache) {
    cache->input = x_seq;
    cache->output = out;
  }
  return out;
}

inline void bigru_layer_backward(const GruDirView& fwd, const GruDirView& bwd, bool sum_directions,
                                 const BiGruCache& cache, const Tensor& dout, Tensor& dx,
                                 Tensor& dwx_f, Tensor& dwh_f, Tensor& db_f, Tensor& dwx_b,
                                 Tensor& dwh_b, Tensor& db_b) {
  const std::int64_t T = cache.input.dim(0);
  const std::int64_t H = fwd.w_h.dim(1);
  Tensor d_fwd({T, H}), d_bwd({T, H});
  if (sum_directions) {
    for (std::int64_t i = 0; i < dout.size(); ++i) {
      d_fwd[i] = dout[i];
      d_bwd[i] = dout[i];
    }
  } else {
    for (std::int64_t t = 0; t < T; ++t) {
      for (std::int64_t j = 0; j < H; ++j) {
        d_fwd.at(t, j) = dout.at(t, j);
        d_bwd.at(t, j) = dout.at(t, H + j);
      }
    }
  }
  dx = Tensor(cache.input.dims());
  gru_dir_backward(cache.input, fwd, false, cache.fwd, d_fwd, dx, dwx_f, dwh_f, db_f);
  gru_dir_backward(cache.input, bwd, true, cache.bwd, d_bwd, dx, dwx_b, dwh_b, db_b);
}

// ---------------------------------------------------------------------------
// dropout (inverted scaling)

inline Tensor dropout_mask(const std::vector<std::int64_t>& dims, double rate, Rng& rng) {
  Tensor mask(dims);
  const double keep = 1.0 - rate;
  for (std::int64_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
  }
  return mask;
}

}  // namespace nn

// ---------------------------------------------------------------------------
// full model

inline ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams params;
  params.config = config;
  Rng rng(seed);

  std::int64_t cin = 1;
  for (std::size_t i = 0; i < config.convs.size(); ++i) {
    const auto& spec = config.convs[i];
    const std::string base = "conv" + std::to_string(i);
    Tensor kernel({spec.kernel_t, spec.kernel_f, cin, spec.filters});
    nn::fill_scaled_uniform(kernel, static_cast<std::int64_t>(spec.kernel_t) * spec.kernel_f * cin, rng);
    params.tensors[base + ".kernel"] = std::move(kernel);
    params.tensors[base + ".bias"] = Tensor({spec.filters});
    Tensor gamma({spec.filters});
    gamma.fill(1.0);
    params.tensors[base + ".bn.gamma"] = gamma;
    params.tensors[base + ".bn.beta"] = Tensor({spec.filters});
    params.tensors[base + ".bn.mean"] = Tensor({spec.filters});
    Tensor var({spec.filters});
    var.fill(1.0);
    params.tensors[base + ".bn.var"] = var;
    cin = spec.filters;
  }

  std::int64_t in_dim = config.gru_input_dim();
  for (int l = 0; l < config.num_gru_layers; ++l) {
    const std::string base = "gru" + std::to_string(l);
    for (const char* dir : {".fwd", ".bwd"}) {
      Tensor w_x({3 * config.gru_units, in_dim});
      nn::fill_scaled_uniform(w_x, in_dim, rng);
      params.tensors[base + dir + ".w_x"] = std::move(w_x);
      Tensor w_h({3 * config.gru_units, config.gru_units});
      nn::fill_scaled_uniform(w_h, config.gru_units, rng);
      params.tensors[base + dir + ".w_h"] = std::move(w_h);
      params.tensors[base + dir + ".b"] = Tensor({3 * config.gru_units});
    }
    in_dim = config.gru_output_dim();
  }

  Tensor dense_w({config.dense_units, config.dense_input_dim()});
  nn::fill_scaled_uniform(dense_w, config.dense_input_dim(), rng);
  params.tensors["dense.w"] = std::move(dense_w);
  params.tensors["dense.b"] = Tensor({config.dense_units});
  Tensor out_w({config.num_classes, config.dense_units});
  nn::fill_scaled_uniform(out_w, config.dense_units, rng);
  params.tensors["out.w"] = std::move(out_w);
  params.tensors["out.b"] = Tensor({config.num_classes});
  return params;
}

/// Activations recorded by a training-mode forward, consumed by
/// model_backward and by the running-statistics update.
struct ForwardCache {
  bool training = false;
  std::uint64_t rng_seed = 0;
  Tensor input;  // T x F
  struct ConvStage {
    Tensor input;      // stage input, T x F x C
    nn::BnCache bn;
    Tensor activated;  // after ReLU
  };
  std::vector<ConvStage> convs;
  Tensor gru_input;  // T' x (F'*C)
  struct GruStage {
    nn::BiGruCache bigru;
    Tensor dropout_mask;  // empty when dropout was not applied
    Tensor output;        // after dropout
  };
  std::vector<GruStage> grus;
  Tensor dense_input;
  Tensor dense_out;  // after optional ReLU
  Tensor logits;
};

namespace nn_detail {

inline nn::GruDirView gru_view(const ModelParams& params, int layer, const char* dir) {
  const std::string base = "gru" + std::to_string(layer) + "." + dir;
  return nn::GruDirView{params.at(base + ".w_x"), params.at(base + ".w_h"), params.at(base + ".b")};
}

}  // namespace nn_detail

/// Runs the full encoder. Returns the T' x num_classes posterior matrix
/// (softmax rows). Eval mode is a pure function of (params, spec): dropout
/// is disabled and batch norm uses the stored running statistics. Training
/// mode draws dropout masks from rng_seed and normalizes with batch
/// statistics; pass a cache to keep what the backward pass needs.
inline Tensor model_forward(const ModelParams& params, const Tensor& spec, bool training,
                            std::uint64_t rng_seed = 0, ForwardCache* cache = nullptr) {
  const ModelConfig& cfg = params.config;
  if (spec.rank() != 2) throw ShapeMismatch("model_forward: input must be T x F");
  if (spec.dim(1) != cfg.input_bins) {
    throw ShapeMismatch("model_forward: input has " + std::to_string(spec.dim(1)) +
                        " bins, model expects " + std::to_string(cfg.input_bins));
  }
  if (spec.dim(0) < 1) throw ShapeMismatch("model_forward: empty input");
  if (cache) {
    *cache = ForwardCache{};
    cache->training = training;
    cache->rng_seed = rng_seed;
    cache->input = spec;
  }
  Rng dropout_rng(rng_seed);

  Tensor x = spec.reshaped({spec.dim(0), spec.dim(1), 1});
  for (std::size_t i = 0; i < cfg.convs.size(); ++i) {
    const auto& cs = cfg.convs[i];
    const std::string base = "conv" + std::to_string(i);
    ForwardCache::ConvStage stage;
    if (cache) stage.input = x;
    x = nn::conv2d_forward(x, params.at(base + ".kernel"), params.at(base + ".bias"),
                           params.at(base + ".bn.gamma"), params.at(base + ".bn.beta"),
                           params.at(base + ".bn.mean"), params.at(base + ".bn.var"), cs.stride_t,
                           cs.stride_f, training, cfg.bn_epsilon,
                           (cache && training) ? &stage.bn : nullptr);
    if (cache) {
      stage.activated = x;
      cache->convs.push_back(std::move(stage));
    }
  }

  Tensor seq = x.reshaped({x.dim(0), x.rank() == 3 ? x.dim(1) * x.dim(2) : x.dim(1)});
  if (cache) cache->gru_input = seq;

  for (int l = 0; l < cfg.num_gru_layers; ++l) {
    ForwardCache::GruStage stage;
    const auto fwd = nn_detail::gru_view(params, l, "fwd");
    const auto bwd = nn_detail::gru_view(params, l, "bwd");
    Tensor out = nn::bigru_layer_forward(seq, fwd, bwd, cfg.sum_directions,
                                         cache ? &stage.bigru : nullptr);
    if (training && cfg.dropout_rate > 0.0) {
      Tensor mask = nn::dropout_mask(out.dims(), cfg.dropout_rate, dropout_rng);
      for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
      if (cache) stage.dropout_mask = std::move(mask);
    }
    seq = std::move(out);
    if (cache) {
      stage.output = seq;
      cache->grus.push_back(std::move(stage));
    }
  }

  if (cache) cache->dense_input = seq;
  Tensor dense = nn::dense_forward(seq, params.at("dense.w"), params.at("dense.b"));
  if (cfg.dense_relu) nn::relu_inplace(dense);
  if (cache) cache->dense_out = dense;
  Tensor logits = nn::dense_forward(dense, params.at("out.w"), params.at("out.b"));
  if (cache) cache->logits = logits;
  return nn::softmax_rows(logits);
}

/// Folds the batch statistics recorded by a training forward into the
/// running batch-norm statistics. Kept separate from the forward pass so
/// forwards stay pure (gradient checks re-run them freely).
inline void update_running_stats(ModelParams& params, const ForwardCache& cache) {
  if (!cache.training) throw MissingCache("update_running_stats: needs a training-mode cache");
  const double m = params.config.bn_momentum;
  for (std::size_t i = 0; i < cache.convs.size(); ++i) {
    const std::string base = "conv" + std::to_string(i);
    Tensor& mean = params.at(base + ".bn.mean");
    Tensor& var = params.at(base + ".bn.var");
    const auto& bn = cache.convs[i].bn;
    for (std::int64_t c = 0; c < mean.size(); ++c) {
      mean[c] = m * mean[c] + (1.0 - m) * bn.mean[static_cast<std::size_t>(c)];
      var[c] = m * var[c] + (1.0 - m) * bn.var[static_cast<std::size_t>(c)];
    }
  }
}

/// Backpropagates dL/dlogits through the whole stack; returns gradients for
/// every trainable tensor (running statistics excluded), keyed like params.
inline NamedTensors model_backward(const ModelParams& params, const ForwardCache& cache,
                                   const Tensor& dlogits) {
  const ModelConfig& cfg = params.config;
  if (!cache.training || cache.logits.empty()) {
    throw MissingCache("model_backward: requires the cache of a training-mode forward");
  }
  if (!dlogits.same_shape(cache.logits)) {
    throw ShapeMismatch("model_backward: dlogits shape mismatch");
  }
  NamedTensors grads;
  for (const auto& [name, tensor] : params.tensors) {
    if (name.find(".bn.mean") != std::string::npos || name.find(".bn.var") != std::string::npos) {
      continue;  // running statistics are not trained
    }
    grads[name] = Tensor(tensor.dims());
  }

  Tensor d_dense_out, d_out_w, d_out_b;
  nn::dense_backward(cache.dense_out, params.at("out.w"), dlogits, d_dense_out, d_out_w, d_out_b);
  grads["out.w"] = std::move(d_out_w);
  grads["out.b"] = std::move(d_out_b);

  if (cfg.dense_relu) d_dense_out = nn::relu_backward(cache.dense_out, d_dense_out);
  Tensor d_seq, d_dense_w, d_dense_b;
  nn::dense_backward(cache.dense_input, params.at("dense.w"), d_dense_out, d_seq, d_dense_w,
                     d_dense_b);
  grads["dense.w"] = std::move(d_dense_w);
  grads["dense.b"] = std::move(d_dense_b);

  for (int l = cfg.num_gru_layers - 1; l >= 0; --l) {
    const auto& stage = cache.grus[static_cast<std::size_t>(l)];
    if (!stage.dropout_mask.empty()) {
      for (std::int64_t i = 0; i < d_seq.size(); ++i) d_seq[i] *= stage.dropout_mask[i];
    }
    const std::string base = "gru" + std::to_string(l);
    Tensor dx;
    nn::bigru_layer_backward(nn_detail::gru_view(params, l, "fwd"),
                             nn_detail::gru_view(params, l, "bwd"), cfg.sum_directions, stage.bigru,
                             d_seq, dx, grads[base + ".fwd.w_x"], grads[base + ".fwd.w_h"],
                             grads[base + ".fwd.b"], grads[base + ".bwd.w_x"],
                             grads[base + ".bwd.w_h"], grads[base + ".bwd.b"]);
    d_seq = std::move(dx);
  }

  if (!cfg.convs.empty()) {
    const auto& last_stage = cache.convs.back();
    Tensor d_x = d_seq.reshaped(last_stage.activated.dims());
    for (std::int64_t i = static_cast<std::int64_t>(cfg.convs.size()) - 1; i >= 0; --i) {
      const auto& stage = cache.convs[static_cast<std::size_t>(i)];
      const auto& cs = cfg.convs[static_cast<std::size_t>(i)];
      const std::string base = "conv" + std::to_string(i);
      Tensor d_bn = nn::relu_backward(stage.activated, d_x);
      Tensor d_pre, d_gamma, d_beta;
      nn::batchnorm_backward(stage.bn, params.at(base + ".bn.gamma"), d_bn, d_pre, d_gamma, d_beta);
      grads[base + ".bn.gamma"] = std::move(d_gamma);
      grads[base + ".bn.beta"] = std::move(d_beta);
      Tensor d_in, d_kernel, d_bias;
      nn::conv2d_backward(stage.input, params.at(base + ".kernel"), cs.stride_t, cs.stride_f, d_pre,
                          d_in, d_kernel, d_bias);
      grads[base + ".kernel"] = std::move(d_kernel);
      grads[base + ".bias"] = std::move(d_bias);
      d_x = std::move(d_in);
    }
  }
  return grads;
}

}  // namespace recite
