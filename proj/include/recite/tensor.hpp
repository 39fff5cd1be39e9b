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
#include <initializer_list>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "recite/errors.hpp"

namespace recite {

/// Dense row-major tensor of doubles. All training math runs in 64-bit;
/// checkpoints quantize to 32-bit on write.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::int64_t> dims) : dims_(std::move(dims)) {
    data_.assign(static_cast<std::size_t>(numel(dims_)), 0.0);
  }

  Tensor(std::initializer_list<std::int64_t> dims) : Tensor(std::vector<std::int64_t>(dims)) {}

  static std::int64_t numel(const std::vector<std::int64_t>& dims) {
    std::int64_t n = 1;
    for (auto d : dims) {
      if (d < 0) throw ShapeMismatch("negative tensor dimension");
      n *= d;
    }
    return n;
  }

  const std::vector<std::int64_t>& dims() const { return dims_; }
  int rank() const { return static_cast<int>(dims_.size()); }
  std::int64_t dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  double& at(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * dims_[1] + j)]; }
  const double& at(std::int64_t i, std::int64_t j) const {
    return data_[static_cast<std::size_t>(i * dims_[1] + j)];
  }

  double& at(std::int64_t i, std::int64_t j, std::int64_t k) {
    return data_[static_cast<std::size_t>((i * dims_[1] + j) * dims_[2] + k)];
  }
  const double& at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data_[static_cast<std::size_t>((i * dims_[1] + j) * dims_[2] + k)];
  }

  double& at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) {
    return data_[static_cast<std::size_t>(((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l)];
  }
  const double& at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) const {
    return data_[static_cast<std::size_t>(((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l)];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  /// Reinterprets the buffer with new dims of equal element count.
  Tensor reshaped(std::vector<std::int64_t> new_dims) const {
    if (numel(new_dims) != size()) throw ShapeMismatch("reshape changes element count");
    Tensor t = *this;
    t.dims_ = std::move(new_dims);
    return t;
  }

  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  std::vector<std::int64_t> dims_;
  std::vector<double> data_;
};

using NamedTensors = std::map<std::string, Tensor>;

namespace tensor_ops {

inline void check_matrix(const Tensor& t, const char* who) {
  if (t.rank() != 2) throw ShapeMismatch(std::string(who) + ": expected a rank-2 tensor");
}

/// C = A (m x k) * B (k x n)
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul");
  check_matrix(b, "matmul");
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeMismatch("matmul: inner dimensions differ");
  Tensor c({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      double* crow = pc + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

/// C = A (m x k) * B^T (n x k)
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul_nt");
  check_matrix(b, "matmul_nt");
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) throw ShapeMismatch("matmul_nt: inner dimensions differ");
  Tensor c({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (std::int64_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double s = 0.0;
      for (std::int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      pc[i * n + j] = s;
    }
  }
  return c;
}

/// C = A^T (k x m) * B (k x n); accumulates into c when accumulate=true.
inline void matmul_tn_into(const Tensor& a, const Tensor& b, Tensor& c) {
  check_matrix(a, "matmul_tn");
  check_matrix(b, "matmul_tn");
  const std::int64_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeMismatch("matmul_tn: inner dimensions differ");
  if (c.rank() != 2 || c.dim(0) != m || c.dim(1) != n) throw ShapeMismatch("matmul_tn: bad output shape");
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::int64_t p = 0; p < k; ++p) {
    const double* arow = pa + p * m;
    const double* brow = pb + p * n;
    for (std::int64_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = pc + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  Tensor c({a.dim(1), b.dim(1)});
  matmul_tn_into(a, b, c);
  return c;
}

/// y += M (m x n) * x (n)
inline void matvec_accum(const Tensor& m, const double* x, double* y) {
  const std::int64_t rows = m.dim(0), cols = m.dim(1);
  const double* pm = m.data();
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* row = pm + i * cols;
    double s = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) s += row[j] * x[j];
    y[i] += s;
  }
}

/// y += M^T (m x n) * x (m)
inline void matvec_t_accum(const Tensor& m, const double* x, double* y) {
  const std::int64_t rows = m.dim(0), cols = m.dim(1);
  const double* pm = m.data();
  for (std::int64_t i = 0; i < rows; ++i) {
    const double xv = x[i];
    if (xv == 0.0) continue;
    const double* row = pm + i * cols;
    for (std::int64_t j = 0; j < cols; ++j) y[j] += xv * row[j];
  }
}

inline void add_inplace(Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("add: shapes differ");
  double* pa = a.data();
  const double* pb = b.data();
  for (std::int64_t i = 0, n = a.size(); i < n; ++i) pa[i] += pb[i];
}

inline void scale_inplace(Tensor& a, double s) {
  double* pa = a.data();
  for (std::int64_t i = 0, n = a.size(); i < n; ++i) pa[i] *= s;
}

inline double mean(const Tensor& a) {
  if (a.size() == 0) return 0.0;
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += a[i];
  return s / static_cast<double>(a.size());
}

/// Population standard deviation over all cells.
inline double stddev(const Tensor& a, double m) {
  if (a.size() == 0) return 0.0;
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - m;
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(a.size()));
}

inline double max_abs(const Tensor& a) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i]));
  return m;
}

}  // namespace tensor_ops

}  // namespace recite
