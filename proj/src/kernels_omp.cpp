// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "simbal/kernels.hpp"

namespace simbal::kernels {

namespace {
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;
}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

namespace omp {

void gemm(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
          std::span<const double> b, std::span<double> c, bool accumulate) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c.data() + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    const double* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* arow = a.data() + i * k;
    double* crow = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c.data() + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double api = a[p * m + i];
      if (api == 0.0) continue;
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y) {
  const auto nrows = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::int64_t rr = 0; rr < nrows; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const double* in = x.data() + r * cols;
    double* out = y.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      out[j] = std::exp(in[j] - mx);
      total += out[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < cols; ++j) out[j] *= inv;
  }
}

void causal_attention_forward(const AttentionDims& dims, double scale,
                              std::span<const double> q, std::span<const double> k,
                              std::span<const double> v, std::span<double> probs,
                              std::span<double> out) {
  const std::size_t T = dims.seq_len;
  const std::size_t dh = dims.head_dim;
  const std::size_t W = dims.width();
  const auto pairs = static_cast<std::int64_t>(dims.batch * dims.heads);
  const std::size_t work = dims.batch * dims.heads * T * T * dh;
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (std::int64_t bh = 0; bh < pairs; ++bh) {
    const std::size_t b = static_cast<std::size_t>(bh) / dims.heads;
    const std::size_t h = static_cast<std::size_t>(bh) % dims.heads;
    double* p = probs.data() + static_cast<std::size_t>(bh) * T * T;
    for (std::size_t i = 0; i < T; ++i) {
      const double* qi = q.data() + (b * T + i) * W + h * dh;
      double* prow = p + i * T;
      double mx = -INFINITY;
      for (std::size_t j = 0; j <= i; ++j) {
        const double* kj = k.data() + (b * T + j) * W + h * dh;
        double s = 0.0;
        for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
        prow[j] = s * scale;
        mx = std::max(mx, prow[j]);
      }
      double total = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        prow[j] = std::exp(prow[j] - mx);
        total += prow[j];
      }
      const double inv = 1.0 / total;
      for (std::size_t j = 0; j <= i; ++j) prow[j] *= inv;
      std::fill(prow + i + 1, prow + T, 0.0);

      double* oi = out.data() + (b * T + i) * W + h * dh;
      std::fill(oi, oi + dh, 0.0);
      for (std::size_t j = 0; j <= i; ++j) {
        const double* vj = v.data() + (b * T + j) * W + h * dh;
        const double pij = prow[j];
        for (std::size_t d = 0; d < dh; ++d) oi[d] += pij * vj[d];
      }
    }
  }
}

void causal_attention_backward(const AttentionDims& dims, double scale,
                               std::span<const double> q, std::span<const double> k,
                               std::span<const double> v, std::span<const double> probs,
                               std::span<const double> dout, std::span<double> dq,
                               std::span<double> dk, std::span<double> dv) {
  const std::size_t T = dims.seq_len;
  const std::size_t dh = dims.head_dim;
  const std::size_t W = dims.width();
  const auto pairs = static_cast<std::int64_t>(dims.batch * dims.heads);
  const std::size_t work = dims.batch * dims.heads * T * T * dh;
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (std::int64_t bh = 0; bh < pairs; ++bh) {
    const std::size_t b = static_cast<std::size_t>(bh) / dims.heads;
    const std::size_t h = static_cast<std::size_t>(bh) % dims.heads;
    const double* p = probs.data() + static_cast<std::size_t>(bh) * T * T;
    std::vector<double> dp(T);
    for (std::size_t i = 0; i < T; ++i) {
      const std::size_t row_i = (b * T + i) * W + h * dh;
      const double* go = dout.data() + row_i;
      double dot = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        const double* vj = v.data() + (b * T + j) * W + h * dh;
        double s = 0.0;
        for (std::size_t d = 0; d < dh; ++d) s += go[d] * vj[d];
        dp[j] = s;
        dot += p[i * T + j] * s;
      }
      double* dqi = dq.data() + row_i;
      const double* qi = q.data() + row_i;
      for (std::size_t j = 0; j <= i; ++j) {
        const std::size_t row_j = (b * T + j) * W + h * dh;
        const double pij = p[i * T + j];
        const double ds = pij * (dp[j] - dot) * scale;
        const double* kj = k.data() + row_j;
        double* dkj = dk.data() + row_j;
        double* dvj = dv.data() + row_j;
        for (std::size_t d = 0; d < dh; ++d) {
          dvj[d] += pij * go[d];
          dqi[d] += ds * kj[d];
          dkj[d] += ds * qi[d];
        }
      }
    }
  }
}

}  // namespace omp
}  // namespace simbal::kernels
