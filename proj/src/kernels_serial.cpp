// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

// Reference kernels: textbook loop order, no parallelism. Kept for tests and
// benchmarks only.

#include <algorithm>
#include <cmath>
#include <vector>

#include "simbal/kernels.hpp"

namespace simbal::kernels::serial {

void gemm(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
          std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * cols;
    double* out = y.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      out[j] = std::exp(in[j] - mx);
      total += out[j];
    }
    for (std::size_t j = 0; j < cols; ++j) out[j] /= total;
  }
}

namespace {

struct HeadView {
  std::size_t base_row;
  std::size_t col;
  std::size_t width;
  double at(std::span<const double> m, std::size_t t, std::size_t d) const {
    return m[(base_row + t) * width + col + d];
  }
};

}  // namespace

void causal_attention_forward(const AttentionDims& dims, double scale,
                              std::span<const double> q, std::span<const double> k,
                              std::span<const double> v, std::span<double> probs,
                              std::span<double> out) {
  const std::size_t T = dims.seq_len;
  const std::size_t dh = dims.head_dim;
  std::vector<double> scores(T);
  for (std::size_t b = 0; b < dims.batch; ++b) {
    for (std::size_t h = 0; h < dims.heads; ++h) {
      const HeadView view{b * T, h * dh, dims.width()};
      double* p = probs.data() + (b * dims.heads + h) * T * T;
      for (std::size_t i = 0; i < T; ++i) {
        double mx = -INFINITY;
        for (std::size_t j = 0; j <= i; ++j) {
          double s = 0.0;
          for (std::size_t d = 0; d < dh; ++d) s += view.at(q, i, d) * view.at(k, j, d);
          scores[j] = s * scale;
          mx = std::max(mx, scores[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j <= i; ++j) total += std::exp(scores[j] - mx);
        for (std::size_t j = 0; j < T; ++j)
          p[i * T + j] = j <= i ? std::exp(scores[j] - mx) / total : 0.0;
        for (std::size_t d = 0; d < dh; ++d) {
          double acc = 0.0;
          for (std::size_t j = 0; j <= i; ++j) acc += p[i * T + j] * view.at(v, j, d);
          out[(b * T + i) * dims.width() + h * dh + d] = acc;
        }
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
  std::vector<double> dp(T);
  for (std::size_t b = 0; b < dims.batch; ++b) {
    for (std::size_t h = 0; h < dims.heads; ++h) {
      const double* p = probs.data() + (b * dims.heads + h) * T * T;
      auto idx = [&](std::size_t t, std::size_t d) { return (b * T + t) * W + h * dh + d; };
      for (std::size_t i = 0; i < T; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          double s = 0.0;
          for (std::size_t d = 0; d < dh; ++d) s += dout[idx(i, d)] * v[idx(j, d)];
          dp[j] = s;
          dot += p[i * T + j] * s;
        }
        for (std::size_t j = 0; j <= i; ++j) {
          const double pij = p[i * T + j];
          const double ds = pij * (dp[j] - dot) * scale;
          for (std::size_t d = 0; d < dh; ++d) {
            dv[idx(j, d)] += pij * dout[idx(i, d)];
            dq[idx(i, d)] += ds * k[idx(j, d)];
            dk[idx(j, d)] += ds * q[idx(i, d)];
          }
        }
      }
    }
  }
}

}  // namespace simbal::kernels::serial
