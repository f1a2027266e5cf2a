// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

// Dense compute kernels used by the tensor engine. Two implementations are
// kept side by side:
//
//   kernels::serial  straightforward reference loops, used only by tests and
//                    the benchmark as the ground truth;
//   kernels::omp     the production path: cache-friendly loop order with
//                    OpenMP work-sharing over independent output rows/heads.
//
// The omp kernels never split a single reduction across threads, so results
// do not depend on the thread count. They may differ from the serial
// reference by floating-point reassociation only.
//
// All matrices are dense row-major. `accumulate` selects C += ... instead of
// C = ...
namespace simbal::kernels {

struct AttentionDims {
  std::size_t batch = 1;
  std::size_t seq_len = 1;
  std::size_t heads = 1;
  std::size_t head_dim = 1;

  std::size_t rows() const { return batch * seq_len; }
  std::size_t width() const { return heads * head_dim; }
  std::size_t prob_size() const { return batch * heads * seq_len * seq_len; }
};

namespace serial {

// C[m,n] (+)= A[m,k] * B[k,n]
void gemm(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
          std::span<const double> b, std::span<double> c, bool accumulate);

// C[m,n] (+)= A[m,k] * B[n,k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

// C[m,n] (+)= A[k,m]^T * B[k,n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

// Max-subtracted softmax over each row of a [rows, cols] matrix.
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y);

// Causal multi-head attention over q/k/v laid out as [batch*T, heads*head_dim].
// probs receives [batch, heads, T, T] with zeros above the diagonal.
void causal_attention_forward(const AttentionDims& dims, double scale,
                              std::span<const double> q, std::span<const double> k,
                              std::span<const double> v, std::span<double> probs,
                              std::span<double> out);

// Accumulates into dq/dk/dv.
void causal_attention_backward(const AttentionDims& dims, double scale,
                               std::span<const double> q, std::span<const double> k,
                               std::span<const double> v, std::span<const double> probs,
                               std::span<const double> dout, std::span<double> dq,
                               std::span<double> dk, std::span<double> dv);

}  // namespace serial

namespace omp {

// C[m,n] (+)= A[m,k] * B[k,n]
void gemm(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
          std::span<const double> b, std::span<double> c, bool accumulate);

// C[m,n] (+)= A[m,k] * B[n,k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

// C[m,n] (+)= A[k,m]^T * B[k,n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

// Max-subtracted softmax over each row of a [rows, cols] matrix.
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y);

// Causal multi-head attention over q/k/v laid out as [batch*T, heads*head_dim].
// probs receives [batch, heads, T, T] with zeros above the diagonal.
void causal_attention_forward(const AttentionDims& dims, double scale,
                              std::span<const double> q, std::span<const double> k,
                              std::span<const double> v, std::span<double> probs,
                              std::span<double> out);

// Accumulates into dq/dk/dv.
void causal_attention_backward(const AttentionDims& dims, double scale,
                               std::span<const double> q, std::span<const double> k,
                               std::span<const double> v, std::span<const double> probs,
                               std::span<const double> dout, std::span<double> dq,
                               std::span<double> dk, std::span<double> dv);

}  // namespace omp

// Number of worker threads the omp kernels will use (1 without OpenMP).
int max_threads();
void set_threads(int n);

}  // namespace simbal::kernels
