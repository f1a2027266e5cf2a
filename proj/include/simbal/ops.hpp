// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "simbal/tensor.hpp"

// Differentiable ops. Every op validates shapes (DimensionError), rejects
// non-finite results (NumericError naming the op) and, when the graph is
// recording and an input requires a gradient, appends its backward closure.
//
// Broadcasting is limited to what the model uses: add_bias (row vector over a
// matrix) and scale_rows (column vector over a matrix).
namespace simbal::ops {

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);
Tensor transpose(Graph& g, const Tensor& a);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& a, double factor);
Tensor add_bias(Graph& g, const Tensor& x, const Tensor& bias);
// x[n, m] * w[n] broadcast along columns.
Tensor scale_rows(Graph& g, const Tensor& x, const Tensor& w);

Tensor sigmoid(Graph& g, const Tensor& x);
Tensor silu(Graph& g, const Tensor& x);
Tensor exp(Graph& g, const Tensor& x);
Tensor log(Graph& g, const Tensor& x);
Tensor rsqrt(Graph& g, const Tensor& x);
// Subgradient 0 at exactly zero.
Tensor abs(Graph& g, const Tensor& x);

Tensor sum(Graph& g, const Tensor& x);
Tensor mean(Graph& g, const Tensor& x);

// Softmax along `axis` (negative counts from the end).
Tensor softmax(Graph& g, const Tensor& x, int axis = -1);
// Divides each row by its sum. Rows must have a positive sum.
Tensor normalize_rows(Graph& g, const Tensor& x);
// log(sum(exp(row))) per row of a matrix -> [rows].
Tensor logsumexp_rows(Graph& g, const Tensor& x);
// Mean next-token negative log-likelihood of logits[n, V] against targets.
Tensor cross_entropy(Graph& g, const Tensor& logits, std::span<const std::uint32_t> targets);

Tensor concat(Graph& g, std::span<const Tensor> parts, int axis);
Tensor slice(Graph& g, const Tensor& x, int axis, std::size_t begin, std::size_t end);

Tensor embedding(Graph& g, const Tensor& table, std::span<const std::uint32_t> ids);
Tensor gather_rows(Graph& g, const Tensor& x, std::span<const std::size_t> rows);
// Flat element gather -> [indices.size()].
Tensor take(Graph& g, const Tensor& x, std::span<const std::size_t> indices);
// out[rows, cols] = sum over parts of part rows added at their row indices.
Tensor scatter_add_rows(Graph& g, std::size_t rows, std::size_t cols,
                        std::span<const Tensor> parts,
                        std::span<const std::vector<std::size_t>> indices);

// x * rsqrt(mean(x^2, row) + eps) * gain.
Tensor rms_norm(Graph& g, const Tensor& x, const Tensor& gain, double eps = 1e-6);

// Rotary embedding over x[batch*seq_len, heads*head_dim]; the position of a
// row is row % seq_len. Pairs (d, d + head_dim/2) are rotated together.
Tensor rope(Graph& g, const Tensor& x, std::size_t heads, std::size_t seq_len, double theta);

// Multi-head causal self-attention over pre-projected q, k, v.
Tensor causal_attention(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v,
                        std::size_t batch, std::size_t seq_len, std::size_t heads);

}  // namespace simbal::ops
