// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "simbal/tensor.hpp"

namespace simbal {

enum class Gating { kSoftmax, kSigmoid };

std::string to_string(Gating gating);
Gating parse_gating(const std::string& name);

// Learned router matrix plus the loss-free balancing bias. The bias changes
// which experts are selected, never the gate values, and is stepped directly
// rather than through the gradient tape.
struct RouterState {
  Tensor weight;                 // [d_model, n_experts]
  std::vector<double> lf_bias;   // [n_experts], zero unless LF balancing is on
};

struct TokenRoute {
  std::vector<std::uint32_t> experts;  // selected ids, best first
  std::vector<double> weights;         // gate value applied to each
};

// Routing decisions of one MoE layer over a batch of sequences.
struct RoutingRecord {
  std::size_t n_experts = 0;
  std::size_t top_a = 0;
  std::size_t n_seqs = 0;
  std::size_t seq_len = 0;
  Gating gating = Gating::kSoftmax;
  std::vector<double> probs;        // [tokens, n_experts], gating of unbiased scores
  std::vector<TokenRoute> routes;   // [tokens]

  std::size_t tokens() const { return routes.size(); }
  std::span<const double> token_probs(std::size_t t) const {
    return std::span<const double>(probs).subspan(t * n_experts, n_experts);
  }
  // Length-n_experts gate vector, zero off the selected set.
  std::vector<double> sparse_gates(std::size_t t) const;
  // Selections per expert over all tokens.
  std::vector<std::size_t> selection_counts() const;
};

// Inference-time routing modifications used by the redundancy experiments.
struct RoutingOverrides {
  // Experts that may not be selected. With softmax gating the distribution
  // is renormalized over the remaining experts.
  std::vector<bool> excluded;
  // Drop selected experts whose gate probability is below this value; the
  // top-ranked expert is always kept.
  double prune_threshold = 0.0;
};

struct RoutingConfig {
  std::size_t n_experts = 0;
  std::size_t top_a = 0;
  Gating gating = Gating::kSoftmax;
  bool renormalize_gates = false;
};

struct RouteResult {
  RoutingRecord record;
  Tensor probs;  // [tokens, n_experts] on the tape
  Tensor gates;  // [tokens, n_experts] sparse gate values on the tape
};

// scores = x * R; probs = gating(scores); top-A chosen on scores + lf_bias
// with ties going to the lower expert id; gates are probs at the chosen ids
// (optionally renormalized to sum to one).
RouteResult route(Graph& g, const Tensor& x, const RouterState& router, const RoutingConfig& cfg,
                  std::size_t n_seqs, std::size_t seq_len, const RoutingOverrides* overrides = nullptr);

// Ranks experts for one token; exposed for tests.
std::vector<std::uint32_t> select_top(std::span<const double> scores, std::size_t count,
                                      const std::vector<bool>& excluded);

}  // namespace simbal
