// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "simbal/routing.hpp"
#include "simbal/tensor.hpp"

namespace simbal {

struct ModelConfig {
  std::size_t d_model = 32;
  std::size_t depth = 2;
  std::size_t heads = 2;
  std::size_t d_expert = 32;
  std::size_t n_experts = 8;
  std::size_t top_a = 2;
  std::size_t vocab_size = 256;
  std::size_t max_seq_len = 64;
  double rope_theta = 1e4;
  Gating gating = Gating::kSoftmax;
  bool renormalize_gates = false;
  bool tie_embeddings = false;
  // Router initialization: orthonormal columns, or N(0, router_init_std^2).
  bool orthogonal_router_init = false;
  double router_init_std = 0.02;

  // Throws ConfigError on an inconsistent configuration.
  void validate() const;
  RoutingConfig routing() const {
    return RoutingConfig{n_experts, top_a, gating, renormalize_gates};
  }

  // "M" and "L" keep the reference architecture ratios (32 experts, top 4,
  // RoPE theta 1e4 / 1e5) at reduced width and depth; "desk" is the small
  // default used by the experiment drivers; "toy" is for gradient checks.
  static ModelConfig preset(const std::string& name);
};

// SwiGLU expert: down(silu(x*w_gate + b_gate) * (x*w_up + b_up)) + b_down.
// Weights are stored input-major, i.e. w_gate is [d_model, d_expert].
struct ExpertParams {
  Tensor w_gate, b_gate;
  Tensor w_up, b_up;
  Tensor w_down, b_down;
};

struct MoeBlock {
  Tensor attn_norm;           // [d_model]
  Tensor wq, wk, wv, wo;      // [d_model, d_model]
  Tensor moe_norm;            // [d_model]
  RouterState router;
  std::vector<ExpertParams> experts;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool decay = true;  // eligible for weight decay
  bool is_router = false;
};

struct ForwardOptions {
  // Per-layer routing overrides (empty = none).
  std::vector<RoutingOverrides> overrides;
  // Keep each layer's MoE input (the normalized hidden state) for analysis.
  bool capture_moe_inputs = false;
};

struct ForwardResult {
  Tensor logits;                        // [tokens, vocab]
  std::vector<RouteResult> routing;     // one per layer
  std::vector<Tensor> moe_inputs;       // filled when requested
  std::size_t expert_evaluations = 0;   // (token, expert) FFN evaluations
};

Tensor ffn_swiglu(Graph& g, const Tensor& x, const ExpertParams& p);

// Sparse mixture: per token, the gate-weighted sum of the selected experts'
// outputs. Unselected experts are never evaluated. Adds the number of
// (token, expert) evaluations to *evaluations when given.
Tensor moe_forward(Graph& g, const Tensor& x, std::span<const ExpertParams> experts,
                   const RouteResult& routing, std::size_t* evaluations = nullptr);

// Pre-norm causal multi-head self-attention with RoPE and a residual add.
Tensor attention_block(Graph& g, const Tensor& x, const MoeBlock& block, const ModelConfig& cfg,
                       std::size_t n_seqs, std::size_t seq_len);

class Model {
 public:
  Model() = default;
  // Deterministic initialization from the seed.
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // tokens holds n_seqs sequences of seq_len ids back to back.
  ForwardResult forward(Graph& g, std::span<const std::uint32_t> tokens, std::size_t n_seqs,
                        std::size_t seq_len, const ForwardOptions& options = {}) const;

  // Every trainable tensor with a stable name, in a fixed order.
  std::vector<NamedTensor> parameters() const;
  std::size_t parameter_count() const;
  // Parameters touched per token: shared weights plus top_a experts.
  std::size_t active_parameter_count() const;
  std::size_t embedding_parameter_count() const;

  std::vector<MoeBlock>& blocks() { return blocks_; }
  const std::vector<MoeBlock>& blocks() const { return blocks_; }
  const Tensor& embedding() const { return embed_; }

  // Outputs of every expert of one layer on x (no routing), for analysis.
  std::vector<Tensor> expert_outputs(std::size_t layer, const Tensor& x) const;

  Model clone() const;

 private:
  ModelConfig config_;
  Tensor embed_;       // [vocab, d_model]
  std::vector<MoeBlock> blocks_;
  Tensor final_norm_;  // [d_model]
  Tensor lm_head_;     // [d_model, vocab]; undefined when tied
};

}  // namespace simbal
