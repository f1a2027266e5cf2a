// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include "simbal/model.hpp"

#include <cmath>

#include "simbal/error.hpp"
#include "simbal/init.hpp"
#include "simbal/ops.hpp"
#include "simbal/rng.hpp"

namespace simbal {

namespace {

constexpr double kNormEps = 1e-6;

Tensor param(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

Tensor ones(std::size_t n) { return param(Tensor({n}, std::vector<double>(n, 1.0))); }
Tensor zeros(std::size_t n) { return Tensor::zeros({n}, true); }

Tensor deep_copy(const Tensor& t) {
  if (!t.defined()) return t;
  return param(t.clone());
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("ModelConfig: " + msg); };
  if (d_model == 0 || depth == 0 || d_expert == 0 || max_seq_len == 0) fail("sizes must be positive");
  if (heads == 0 || d_model % heads != 0) fail("d_model must be divisible by heads");
  if ((d_model / heads) % 2 != 0) fail("head dimension must be even for RoPE");
  if (n_experts == 0 || top_a < 1 || top_a > n_experts) fail("need 1 <= top_a <= n_experts");
  if (vocab_size < 2) fail("vocab_size must be at least 2");
  if (!(rope_theta > 0.0)) fail("rope_theta must be positive");
  if (!(router_init_std > 0.0)) fail("router_init_std must be positive");
}

ModelConfig ModelConfig::preset(const std::string& name) {
  ModelConfig c;
  if (name == "desk") return c;
  if (name == "toy") {
    c.d_model = 8;
    c.depth = 2;
    c.heads = 2;
    c.d_expert = 8;
    c.n_experts = 4;
    c.top_a = 2;
    c.vocab_size = 11;
    c.max_seq_len = 16;
    return c;
  }
  if (name == "M") {
    c.d_model = 48;
    c.depth = 4;
    c.heads = 4;
    c.d_expert = 48;
    c.n_experts = 32;
    c.top_a = 4;
    c.rope_theta = 1e4;
    return c;
  }
  if (name == "L") {
    c.d_model = 96;
    c.depth = 6;
    c.heads = 6;
    c.d_expert = 96;
    c.n_experts = 32;
    c.top_a = 4;
    c.rope_theta = 1e5;
    return c;
  }
  throw ConfigError("unknown model preset '" + name + "' (expected desk, toy, M or L)");
}

Tensor ffn_swiglu(Graph& g, const Tensor& x, const ExpertParams& p) {
  Tensor gate = ops::silu(g, ops::add_bias(g, ops::matmul(g, x, p.w_gate), p.b_gate));
  Tensor up = ops::add_bias(g, ops::matmul(g, x, p.w_up), p.b_up);
  return ops::add_bias(g, ops::matmul(g, ops::mul(g, gate, up), p.w_down), p.b_down);
}

Tensor moe_forward(Graph& g, const Tensor& x, std::span<const ExpertParams> experts,
                   const RouteResult& routing, std::size_t* evaluations) {
  const RoutingRecord& rec = routing.record;
  const std::size_t T = x.dim(0), D = x.dim(1), E = experts.size();
  if (rec.tokens() != T || rec.n_experts != E) {
    throw DimensionError("moe_forward: routing record does not match input or expert count");
  }
  std::vector<std::vector<std::size_t>> rows(E);
  for (std::size_t t = 0; t < T; ++t)
    for (std::uint32_t e : rec.routes[t].experts) rows[e].push_back(t);

  std::vector<Tensor> parts;
  std::vector<std::vector<std::size_t>> index;
  for (std::size_t e = 0; e < E; ++e) {
    if (rows[e].empty()) continue;
    std::vector<std::size_t> flat(rows[e].size());
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = rows[e][i] * E + e;
    Tensor out = ffn_swiglu(g, ops::gather_rows(g, x, rows[e]), experts[e]);
    parts.push_back(ops::scale_rows(g, out, ops::take(g, routing.gates, flat)));
    if (evaluations) *evaluations += rows[e].size();
    index.push_back(std::move(rows[e]));
  }
  return ops::scatter_add_rows(g, T, D, parts, index);
}

Tensor attention_block(Graph& g, const Tensor& x, const MoeBlock& block, const ModelConfig& cfg,
                       std::size_t n_seqs, std::size_t seq_len) {
  Tensor h = ops::rms_norm(g, x, block.attn_norm, kNormEps);
  Tensor q = ops::rope(g, ops::matmul(g, h, block.wq), cfg.heads, seq_len, cfg.rope_theta);
  Tensor k = ops::rope(g, ops::matmul(g, h, block.wk), cfg.heads, seq_len, cfg.rope_theta);
  Tensor v = ops::matmul(g, h, block.wv);
  Tensor a = ops::causal_attention(g, q, k, v, n_seqs, seq_len, cfg.heads);
  return ops::add(g, x, ops::matmul(g, a, block.wo));
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t D = config_.d_model, DE = config_.d_expert, V = config_.vocab_size;
  std::uint64_t stream = 0;
  auto next_seed = [&]() { return Rng::derive(seed, stream++); };
  const double in_std = 1.0 / std::sqrt(static_cast<double>(D));
  const double expert_out_std = 1.0 / std::sqrt(static_cast<double>(DE));

  embed_ = param(normal_init(V, D, 1.0, next_seed()));
  blocks_.resize(config_.depth);
  for (MoeBlock& b : blocks_) {
    b.attn_norm = ones(D);
    b.wq = param(normal_init(D, D, in_std, next_seed()));
    b.wk = param(normal_init(D, D, in_std, next_seed()));
    b.wv = param(normal_init(D, D, in_std, next_seed()));
    b.wo = param(normal_init(D, D, in_std, next_seed()));
    b.moe_norm = ones(D);
    const std::uint64_t router_seed = next_seed();
    b.router.weight = param(config_.orthogonal_router_init
                                ? orthogonal_init(D, config_.n_experts, router_seed)
                                : normal_init(D, config_.n_experts, config_.router_init_std,
                                              router_seed));
    b.router.lf_bias.assign(config_.n_experts, 0.0);
    b.experts.resize(config_.n_experts);
    for (ExpertParams& e : b.experts) {
      e.w_gate = param(normal_init(D, DE, in_std, next_seed()));
      e.b_gate = zeros(DE);
      e.w_up = param(normal_init(D, DE, in_std, next_seed()));
      e.b_up = zeros(DE);
      e.w_down = param(normal_init(DE, D, expert_out_std, next_seed()));
      e.b_down = zeros(D);
    }
  }
  final_norm_ = ones(D);
  if (!config_.tie_embeddings) lm_head_ = param(normal_init(D, V, in_std, next_seed()));
}

ForwardResult Model::forward(Graph& g, std::span<const std::uint32_t> tokens, std::size_t n_seqs,
                             std::size_t seq_len, const ForwardOptions& options) const {
  if (seq_len == 0 || seq_len > config_.max_seq_len) {
    throw ConfigError("Model::forward: seq_len " + std::to_string(seq_len) + " exceeds max_seq_len " +
                      std::to_string(config_.max_seq_len));
  }
  if (tokens.size() != n_seqs * seq_len) {
    throw DimensionError("Model::forward: expected " + std::to_string(n_seqs * seq_len) +
                         " tokens, got " + std::to_string(tokens.size()));
  }
  if (!options.overrides.empty() && options.overrides.size() != blocks_.size()) {
    throw ConfigError("Model::forward: overrides must be given for every layer");
  }
  ForwardResult result;
  Tensor x = ops::embedding(g, embed_, tokens);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const MoeBlock& b = blocks_[l];
    x = attention_block(g, x, b, config_, n_seqs, seq_len);
    Tensor h = ops::rms_norm(g, x, b.moe_norm, kNormEps);
    if (options.capture_moe_inputs) result.moe_inputs.push_back(h);
    const RoutingOverrides* ov = options.overrides.empty() ? nullptr : &options.overrides[l];
    RouteResult routing = route(g, h, b.router, config_.routing(), n_seqs, seq_len, ov);
    x = ops::add(g, x, moe_forward(g, h, b.experts, routing, &result.expert_evaluations));
    result.routing.push_back(std::move(routing));
  }
  x = ops::rms_norm(g, x, final_norm_, kNormEps);
  result.logits = config_.tie_embeddings ? ops::matmul(g, x, ops::transpose(g, embed_))
                                         : ops::matmul(g, x, lm_head_);
  return result;
}

std::vector<NamedTensor> Model::parameters() const {
  std::vector<NamedTensor> out;
  auto add = [&out](std::string name, const Tensor& t, bool decay, bool router = false) {
    out.push_back(NamedTensor{std::move(name), t, decay, router});
  };
  add("embed", embed_, true);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const MoeBlock& b = blocks_[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    add(p + "attn_norm", b.attn_norm, false);
    add(p + "attn.wq", b.wq, true);
    add(p + "attn.wk", b.wk, true);
    add(p + "attn.wv", b.wv, true);
    add(p + "attn.wo", b.wo, true);
    add(p + "moe_norm", b.moe_norm, false);
    add(p + "router", b.router.weight, true, true);
    for (std::size_t e = 0; e < b.experts.size(); ++e) {
      const ExpertParams& x = b.experts[e];
      const std::string q = p + "experts." + std::to_string(e) + ".";
      add(q + "w_gate", x.w_gate, true);
      add(q + "b_gate", x.b_gate, false);
      add(q + "w_up", x.w_up, true);
      add(q + "b_up", x.b_up, false);
      add(q + "w_down", x.w_down, true);
      add(q + "b_down", x.b_down, false);
    }
  }
  add("final_norm", final_norm_, false);
  if (lm_head_.defined()) add("lm_head", lm_head_, true);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.size();
  return n;
}

std::size_t Model::embedding_parameter_count() const {
  return embed_.size() + (lm_head_.defined() ? lm_head_.size() : 0);
}

std::size_t Model::active_parameter_count() const {
  std::size_t per_expert = 0;
  if (!blocks_.empty() && !blocks_[0].experts.empty()) {
    const ExpertParams& e = blocks_[0].experts[0];
    for (const Tensor* t : {&e.w_gate, &e.b_gate, &e.w_up, &e.b_up, &e.w_down, &e.b_down})
      per_expert += t->size();
  }
  const std::size_t all_experts = per_expert * config_.n_experts * blocks_.size();
  return parameter_count() - all_experts + per_expert * config_.top_a * blocks_.size();
}

std::vector<Tensor> Model::expert_outputs(std::size_t layer, const Tensor& x) const {
  Graph g(false);
  std::vector<Tensor> outs;
  for (const ExpertParams& e : blocks_.at(layer).experts) outs.push_back(ffn_swiglu(g, x, e));
  return outs;
}

Model Model::clone() const {
  Model m;
  m.config_ = config_;
  m.embed_ = deep_copy(embed_);
  m.final_norm_ = deep_copy(final_norm_);
  m.lm_head_ = deep_copy(lm_head_);
  m.blocks_.resize(blocks_.size());
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const MoeBlock& s = blocks_[l];
    MoeBlock& d = m.blocks_[l];
    d.attn_norm = deep_copy(s.attn_norm);
    d.wq = deep_copy(s.wq);
    d.wk = deep_copy(s.wk);
    d.wv = deep_copy(s.wv);
    d.wo = deep_copy(s.wo);
    d.moe_norm = deep_copy(s.moe_norm);
    d.router.weight = deep_copy(s.router.weight);
    d.router.lf_bias = s.router.lf_bias;
    for (const ExpertParams& e : s.experts) {
      d.experts.push_back(ExpertParams{deep_copy(e.w_gate), deep_copy(e.b_gate), deep_copy(e.w_up),
                                       deep_copy(e.b_up), deep_copy(e.w_down), deep_copy(e.b_down)});
    }
  }
  return m;
}

}  // namespace simbal
