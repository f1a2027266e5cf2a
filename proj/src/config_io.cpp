// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include "simbal/config_io.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "simbal/error.hpp"

namespace simbal {

namespace {

void check_keys(const Json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("'" + section + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (!ok.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in '" + section + "'");
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError("bad value for '" + section + "." + key + "': " + e.what());
  }
}

}  // namespace

Json to_json(const ModelConfig& c) {
  return Json{{"d_model", c.d_model},
              {"depth", c.depth},
              {"heads", c.heads},
              {"d_expert", c.d_expert},
              {"n_experts", c.n_experts},
              {"top_a", c.top_a},
              {"vocab_size", c.vocab_size},
              {"max_seq_len", c.max_seq_len},
              {"rope_theta", c.rope_theta},
              {"gating", to_string(c.gating)},
              {"renormalize_gates", c.renormalize_gates},
              {"tie_embeddings", c.tie_embeddings},
              {"orthogonal_router_init", c.orthogonal_router_init},
              {"router_init_std", c.router_init_std}};
}

ModelConfig model_config_from_json(const Json& j) {
  const std::string s = "model";
  check_keys(j, s,
             {"preset", "d_model", "depth", "heads", "d_expert", "n_experts", "top_a", "vocab_size",
              "max_seq_len", "rope_theta", "gating", "renormalize_gates", "tie_embeddings",
              "orthogonal_router_init", "router_init_std"});
  ModelConfig c;
  if (j.contains("preset")) c = ModelConfig::preset(j.at("preset").get<std::string>());
  read(j, "d_model", c.d_model, s);
  read(j, "depth", c.depth, s);
  read(j, "heads", c.heads, s);
  read(j, "d_expert", c.d_expert, s);
  read(j, "n_experts", c.n_experts, s);
  read(j, "top_a", c.top_a, s);
  read(j, "vocab_size", c.vocab_size, s);
  read(j, "max_seq_len", c.max_seq_len, s);
  read(j, "rope_theta", c.rope_theta, s);
  if (j.contains("gating")) c.gating = parse_gating(j.at("gating").get<std::string>());
  read(j, "renormalize_gates", c.renormalize_gates, s);
  read(j, "tie_embeddings", c.tie_embeddings, s);
  read(j, "orthogonal_router_init", c.orthogonal_router_init, s);
  read(j, "router_init_std", c.router_init_std, s);
  c.validate();
  return c;
}

Json to_json(const BalancingSpec& c) {
  return Json{{"strategy", to_string(c.strategy)},       {"alpha", c.alpha},
              {"simbal_coeff", c.simbal_coeff},          {"gamma", c.gamma},
              {"zloss_coeff", c.zloss_coeff},            {"lbl_reduce", to_string(c.lbl_reduce)},
              {"simbal_reduce", to_string(c.simbal_reduce)}};
}

BalancingSpec balancing_from_json(const Json& j) {
  const std::string s = "balancing";
  check_keys(j, s, {"strategy", "alpha", "simbal_coeff", "gamma", "zloss_coeff", "lbl_reduce", "simbal_reduce"});
  BalancingSpec c;
  if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
  read(j, "alpha", c.alpha, s);
  read(j, "simbal_coeff", c.simbal_coeff, s);
  read(j, "gamma", c.gamma, s);
  read(j, "zloss_coeff", c.zloss_coeff, s);
  if (j.contains("lbl_reduce")) c.lbl_reduce = parse_layer_reduce(j.at("lbl_reduce").get<std::string>());
  if (j.contains("simbal_reduce")) c.simbal_reduce = parse_layer_reduce(j.at("simbal_reduce").get<std::string>());
  return c;
}

Json to_json(const ScheduleConfig& c) {
  return Json{{"peak_lr", c.peak_lr},
              {"warmup_steps", c.warmup_steps},
              {"total_steps", c.total_steps},
              {"floor_fraction", c.floor_fraction}};
}

ScheduleConfig schedule_from_json(const Json& j) {
  const std::string s = "schedule";
  check_keys(j, s, {"peak_lr", "warmup_steps", "total_steps", "floor_fraction"});
  ScheduleConfig c;
  read(j, "peak_lr", c.peak_lr, s);
  read(j, "total_steps", c.total_steps, s);
  c.warmup_steps = ScheduleConfig::with_default_warmup(c.peak_lr, c.total_steps).warmup_steps;
  read(j, "warmup_steps", c.warmup_steps, s);
  read(j, "floor_fraction", c.floor_fraction, s);
  c.validate();
  return c;
}

Json to_json(const AdamWConfig& c) {
  return Json{{"beta1", c.beta1},       {"beta2", c.beta2},         {"eps", c.eps},
              {"weight_decay", c.weight_decay}, {"grad_clip", c.grad_clip}, {"bf16_params", c.bf16_params}};
}

AdamWConfig optimizer_from_json(const Json& j) {
  const std::string s = "optimizer";
  check_keys(j, s, {"beta1", "beta2", "eps", "weight_decay", "grad_clip", "bf16_params"});
  AdamWConfig c;
  read(j, "beta1", c.beta1, s);
  read(j, "beta2", c.beta2, s);
  read(j, "eps", c.eps, s);
  read(j, "weight_decay", c.weight_decay, s);
  read(j, "grad_clip", c.grad_clip, s);
  read(j, "bf16_params", c.bf16_params, s);
  return c;
}

Json to_json(const DataConfig& c) {
  return Json{{"path", c.path},
              {"synthetic_tokens", c.synthetic_tokens},
              {"synthetic_modes", c.synthetic_modes},
              {"validation_fraction", c.validation_fraction}};
}

DataConfig data_config_from_json(const Json& j) {
  const std::string s = "data";
  check_keys(j, s, {"path", "synthetic_tokens", "synthetic_modes", "validation_fraction"});
  DataConfig c;
  read(j, "path", c.path, s);
  read(j, "synthetic_tokens", c.synthetic_tokens, s);
  read(j, "synthetic_modes", c.synthetic_modes, s);
  read(j, "validation_fraction", c.validation_fraction, s);
  return c;
}

Json to_json(const TrainRunConfig& c) {
  return Json{{"model", to_json(c.model)},
              {"balancing", to_json(c.balancing)},
              {"schedule", to_json(c.schedule)},
              {"optimizer", to_json(c.optimizer)},
              {"data", to_json(c.data)},
              {"seed", c.seed},
              {"batch_size", c.batch_size},
              {"seq_len", c.seq_len},
              {"decay_routers", c.decay_routers},
              {"checkpoint_every", c.checkpoint_every},
              {"eval_every", c.eval_every},
              {"eval_batches", c.eval_batches},
              {"pes_batches", c.pes_batches}};
}

TrainRunConfig train_config_from_json(const Json& j) {
  const std::string s = "run";
  check_keys(j, s,
             {"model", "balancing", "schedule", "optimizer", "data", "seed", "batch_size", "seq_len",
              "decay_routers", "checkpoint_every", "eval_every", "eval_batches", "pes_batches"});
  TrainRunConfig c;
  if (j.contains("balancing")) c.balancing = balancing_from_json(j.at("balancing"));
  if (j.contains("model")) {
    c.model = model_config_from_json(j.at("model"));
    if (!j.at("model").contains("orthogonal_router_init")) c.model.orthogonal_router_init = c.balancing.uses_simbal();
  } else {
    c.model.orthogonal_router_init = c.balancing.uses_simbal();
  }
  c.schedule = schedule_from_json(j.value("schedule", Json::object()));
  if (j.contains("optimizer")) c.optimizer = optimizer_from_json(j.at("optimizer"));
  if (j.contains("data")) c.data = data_config_from_json(j.at("data"));
  read(j, "seed", c.seed, s);
  read(j, "batch_size", c.batch_size, s);
  read(j, "seq_len", c.seq_len, s);
  read(j, "decay_routers", c.decay_routers, s);
  read(j, "checkpoint_every", c.checkpoint_every, s);
  read(j, "eval_every", c.eval_every, s);
  read(j, "eval_batches", c.eval_batches, s);
  read(j, "pes_batches", c.pes_batches, s);
  c.validate();
  return c;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("malformed JSON in '" + path + "': " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

std::string config_hash(const Json& j) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace simbal
