// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include "simbal/balancing.hpp"

#include <cmath>

#include "simbal/error.hpp"
#include "simbal/ops.hpp"

namespace simbal {

namespace {

struct StrategyName {
  Strategy strategy;
  const char* name;
};

constexpr StrategyName kStrategies[] = {
    {Strategy::kNone, "none"}, {Strategy::kLbl, "lbl"},         {Strategy::kSimbal, "simbal"},
    {Strategy::kLf, "lf"},     {Strategy::kLfLbl, "lf+lbl"},     {Strategy::kLfSimbal, "lf+simbal"},
};

// Per-token constant weights w[t,i] = E * f_{seq(t),i} / tokens so that
// sum(gates * w) is the sequence-averaged loss.
std::vector<double> lbl_weights(const RoutingRecord& rec) {
  const std::size_t E = rec.n_experts, T = rec.tokens(), S = rec.seq_len;
  if (T == 0 || S == 0) throw DataError("lbl: routing record has no tokens");
  std::vector<double> w(T * E, 0.0);
  for (std::size_t b = 0; b < rec.n_seqs; ++b) {
    std::vector<double> f(E, 0.0);
    for (std::size_t t = b * S; t < (b + 1) * S; ++t) {
      const TokenRoute& r = rec.routes[t];
      for (std::size_t j = 0; j < r.experts.size(); ++j)
        if (r.weights[j] > 0.0) f[r.experts[j]] += 1.0;
    }
    for (std::size_t t = b * S; t < (b + 1) * S; ++t)
      for (std::size_t i = 0; i < E; ++i)
        w[t * E + i] = static_cast<double>(E) * (f[i] / S) / static_cast<double>(T);
  }
  return w;
}

}  // namespace

std::string to_string(Strategy s) {
  for (const auto& [strategy, name] : kStrategies)
    if (strategy == s) return name;
  return "unknown";
}

Strategy parse_strategy(const std::string& name) {
  for (const auto& [strategy, n] : kStrategies)
    if (name == n) return strategy;
  throw ConfigError("unknown balancing strategy '" + name +
                    "' (expected none, lbl, simbal, lf, lf+lbl or lf+simbal)");
}

std::string to_string(LayerReduce r) { return r == LayerReduce::kMean ? "mean" : "sum"; }

LayerReduce parse_layer_reduce(const std::string& name) {
  if (name == "mean") return LayerReduce::kMean;
  if (name == "sum") return LayerReduce::kSum;
  throw ConfigError("unknown layer reduction '" + name + "' (expected mean or sum)");
}

double lbl_value(const RoutingRecord& rec) {
  const std::size_t E = rec.n_experts, S = rec.seq_len;
  if (rec.tokens() == 0 || S == 0 || rec.n_seqs == 0) throw DataError("lbl: routing record has no tokens");
  double total = 0.0;
  for (std::size_t b = 0; b < rec.n_seqs; ++b) {
    std::vector<double> f(E, 0.0), p(E, 0.0);
    for (std::size_t t = b * S; t < (b + 1) * S; ++t) {
      std::vector<double> gates = rec.sparse_gates(t);
      for (std::size_t i = 0; i < E; ++i) {
        if (gates[i] > 0.0) f[i] += 1.0;
        p[i] += gates[i];
      }
    }
    double s = 0.0;
    for (std::size_t i = 0; i < E; ++i) s += (f[i] / S) * (p[i] / S);
    total += static_cast<double>(E) * s;
  }
  return total / static_cast<double>(rec.n_seqs);
}

double lbl_value(std::span<const RoutingRecord> layers, LayerReduce reduce) {
  if (layers.empty()) throw DataError("lbl: no routing records");
  double s = 0.0;
  for (const RoutingRecord& r : layers) s += lbl_value(r);
  return reduce == LayerReduce::kMean ? s / static_cast<double>(layers.size()) : s;
}

Tensor lbl_loss(Graph& g, const RouteResult& layer) {
  const RoutingRecord& rec = layer.record;
  Tensor w({rec.tokens(), rec.n_experts}, lbl_weights(rec));
  return ops::sum(g, ops::mul(g, layer.gates, w));
}

Tensor lbl_loss(Graph& g, std::span<const RouteResult> layers, LayerReduce reduce) {
  if (layers.empty()) throw DataError("lbl: no routing records");
  Tensor total = lbl_loss(g, layers[0]);
  for (std::size_t l = 1; l < layers.size(); ++l) total = ops::add(g, total, lbl_loss(g, layers[l]));
  if (reduce == LayerReduce::kMean) total = ops::scale(g, total, 1.0 / static_cast<double>(layers.size()));
  return total;
}

double simbal_value(const Tensor& router) {
  if (router.rank() != 2) throw DimensionError("simbal: router must be a matrix");
  const std::size_t D = router.dim(0), E = router.dim(1);
  const auto& r = router.data();
  double loss = 0.0;
  for (std::size_t i = 0; i < E; ++i) {
    for (std::size_t j = 0; j < E; ++j) {
      double gij = 0.0;
      for (std::size_t d = 0; d < D; ++d) gij += r[d * E + i] * r[d * E + j];
      loss += std::abs(gij - (i == j ? 1.0 : 0.0));
    }
  }
  return loss;
}

Tensor simbal_loss(Graph& g, const Tensor& router) {
  if (router.rank() != 2) throw DimensionError("simbal: router must be a matrix");
  const std::size_t E = router.dim(1);
  std::vector<double> eye(E * E, 0.0);
  for (std::size_t i = 0; i < E; ++i) eye[i * E + i] = 1.0;
  Tensor gram = ops::matmul(g, ops::transpose(g, router), router);
  return ops::sum(g, ops::abs(g, ops::sub(g, gram, Tensor({E, E}, eye))));
}

std::vector<double> usage_fractions(const RoutingRecord& record) {
  std::vector<std::size_t> counts = record.selection_counts();
  double total = 0.0;
  for (std::size_t c : counts) total += static_cast<double>(c);
  std::vector<double> f(counts.size(), 0.0);
  if (total == 0.0) return f;
  for (std::size_t i = 0; i < counts.size(); ++i) f[i] = static_cast<double>(counts[i]) / total;
  return f;
}

void lf_update(std::span<const double> usage, std::vector<double>& bias, double gamma) {
  if (usage.size() != bias.size()) throw DimensionError("lf_update: usage and bias lengths differ");
  const double target = 1.0 / static_cast<double>(usage.size());
  for (std::size_t i = 0; i < usage.size(); ++i) {
    if (usage[i] < 0.0) throw DataError("lf_update: negative usage fraction");
    const double diff = target - usage[i];
    if (diff > 0.0) bias[i] += gamma;
    else if (diff < 0.0) bias[i] -= gamma;
  }
}

Tensor z_loss(Graph& g, const Tensor& logits) {
  Tensor lse = ops::logsumexp_rows(g, logits);
  return ops::mean(g, ops::mul(g, lse, lse));
}

LossParts assemble_loss(Graph& g, const Tensor& ce, const BalancingSpec& spec,
                        std::span<const RouteResult> routing, std::span<const Tensor> routers,
                        const Tensor& logits) {
  LossParts parts;
  parts.ce = ce.item();
  Tensor total = ce;
  if (spec.uses_lbl() && spec.alpha != 0.0) {
    Tensor term = ops::scale(g, lbl_loss(g, routing, spec.lbl_reduce), spec.alpha);
    parts.lbl = term.item();
    total = ops::add(g, total, term);
  }
  if (spec.uses_simbal() && spec.simbal_coeff != 0.0 && !routers.empty()) {
    Tensor s = simbal_loss(g, routers[0]);
    for (std::size_t l = 1; l < routers.size(); ++l) s = ops::add(g, s, simbal_loss(g, routers[l]));
    if (spec.simbal_reduce == LayerReduce::kMean) s = ops::scale(g, s, 1.0 / static_cast<double>(routers.size()));
    Tensor term = ops::scale(g, s, spec.simbal_coeff);
    parts.simbal = term.item();
    total = ops::add(g, total, term);
  }
  if (spec.zloss_coeff != 0.0) {
    Tensor term = ops::scale(g, z_loss(g, logits), spec.zloss_coeff);
    parts.zloss = term.item();
    total = ops::add(g, total, term);
  }
  parts.total = total;
  parts.total_value = total.item();
  return parts;
}

}  // namespace simbal
