// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include "simbal/routing.hpp"

#include <algorithm>
#include <numeric>

#include "simbal/error.hpp"
#include "simbal/ops.hpp"

namespace simbal {

std::string to_string(Gating gating) {
  return gating == Gating::kSoftmax ? "softmax" : "sigmoid";
}

Gating parse_gating(const std::string& name) {
  if (name == "softmax") return Gating::kSoftmax;
  if (name == "sigmoid") return Gating::kSigmoid;
  throw ConfigError("unknown gating '" + name + "' (expected softmax or sigmoid)");
}

std::vector<double> RoutingRecord::sparse_gates(std::size_t t) const {
  std::vector<double> gates(n_experts, 0.0);
  const TokenRoute& r = routes.at(t);
  for (std::size_t j = 0; j < r.experts.size(); ++j) gates[r.experts[j]] = r.weights[j];
  return gates;
}

std::vector<std::size_t> RoutingRecord::selection_counts() const {
  std::vector<std::size_t> counts(n_experts, 0);
  for (const TokenRoute& r : routes)
    for (std::uint32_t e : r.experts) ++counts[e];
  return counts;
}

std::vector<std::uint32_t> select_top(std::span<const double> scores, std::size_t count,
                                      const std::vector<bool>& excluded) {
  std::vector<std::uint32_t> ids;
  ids.reserve(scores.size());
  for (std::uint32_t e = 0; e < scores.size(); ++e) {
    if (excluded.empty() || !excluded[e]) ids.push_back(e);
  }
  if (ids.size() < count) throw ConfigError("select_top: fewer eligible experts than top_a");
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(count), ids.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                    });
  ids.resize(count);
  return ids;
}

RouteResult route(Graph& g, const Tensor& x, const RouterState& router, const RoutingConfig& cfg,
                  std::size_t n_seqs, std::size_t seq_len, const RoutingOverrides* overrides) {
  const std::size_t E = cfg.n_experts, A = cfg.top_a;
  if (A < 1 || A > E) {
    throw ConfigError("route: top_a=" + std::to_string(A) + " must lie in [1, " +
                      std::to_string(E) + "]");
  }
  if (router.weight.rank() != 2 || router.weight.dim(1) != E) {
    throw DimensionError("route: router " + shape_string(router.weight.shape()) +
                         " does not have " + std::to_string(E) + " columns");
  }
  const std::size_t T = x.dim(0);
  if (T != n_seqs * seq_len) throw DimensionError("route: token count != n_seqs * seq_len");
  if (!router.lf_bias.empty() && router.lf_bias.size() != E) {
    throw DimensionError("route: lf_bias length differs from expert count");
  }

  const std::vector<bool> none;
  const std::vector<bool>& excluded = overrides ? overrides->excluded : none;
  const bool any_excluded = std::find(excluded.begin(), excluded.end(), true) != excluded.end();
  if (!excluded.empty() && excluded.size() != E) {
    throw ConfigError("route: excluded mask length differs from expert count");
  }
  const double threshold = overrides ? overrides->prune_threshold : 0.0;
  if (threshold < 0.0 || threshold >= 1.0) throw ConfigError("route: prune threshold must lie in [0, 1)");

  Tensor scores = ops::matmul(g, x, router.weight);
  Tensor probs;
  if (cfg.gating == Gating::kSigmoid) {
    probs = ops::sigmoid(g, scores);
  } else {
    probs = ops::softmax(g, scores, -1);
    if (any_excluded) {
      std::vector<double> keep(T * E);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t e = 0; e < E; ++e) keep[t * E + e] = excluded[e] ? 0.0 : 1.0;
      probs = ops::normalize_rows(g, ops::mul(g, probs, Tensor({T, E}, std::move(keep))));
    }
  }

  RouteResult out;
  RoutingRecord& rec = out.record;
  rec.n_experts = E;
  rec.top_a = A;
  rec.n_seqs = n_seqs;
  rec.seq_len = seq_len;
  rec.gating = cfg.gating;
  rec.probs.assign(probs.data().begin(), probs.data().end());
  rec.routes.resize(T);

  std::vector<double> mask(T * E, 0.0);
  std::vector<double> biased(E);
  auto sv = scores.data();
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t e = 0; e < E; ++e) {
      biased[e] = sv[t * E + e] + (router.lf_bias.empty() ? 0.0 : router.lf_bias[e]);
    }
    std::vector<std::uint32_t> chosen = select_top(biased, A, excluded);
    TokenRoute& r = rec.routes[t];
    for (std::size_t j = 0; j < chosen.size(); ++j) {
      const double p = rec.probs[t * E + chosen[j]];
      if (j > 0 && p < threshold) continue;
      r.experts.push_back(chosen[j]);
      mask[t * E + chosen[j]] = 1.0;
    }
  }

  Tensor gates = ops::mul(g, probs, Tensor({T, E}, std::move(mask)));
  if (cfg.renormalize_gates) gates = ops::normalize_rows(g, gates);
  for (std::size_t t = 0; t < T; ++t) {
    TokenRoute& r = rec.routes[t];
    for (std::uint32_t e : r.experts) r.weights.push_back(gates.data()[t * E + e]);
  }
  out.probs = probs;
  out.gates = gates;
  return out;
}

}  // namespace simbal
