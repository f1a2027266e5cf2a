// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "simbal/data.hpp"
#include "simbal/model.hpp"
#include "simbal/routing.hpp"
#include "simbal/tensor.hpp"

namespace simbal {

struct PesResult {
  double value = 0.0;
  std::size_t samples = 0;          // samples with at least one valid pair
  std::size_t excluded_pairs = 0;   // pairs involving a zero-norm output
};

// outputs[e] holds expert e's outputs on the same samples, [samples, d].
// Per sample, the mean cosine over all unordered expert pairs; then the mean
// over samples.
PesResult pairwise_expert_similarity(std::span<const Tensor> outputs);

// Mean over sequences of (distinct selected experts) / E.
double sequence_expert_utilization(std::span<const RoutingRecord> records);
// Mean over tokens of the natural-log entropy of the full gate distribution.
// Softmax gating only.
double routing_entropy(std::span<const RoutingRecord> records);
std::size_t unique_experts(std::span<const RoutingRecord> records);

struct GramDeviation {
  double max_dev = 0.0;
  double l1 = 0.0;   // mean |G - I|
  double mse = 0.0;  // mean (G - I)^2
};

GramDeviation gram_deviation(const Tensor& router);

double perplexity_from_nll(double total_nll, std::size_t tokens);

struct EvalResult {
  double mean_nll = 0.0;
  double perplexity = 0.0;
  std::size_t tokens = 0;
  std::size_t expert_evaluations = 0;
  std::vector<std::vector<RoutingRecord>> records;  // [layer][batch], kept on request
  std::vector<std::vector<std::size_t>> selection_counts;  // [layer][expert]
};

EvalResult evaluate(const Model& model, std::span<const Batch> batches,
                    const ForwardOptions& options = {}, bool keep_records = false);

struct LayerMetrics {
  double pes = 0.0;
  double seu = 0.0;
  double entropy = 0.0;  // nan under sigmoid gating
  std::size_t unique_experts = 0;
  GramDeviation gram;
};

struct MetricsReport {
  std::size_t step = 0;
  std::vector<LayerMetrics> layers;
  double min_pes = 0.0;
  double mean_seu = 0.0;
  double perplexity = 0.0;
};

// Routing statistics and perplexity come from eval_batches; PES evaluates
// every expert densely on the MoE inputs produced by pes_batches.
MetricsReport measure(const Model& model, std::span<const Batch> eval_batches,
                      std::span<const Batch> pes_batches, std::size_t step);

// Per-layer PES only (dense expert evaluation on pes_batches).
std::vector<double> layer_pes(const Model& model, std::span<const Batch> pes_batches);

std::vector<std::string> metrics_csv_header();
// One row per layer followed by a "model" row.
std::vector<std::vector<std::string>> metrics_csv_rows(const MetricsReport& report);
std::string metrics_json(const MetricsReport& report);

}  // namespace simbal
