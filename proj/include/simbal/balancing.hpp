// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "simbal/routing.hpp"
#include "simbal/tensor.hpp"

namespace simbal {

enum class Strategy { kNone, kLbl, kSimbal, kLf, kLfLbl, kLfSimbal };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);

enum class LayerReduce { kMean, kSum };

std::string to_string(LayerReduce r);
LayerReduce parse_layer_reduce(const std::string& name);

struct BalancingSpec {
  Strategy strategy = Strategy::kNone;
  double alpha = 0.01;
  double simbal_coeff = 0.1;
  double gamma = 0.001;
  double zloss_coeff = 1e-5;
  LayerReduce lbl_reduce = LayerReduce::kMean;
  LayerReduce simbal_reduce = LayerReduce::kSum;

  bool uses_lbl() const { return strategy == Strategy::kLbl || strategy == Strategy::kLfLbl; }
  bool uses_simbal() const {
    return strategy == Strategy::kSimbal || strategy == Strategy::kLfSimbal;
  }
  bool uses_lf() const {
    return strategy == Strategy::kLf || strategy == Strategy::kLfLbl ||
           strategy == Strategy::kLfSimbal;
  }
};

// Load-balancing loss of one layer: per sequence E * sum_i f_i * P_i with
// f_i the fraction of tokens whose gate for i is nonzero and P_i the mean
// gate, averaged over sequences. Unscaled.
double lbl_value(const RoutingRecord& record);
double lbl_value(std::span<const RoutingRecord> layers, LayerReduce reduce = LayerReduce::kMean);

// Same quantity on the tape; the selection fractions are constants.
Tensor lbl_loss(Graph& g, const RouteResult& layer);
Tensor lbl_loss(Graph& g, std::span<const RouteResult> layers,
                LayerReduce reduce = LayerReduce::kMean);

// Entrywise L1 distance of the router Gram matrix from the identity.
double simbal_value(const Tensor& router);
Tensor simbal_loss(Graph& g, const Tensor& router);

// Per-expert share of all selections in the record (sums to 1).
std::vector<double> usage_fractions(const RoutingRecord& record);

// Moves each bias by gamma toward uniform usage: +gamma when the expert is
// under-used, -gamma when over-used, unchanged at exactly 1/E.
void lf_update(std::span<const double> usage, std::vector<double>& bias, double gamma);

// Mean over rows of logsumexp(logits)^2.
Tensor z_loss(Graph& g, const Tensor& logits);

struct LossParts {
  Tensor total;
  // Each addend as it enters the total.
  double ce = 0.0;
  double lbl = 0.0;
  double simbal = 0.0;
  double zloss = 0.0;
  double total_value = 0.0;
};

LossParts assemble_loss(Graph& g, const Tensor& ce, const BalancingSpec& spec,
                        std::span<const RouteResult> routing, std::span<const Tensor> routers,
                        const Tensor& logits);

}  // namespace simbal
