// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include "simbal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "simbal/csv.hpp"
#include "simbal/error.hpp"
#include "simbal/ops.hpp"

namespace simbal {

PesResult pairwise_expert_similarity(std::span<const Tensor> outputs) {
  PesResult result;
  const std::size_t E = outputs.size();
  if (E < 2) throw ConfigError("PES needs at least two experts");
  const std::size_t N = outputs[0].dim(0), D = outputs[0].dim(1);
  for (const Tensor& t : outputs)
    if (t.shape() != outputs[0].shape()) throw DimensionError("PES: expert outputs differ in shape");

  std::vector<double> norms(E);
  double total = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t e = 0; e < E; ++e) {
      const double* v = outputs[e].data().data() + n * D;
      double s = 0.0;
      for (std::size_t d = 0; d < D; ++d) s += v[d] * v[d];
      norms[e] = std::sqrt(s);
    }
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < E; ++i) {
      for (std::size_t j = i + 1; j < E; ++j) {
        if (norms[i] == 0.0 || norms[j] == 0.0) {
          ++result.excluded_pairs;
          continue;
        }
        const double* a = outputs[i].data().data() + n * D;
        const double* b = outputs[j].data().data() + n * D;
        double dot = 0.0;
        for (std::size_t d = 0; d < D; ++d) dot += a[d] * b[d];
        sum += std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
        ++pairs;
      }
    }
    if (pairs == 0) continue;
    total += sum / static_cast<double>(pairs);
    ++result.samples;
  }
  result.value = result.samples ? total / static_cast<double>(result.samples) : 0.0;
  return result;
}

double sequence_expert_utilization(std::span<const RoutingRecord> records) {
  double total = 0.0;
  std::size_t seqs = 0;
  for (const RoutingRecord& r : records) {
    for (std::size_t b = 0; b < r.n_seqs; ++b) {
      std::vector<bool> used(r.n_experts, false);
      for (std::size_t t = b * r.seq_len; t < (b + 1) * r.seq_len; ++t)
        for (std::uint32_t e : r.routes[t].experts) used[e] = true;
      total += static_cast<double>(std::count(used.begin(), used.end(), true)) /
               static_cast<double>(r.n_experts);
      ++seqs;
    }
  }
  if (seqs == 0) throw DataError("SEU: no sequences");
  return total / static_cast<double>(seqs);
}

double routing_entropy(std::span<const RoutingRecord> records) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const RoutingRecord& r : records) {
    if (r.gating != Gating::kSoftmax) throw ConfigError("routing entropy requires softmax gating");
    for (std::size_t t = 0; t < r.tokens(); ++t) {
      double h = 0.0;
      for (double p : r.token_probs(t))
        if (p > 0.0) h -= p * std::log(p);
      total += h;
      ++tokens;
    }
  }
  if (tokens == 0) throw DataError("routing entropy: no tokens");
  return total / static_cast<double>(tokens);
}

std::size_t unique_experts(std::span<const RoutingRecord> records) {
  if (records.empty()) return 0;
  std::vector<bool> used(records[0].n_experts, false);
  for (const RoutingRecord& r : records)
    for (const TokenRoute& t : r.routes)
      for (std::uint32_t e : t.experts) used[e] = true;
  return static_cast<std::size_t>(std::count(used.begin(), used.end(), true));
}

GramDeviation gram_deviation(const Tensor& router) {
  if (router.rank() != 2) throw DimensionError("gram_deviation: router must be a matrix");
  const std::size_t D = router.dim(0), E = router.dim(1);
  const auto& r = router.data();
  GramDeviation out;
  for (std::size_t i = 0; i < E; ++i) {
    for (std::size_t j = 0; j < E; ++j) {
      double g = 0.0;
      for (std::size_t d = 0; d < D; ++d) g += r[d * E + i] * r[d * E + j];
      const double dev = std::abs(g - (i == j ? 1.0 : 0.0));
      out.max_dev = std::max(out.max_dev, dev);
      out.l1 += dev;
      out.mse += dev * dev;
    }
  }
  out.l1 /= static_cast<double>(E * E);
  out.mse /= static_cast<double>(E * E);
  return out;
}

double perplexity_from_nll(double total_nll, std::size_t tokens) {
  if (tokens == 0) throw DataError("perplexity: no tokens");
  return std::exp(total_nll / static_cast<double>(tokens));
}

EvalResult evaluate(const Model& model, std::span<const Batch> batches, const ForwardOptions& options,
                    bool keep_records) {
  if (batches.empty()) throw DataError("evaluation stream is empty");
  const ModelConfig& cfg = model.config();
  EvalResult out;
  out.selection_counts.assign(cfg.depth, std::vector<std::size_t>(cfg.n_experts, 0));
  if (keep_records) out.records.resize(cfg.depth);
  double nll = 0.0;
  for (const Batch& b : batches) {
    Graph g(false);
    ForwardResult fr = model.forward(g, b.inputs, b.n_seqs, b.seq_len, options);
    const double ce = ops::cross_entropy(g, fr.logits, b.targets).item();
    nll += ce * static_cast<double>(b.targets.size());
    out.tokens += b.targets.size();
    out.expert_evaluations += fr.expert_evaluations;
    for (std::size_t l = 0; l < fr.routing.size(); ++l) {
      auto counts = fr.routing[l].record.selection_counts();
      for (std::size_t e = 0; e < counts.size(); ++e) out.selection_counts[l][e] += counts[e];
      if (keep_records) out.records[l].push_back(std::move(fr.routing[l].record));
    }
  }
  out.mean_nll = nll / static_cast<double>(out.tokens);
  out.perplexity = perplexity_from_nll(nll, out.tokens);
  return out;
}

std::vector<double> layer_pes(const Model& model, std::span<const Batch> pes_batches) {
  const std::size_t L = model.config().depth;
  std::vector<double> weighted(L, 0.0);
  std::vector<std::size_t> samples(L, 0);
  ForwardOptions opts;
  opts.capture_moe_inputs = true;
  for (const Batch& b : pes_batches) {
    Graph g(false);
    ForwardResult fr = model.forward(g, b.inputs, b.n_seqs, b.seq_len, opts);
    for (std::size_t l = 0; l < L; ++l) {
      std::vector<Tensor> outs = model.expert_outputs(l, fr.moe_inputs[l]);
      PesResult p = pairwise_expert_similarity(outs);
      weighted[l] += p.value * static_cast<double>(p.samples);
      samples[l] += p.samples;
    }
  }
  std::vector<double> pes(L, 0.0);
  for (std::size_t l = 0; l < L; ++l)
    pes[l] = samples[l] ? weighted[l] / static_cast<double>(samples[l]) : 0.0;
  return pes;
}

MetricsReport measure(const Model& model, std::span<const Batch> eval_batches,
                      std::span<const Batch> pes_batches, std::size_t step) {
  const ModelConfig& cfg = model.config();
  MetricsReport rep;
  rep.step = step;
  EvalResult ev = evaluate(model, eval_batches, {}, true);
  rep.perplexity = ev.perplexity;
  std::vector<double> pes = layer_pes(model, pes_batches);
  rep.layers.resize(cfg.depth);
  rep.min_pes = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    LayerMetrics& m = rep.layers[l];
    m.pes = pes[l];
    m.seu = sequence_expert_utilization(ev.records[l]);
    m.entropy = cfg.gating == Gating::kSoftmax ? routing_entropy(ev.records[l])
                                               : std::numeric_limits<double>::quiet_NaN();
    m.unique_experts = unique_experts(ev.records[l]);
    m.gram = gram_deviation(model.blocks()[l].router.weight);
    rep.min_pes = std::min(rep.min_pes, m.pes);
    rep.mean_seu += m.seu / static_cast<double>(cfg.depth);
  }
  return rep;
}

std::vector<std::string> metrics_csv_header() {
  return {"step",     "layer",    "pes",          "seu",     "entropy",  "unique_experts",
          "gram_l1",  "gram_mse", "gram_max_dev", "min_pes", "mean_seu", "perplexity"};
}

std::vector<std::vector<std::string>> metrics_csv_rows(const MetricsReport& r) {
  std::vector<std::vector<std::string>> rows;
  const std::string step = std::to_string(r.step);
  for (std::size_t l = 0; l < r.layers.size(); ++l) {
    const LayerMetrics& m = r.layers[l];
    rows.push_back({step, std::to_string(l), format_double(m.pes), format_double(m.seu),
                    format_double(m.entropy), std::to_string(m.unique_experts),
                    format_double(m.gram.l1), format_double(m.gram.mse),
                    format_double(m.gram.max_dev), "", "", ""});
  }
  rows.push_back({step, "model", "", "", "", "", "", "", "", format_double(r.min_pes),
                  format_double(r.mean_seu), format_double(r.perplexity)});
  return rows;
}

std::string metrics_json(const MetricsReport& r) {
  nlohmann::json j;
  j["step"] = r.step;
  j["min_pes"] = r.min_pes;
  j["mean_seu"] = r.mean_seu;
  j["perplexity"] = r.perplexity;
  j["layers"] = nlohmann::json::array();
  for (const LayerMetrics& m : r.layers) {
    j["layers"].push_back({{"pes", m.pes},
                           {"seu", m.seu},
                           {"entropy", m.entropy},
                           {"unique_experts", m.unique_experts},
                           {"gram_l1", m.gram.l1},
                           {"gram_mse", m.gram.mse},
                           {"gram_max_dev", m.gram.max_dev}});
  }
  return j.dump(2);
}

}  // namespace simbal
