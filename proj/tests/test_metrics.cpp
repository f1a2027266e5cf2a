// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "simbal/csv.hpp"
#include "simbal/error.hpp"
#include "simbal/init.hpp"
#include "simbal/metrics.hpp"
#include "simbal/ops.hpp"
#include "simbal/rng.hpp"

namespace {

using namespace simbal;

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(r * c);
  for (double& x : v) x = rng.normal();
  return Tensor({r, c}, v);
}

RoutingRecord record_with(std::size_t E, std::size_t n_seqs, std::size_t seq_len,
                          const std::vector<std::vector<std::uint32_t>>& experts) {
  RoutingRecord r;
  r.n_experts = E;
  r.top_a = experts.empty() ? 1 : experts[0].size();
  r.n_seqs = n_seqs;
  r.seq_len = seq_len;
  r.probs.assign(experts.size() * E, 1.0 / E);
  for (const auto& ids : experts) r.routes.push_back(TokenRoute{ids, std::vector<double>(ids.size(), 0.5)});
  return r;
}

TEST(Pes, IdenticalOutputsGiveOne) {
  Tensor y = random_matrix(5, 4, 1);
  std::vector<Tensor> outs{y, y, y};
  EXPECT_NEAR(pairwise_expert_similarity(outs).value, 1.0, 1e-14);
}

TEST(Pes, OrthogonalPairGivesZero) {
  std::vector<Tensor> outs{Tensor({1, 2}, {1, 0}), Tensor({1, 2}, {0, 3})};
  EXPECT_EQ(pairwise_expert_similarity(outs).value, 0.0);
}

TEST(Pes, TwoEqualOneOrthogonal) {
  Tensor u({1, 2}, {1, 0}), v({1, 2}, {0, 1});
  std::vector<Tensor> outs{u, u, v};
  EXPECT_NEAR(pairwise_expert_similarity(outs).value, 1.0 / 3.0, 1e-15);
}

TEST(Pes, ScaleInvariant) {
  std::vector<Tensor> outs{random_matrix(6, 3, 1), random_matrix(6, 3, 2), random_matrix(6, 3, 3)};
  const double base = pairwise_expert_similarity(outs).value;
  Graph g(false);
  outs[1] = ops::scale(g, outs[1], 7.5);
  EXPECT_NEAR(pairwise_expert_similarity(outs).value, base, 1e-14);
  EXPECT_GE(base, -1.0);
  EXPECT_LE(base, 1.0);
}

TEST(Pes, ZeroOutputsAreExcluded) {
  Tensor u({2, 2}, {1, 0, 1, 1}), z({2, 2});
  std::vector<Tensor> outs{u, u, z};
  PesResult r = pairwise_expert_similarity(outs);
  EXPECT_NEAR(r.value, 1.0, 1e-15);
  EXPECT_EQ(r.excluded_pairs, 4u);
}

TEST(Pes, CopiedExpertsInModelGiveOne) {
  Model m(ModelConfig::preset("toy"), 2);
  for (MoeBlock& b : m.blocks())
    for (std::size_t e = 1; e < b.experts.size(); ++e) b.experts[e] = b.experts[0];
  std::vector<std::uint32_t> ids{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<Batch> batches{Batch{2, 4, ids, ids}};
  for (double p : layer_pes(m, batches)) EXPECT_NEAR(p, 1.0, 1e-12);
}

TEST(Seu, AllAndHalf) {
  RoutingRecord all = record_with(4, 1, 4, {{0}, {1}, {2}, {3}});
  EXPECT_EQ(sequence_expert_utilization(std::span(&all, 1)), 1.0);
  RoutingRecord half = record_with(4, 2, 2, {{0}, {1}, {2}, {2}});
  // sequence 0 uses {0,1}, sequence 1 uses {2}
  EXPECT_DOUBLE_EQ(sequence_expert_utilization(std::span(&half, 1)), (0.5 + 0.25) / 2);
  RoutingRecord even = record_with(4, 2, 2, {{0, 1}, {1, 0}, {2, 3}, {3, 2}});
  EXPECT_EQ(sequence_expert_utilization(std::span(&even, 1)), 0.5);
}

TEST(Entropy, UniformOneHotAndTwoMass) {
  RoutingRecord r = record_with(32, 1, 1, {{0}});
  EXPECT_NEAR(routing_entropy(std::span(&r, 1)), std::log(32.0), 1e-12);
  EXPECT_NEAR(std::log(32.0), 3.4657, 1e-4);
  r = record_with(4, 1, 1, {{0}});
  r.probs = {1, 0, 0, 0};
  EXPECT_EQ(routing_entropy(std::span(&r, 1)), 0.0);
  r.probs = {0.5, 0.5, 0, 0};
  EXPECT_NEAR(routing_entropy(std::span(&r, 1)), std::log(2.0), 1e-15);
  r.gating = Gating::kSigmoid;
  EXPECT_THROW(routing_entropy(std::span(&r, 1)), ConfigError);
}

TEST(Entropy, MaximizedByUniform) {
  RoutingRecord r = record_with(4, 1, 1, {{0}});
  r.probs = {0.3, 0.2, 0.25, 0.25};
  EXPECT_LT(routing_entropy(std::span(&r, 1)), std::log(4.0));
}

TEST(UniqueExperts, Counts) {
  std::vector<RoutingRecord> rs{record_with(8, 1, 2, {{0}, {0}}), record_with(8, 1, 2, {{0}, {0}})};
  EXPECT_EQ(unique_experts(rs), 1u);
  rs.push_back(record_with(8, 1, 2, {{3}, {7}}));
  EXPECT_EQ(unique_experts(rs), 3u);
}

TEST(Gram, ClosedForms) {
  GramDeviation z = gram_deviation(Tensor({3, 2}, {1, 0, 0, 1, 0, 0}));
  EXPECT_EQ(z.max_dev, 0.0);
  EXPECT_EQ(z.l1, 0.0);
  EXPECT_EQ(z.mse, 0.0);
  GramDeviation d = gram_deviation(Tensor({2, 2}, {2, 0, 0, 2}));
  EXPECT_EQ(d.max_dev, 3.0);
  EXPECT_EQ(d.l1, 1.5);
  EXPECT_EQ(d.mse, 4.5);
}

TEST(Gram, OrthogonalInitializerIsTight) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_LT(gram_deviation(orthogonal_init(1536, 32, seed)).max_dev, 1e-10);
    EXPECT_LT(gram_deviation(orthogonal_init(40, 40, seed)).max_dev, 1e-10);
  }
}

TEST(Perplexity, UniformLogits) {
  ModelConfig cfg = ModelConfig::preset("toy");
  cfg.vocab_size = 256;
  Model m(cfg, 1);
  for (NamedTensor& p : m.parameters())
    if (p.name == "lm_head") std::fill(p.tensor.mutable_data().begin(), p.tensor.mutable_data().end(), 0.0);
  std::vector<std::uint32_t> ids{1, 200, 3, 40};
  std::vector<Batch> batches{Batch{1, 4, ids, ids}};
  EXPECT_NEAR(evaluate(m, batches).perplexity, 256.0, 1e-9);
}

TEST(Perplexity, MatchesDirectFormula) {
  ModelConfig cfg = ModelConfig::preset("toy");
  Model m(cfg, 4);
  std::vector<std::uint32_t> in{1, 5, 9}, tgt{5, 9, 2};
  Graph g(false);
  Tensor logits = m.forward(g, in, 1, 3).logits;
  double nll = 0.0;
  for (std::size_t t = 0; t < 3; ++t) {
    double z = 0.0;
    for (std::size_t v = 0; v < cfg.vocab_size; ++v) z += std::exp(logits.at(t, v));
    nll -= std::log(std::exp(logits.at(t, tgt[t])) / z);
  }
  std::vector<Batch> batches{Batch{1, 3, in, tgt}};
  EvalResult r = evaluate(m, batches);
  EXPECT_NEAR(r.mean_nll, nll / 3, 1e-10);
  EXPECT_NEAR(r.perplexity, std::exp(nll / 3), 1e-10);
  EXPECT_EQ(r.tokens, 3u);
}

TEST(Report, InvariantsAndSerialization) {
  ModelConfig cfg = ModelConfig::preset("toy");
  Model m(cfg, 3);
  std::vector<std::uint32_t> ids{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<Batch> batches{Batch{2, 4, ids, ids}};
  MetricsReport r = measure(m, batches, batches, 17);
  ASSERT_EQ(r.layers.size(), 2u);
  for (const LayerMetrics& l : r.layers) {
    EXPECT_GE(l.pes, -1.0);
    EXPECT_LE(l.pes, 1.0);
    EXPECT_GT(l.seu, 0.0);
    EXPECT_LE(l.seu, 1.0);
    EXPECT_GE(l.unique_experts, 1u);
    EXPECT_LE(l.unique_experts, 4u);
  }
  EXPECT_EQ(r.min_pes, std::min(r.layers[0].pes, r.layers[1].pes));
  auto rows = metrics_csv_rows(r);
  EXPECT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2][1], "model");
  EXPECT_EQ(rows[0].size(), metrics_csv_header().size());
  EXPECT_NE(metrics_json(r).find("\"step\": 17"), std::string::npos);
}

TEST(Csv, FormatsAndQuotes) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1e-300), "1e-300");
  EXPECT_EQ(format_double(std::nan("")), "nan");
  std::ostringstream s;
  CsvWriter w(s);
  w.row({"a", "b,c", "d\"e"});
  EXPECT_EQ(s.str(), "a,\"b,c\",\"d\"\"e\"\n");
}

}  // namespace
