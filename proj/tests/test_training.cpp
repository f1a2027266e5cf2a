// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "simbal/checkpoint.hpp"
#include "simbal/config_io.hpp"
#include "simbal/error.hpp"
#include "simbal/init.hpp"
#include "simbal/metrics.hpp"
#include "simbal/ops.hpp"
#include "simbal/optimizer.hpp"
#include "simbal/schedule.hpp"
#include "simbal/trainer.hpp"

namespace {

using namespace simbal;
namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("simbal_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

TrainRunConfig tiny_run(Strategy strategy = Strategy::kLbl) {
  TrainRunConfig run;
  run.model.d_model = 16;
  run.model.d_expert = 16;
  run.model.n_experts = 4;
  run.model.max_seq_len = 16;
  run.balancing.strategy = strategy;
  run.model.orthogonal_router_init = run.balancing.uses_simbal();
  run.schedule = ScheduleConfig::with_default_warmup(3e-3, 20);
  run.batch_size = 4;
  run.seq_len = 16;
  run.data.synthetic_tokens = 20000;
  run.eval_batches = 2;
  run.pes_batches = 1;
  return run;
}

TEST(Schedule, Endpoints) {
  ScheduleConfig s{1e-3, 100, 1000, 0.1};
  EXPECT_DOUBLE_EQ(lr_at(0, s), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(100, s), 1e-3);
  EXPECT_NEAR(lr_at(1000, s), 1e-4, 1e-18);
  EXPECT_NEAR(lr_at(5000, s), 1e-4, 1e-18);
  EXPECT_NEAR(lr_at(550, s), 0.55e-3, 1e-15);
}

TEST(Schedule, ContinuousAtJunctionAndMonotone) {
  ScheduleConfig s{2e-3, 50, 400, 0.1};
  EXPECT_NEAR(lr_at(49, s), lr_at(50, s), 2e-3 * 0.9 / 50 + 1e-15);
  EXPECT_NEAR(lr_at(51, s), lr_at(50, s), 1e-6);
  for (std::size_t t = 1; t <= 50; ++t) EXPECT_GT(lr_at(t, s), lr_at(t - 1, s));
  for (std::size_t t = 51; t <= 400; ++t) EXPECT_LT(lr_at(t, s), lr_at(t - 1, s));
}

TEST(Schedule, DefaultWarmupAndValidation) {
  EXPECT_EQ(ScheduleConfig::with_default_warmup(1e-3, 500).warmup_steps, 25u);
  EXPECT_EQ(ScheduleConfig::with_default_warmup(1e-3, 100000).warmup_steps, 2000u);
  ScheduleConfig bad{1e-3, 10, 10, 0.1};
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(AdamW, ZeroGradientNoDecayLeavesParams) {
  Tensor p({3}, {1.0, -2.0, 0.5}, true);
  AdamW opt({ParamSlot{"p", p, true}}, AdamWConfig{.weight_decay = 0.0});
  opt.step(0.1);
  EXPECT_EQ(p.data()[0], 1.0);
  EXPECT_EQ(p.data()[1], -2.0);
}

TEST(AdamW, MovesTowardMinimum) {
  Tensor p({1}, {1.0}, true);
  AdamW opt({ParamSlot{"p", p, true}}, AdamWConfig{});
  Graph g;
  g.backward(ops::scale(g, ops::sum(g, ops::mul(g, p, p)), 0.5));
  opt.step(0.1);
  EXPECT_LT(p.data()[0], 1.0);
  EXPECT_GT(p.data()[0], 0.0);
}

TEST(AdamW, MatchesScalarReimplementation) {
  Tensor p({2}, {1.5, -0.7}, true);
  const AdamWConfig cfg{.beta1 = 0.8, .beta2 = 0.99, .eps = 1e-8, .weight_decay = 0.05};
  AdamW opt({ParamSlot{"p", p, true}}, cfg);
  // f = 0.5 * sum(c * x^2)
  const double c[2] = {1.0, 3.0};
  double x[2] = {1.5, -0.7}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 10; ++t) {
    const double lr = 0.01 * t;
    Graph g;
    g.backward(ops::scale(g, ops::sum(g, ops::mul(g, ops::mul(g, p, p), Tensor({2}, {c[0], c[1]}))), 0.5));
    opt.step(lr);
    opt.zero_grad();
    for (int i = 0; i < 2; ++i) {
      const double grad = c[i] * x[i];
      x[i] *= 1.0 - lr * 0.05;
      m[i] = 0.8 * m[i] + 0.2 * grad;
      v[i] = 0.99 * v[i] + 0.01 * grad * grad;
      const double mh = m[i] / (1 - std::pow(0.8, t)), vh = v[i] / (1 - std::pow(0.99, t));
      x[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(p.data()[i], x[i], 1e-12) << "step " << t;
  }
}

TEST(AdamW, NoDecayForExcludedSlots) {
  Tensor a({1}, {1.0}, true), b({1}, {1.0}, true);
  AdamW opt({ParamSlot{"a", a, true}, ParamSlot{"b", b, false}}, AdamWConfig{.weight_decay = 0.5});
  opt.step(0.1);
  EXPECT_DOUBLE_EQ(a.data()[0], 0.95);
  EXPECT_EQ(b.data()[0], 1.0);
}

TEST(AdamW, NonFiniteGradientAbortsStep) {
  Tensor p({2}, {1.0, 2.0}, true);
  AdamW opt({ParamSlot{"p", p, true}}, AdamWConfig{});
  p.mutable_grad()[1] = std::nan("");
  EXPECT_THROW(opt.step(0.1), NumericError);
  EXPECT_EQ(p.data()[0], 1.0);
  EXPECT_EQ(opt.steps(), 0u);
}

TEST(Bf16, Rounding) {
  EXPECT_EQ(round_bf16(1.0), 1.0);
  EXPECT_EQ(round_bf16(1.0 + 1.0 / 512), 1.0);
  EXPECT_EQ(round_bf16(1.0 + 1.0 / 256), 1.0);  // tie to even
  EXPECT_EQ(round_bf16(1.0 + 3.0 / 256), 1.0 + 1.0 / 64);
  EXPECT_EQ(round_bf16(1.0 + 1.0 / 128), 1.0 + 1.0 / 128);
}

TEST(OrthoInit, TallMatrixIsOrthonormal) {
  for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
    Tensor q = orthogonal_init(1536, 32, seed);
    EXPECT_LT(gram_deviation(q).max_dev, 1e-10);
  }
}

TEST(OrthoInit, SingleColumnAndDeterminism) {
  Tensor q = orthogonal_init(10, 1, 5);
  double n = 0.0;
  for (double v : q.data()) n += v * v;
  EXPECT_NEAR(n, 1.0, 1e-14);
  auto values = [](std::uint64_t seed) {
    Tensor t = orthogonal_init(64, 8, seed);
    return std::vector<double>(t.data().begin(), t.data().end());
  };
  EXPECT_EQ(values(3), values(3));
  EXPECT_NE(values(3), values(4));
}

TEST(OrthoInit, WideMatrixHasOrthonormalRows) {
  Tensor q = orthogonal_init(4, 10, 2);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < 10; ++k) d += q.at(i, k) * q.at(j, k);
      EXPECT_NEAR(d, i == j ? 1.0 : 0.0, 1e-12);
    }
}

TEST(Config, JsonRoundTripAndDefaults) {
  Json j = {{"balancing", {{"strategy", "simbal"}}}, {"schedule", {{"total_steps", 200}}}};
  TrainRunConfig run = train_config_from_json(j);
  EXPECT_TRUE(run.model.orthogonal_router_init);
  EXPECT_EQ(run.schedule.warmup_steps, 10u);
  EXPECT_EQ(run.balancing.simbal_coeff, 0.1);
  TrainRunConfig again = train_config_from_json(to_json(run));
  EXPECT_EQ(to_json(again).dump(), to_json(run).dump());
  EXPECT_EQ(config_hash(to_json(again)), config_hash(to_json(run)));
  EXPECT_THROW(train_config_from_json(Json{{"balancing", {{"stratgy", "lbl"}}}}), ConfigError);
  EXPECT_THROW(train_config_from_json(Json{{"model", {{"top_a", 99}}}}), ConfigError);
}

TEST(Checkpoint, RoundTripRestoresEverything) {
  const fs::path dir = scratch("ckpt");
  TrainRunConfig run = tiny_run();
  Model a(run.model, 7);
  a.blocks()[1].router.lf_bias[2] = 0.125;
  std::vector<ParamSlot> slots;
  for (const NamedTensor& p : a.parameters()) slots.push_back({p.name, p.tensor, p.decay});
  AdamW opt(slots, {});
  opt.first_moment(3)[0] = 0.5;
  opt.set_steps(9);
  save_checkpoint(dir, a, &opt, CheckpointMeta{to_json(run), 12, 345, {2, 5}, "state"});

  Model b(run.model, 8);
  load_model_state(dir, b);
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].tensor.data()[0], pb[i].tensor.data()[0]) << pa[i].name;
  EXPECT_EQ(b.blocks()[1].router.lf_bias[2], 0.125);
  std::vector<ParamSlot> slots_b;
  for (const NamedTensor& p : b.parameters()) slots_b.push_back({p.name, p.tensor, p.decay});
  AdamW opt_b(slots_b, {});
  load_optimizer_state(dir, opt_b);
  EXPECT_EQ(opt_b.steps(), 9u);
  EXPECT_EQ(opt_b.first_moment(3)[0], 0.5);
  CheckpointMeta meta = read_checkpoint_meta(dir);
  EXPECT_EQ(meta.step, 12u);
  EXPECT_EQ(meta.data.cursor, 5u);
  fs::remove_all(dir);
}

TEST(Train, OverfitsSingleBatch) {
  TrainRunConfig run = tiny_run(Strategy::kNone);
  run.schedule = ScheduleConfig::with_default_warmup(1e-2, 51);
  // Exactly one batch worth of windows.
  Corpus c = Corpus::from_tokens(make_skewed_synthetic(run.batch_size * (run.seq_len + 1) + 2000, 2, 1), 0.5);
  std::vector<std::uint32_t> one(c.train().begin(), c.train().begin() + run.batch_size * (run.seq_len + 1));
  std::vector<std::uint32_t> all = one;
  all.insert(all.end(), c.validation().begin(), c.validation().end());
  Corpus corpus(all, one.size());
  TrainResult r = train(run, corpus, {.skip_eval = true});
  ASSERT_FALSE(r.failed) << r.failure;
  ASSERT_EQ(r.log.size(), 51u);
  EXPECT_LT(r.log[50].loss.ce, r.log[0].loss.ce);
}

TEST(Train, DeterministicCsv) {
  TrainRunConfig run = tiny_run(Strategy::kLfSimbal);
  run.checkpoint_every = 10;
  Corpus corpus = load_corpus(run.data, run.seed);
  const fs::path d1 = scratch("det1"), d2 = scratch("det2");
  train(run, corpus, {.run_dir = d1});
  train(run, corpus, {.run_dir = d2});
  EXPECT_EQ(slurp(d1 / "metrics.csv"), slurp(d2 / "metrics.csv"));
  EXPECT_EQ(slurp(d1 / "eval.csv"), slurp(d2 / "eval.csv"));
  EXPECT_NE(slurp(d1 / "metrics.csv").find("# config_hash="), std::string::npos);
  EXPECT_EQ(list_checkpoints(d1).size(), 3u);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Train, ResumeMatchesUninterrupted) {
  TrainRunConfig run = tiny_run(Strategy::kLfLbl);
  run.checkpoint_every = 10;
  Corpus corpus = load_corpus(run.data, run.seed);
  const fs::path d1 = scratch("full"), d2 = scratch("resumed");
  TrainResult full = train(run, corpus, {.run_dir = d1, .skip_eval = true});
  TrainResult resumed = train(run, corpus, {.run_dir = d2, .resume_from = d1 / "checkpoints" / "step_000010", .skip_eval = true});
  ASSERT_EQ(resumed.log.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(resumed.log[i].step, full.log[10 + i].step);
    EXPECT_NEAR(resumed.log[i].loss.total_value, full.log[10 + i].loss.total_value, 1e-10);
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Train, SimBalStartsOrthogonalAndSettles) {
  TrainRunConfig run;
  run.balancing.strategy = Strategy::kSimbal;
  run.model.orthogonal_router_init = true;
  run.schedule = ScheduleConfig::with_default_warmup(3e-3, 300);
  Corpus corpus = load_corpus(run.data, run.seed);
  TrainResult r = train(run, corpus, {.skip_eval = true});
  ASSERT_EQ(r.log.size(), 300u);
  EXPECT_LT(r.log[0].loss.simbal, 1e-8);
  for (std::size_t i = 270; i < 300; ++i) EXPECT_LT(r.log[i].loss.simbal, 1e-2) << "step " << i;
}

TEST(Train, LfBiasMovesByGammaPerStep) {
  TrainRunConfig run = tiny_run(Strategy::kLf);
  run.balancing.gamma = 0.01;
  Corpus corpus = load_corpus(run.data, run.seed);
  TrainResult r = train(run, corpus, {.stop_after = 3, .skip_eval = true});
  for (const MoeBlock& b : r.model.blocks()) {
    for (double v : b.router.lf_bias) {
      const double units = v / 0.01;
      EXPECT_NEAR(units, std::round(units), 1e-9);
      EXPECT_LE(std::fabs(units), 3.0 + 1e-9);
    }
  }
}

}  // namespace
