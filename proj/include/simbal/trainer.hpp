// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "simbal/balancing.hpp"
#include "simbal/data.hpp"
#include "simbal/metrics.hpp"
#include "simbal/model.hpp"
#include "simbal/optimizer.hpp"
#include "simbal/schedule.hpp"

namespace simbal {

struct DataConfig {
  // A text file or a shard manifest; empty selects the synthetic corpus.
  std::string path;
  std::size_t synthetic_tokens = 200000;
  std::size_t synthetic_modes = 3;
  double validation_fraction = 0.1;
};

struct TrainRunConfig {
  ModelConfig model;
  BalancingSpec balancing;
  ScheduleConfig schedule;
  AdamWConfig optimizer;
  DataConfig data;
  std::uint64_t seed = 0;
  std::size_t batch_size = 8;
  std::size_t seq_len = 32;
  // Routers join weight decay even when SimBal is active.
  bool decay_routers = false;
  // 0 disables; otherwise a checkpoint every n steps plus step 0 and the end.
  std::size_t checkpoint_every = 0;
  // 0 evaluates only at the end.
  std::size_t eval_every = 0;
  std::size_t eval_batches = 8;
  std::size_t pes_batches = 4;

  void validate() const;
};

Corpus load_corpus(const DataConfig& data, std::uint64_t seed);

struct StepLog {
  std::size_t step = 0;
  double lr = 0.0;
  LossParts loss;
  std::size_t tokens_seen = 0;
};

struct TrainOptions {
  // Where config, metrics, evaluations and checkpoints go; empty keeps
  // everything in memory.
  std::filesystem::path run_dir;
  // Checkpoint directory to continue from.
  std::filesystem::path resume_from;
  // Stop after this many steps (0 = schedule total); used to cut runs short.
  std::size_t stop_after = 0;
  // Skip evaluation reports (loss curve only).
  bool skip_eval = false;
};

struct TrainResult {
  bool failed = false;
  std::string failure;
  std::size_t steps_done = 0;
  std::vector<StepLog> log;
  std::vector<MetricsReport> evals;
  std::vector<std::filesystem::path> checkpoints;
  Model model;
  double seconds = 0.0;
};

std::vector<std::string> step_csv_header();
std::vector<std::string> step_csv_row(const StepLog& s);

TrainResult train(const TrainRunConfig& run, const Corpus& corpus, const TrainOptions& options = {});

}  // namespace simbal
