// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "simbal/experiments.hpp"

namespace simbal {

// One experiment invocation as read from a JSON config file. Which fields
// apply depends on the kind; see README.md for the schema.
struct ExperimentConfig {
  std::string kind;
  std::filesystem::path out_dir = "runs";
  std::vector<std::uint64_t> seeds{0};
  TrainRunConfig run;
  BenchOrthoConfig bench;
  std::vector<Strategy> strategies{Strategy::kNone, Strategy::kLbl, Strategy::kSimbal};
  std::vector<double> coefficients{1.0, 0.1, 0.01};
  // Run directory or checkpoint directory analysed by drop-experts,
  // prune-eval, pes-series and (optionally) flops.
  std::filesystem::path source;
  // Empty means every k from 0 to n_experts - top_a.
  std::vector<std::size_t> k_list;
  std::vector<double> thresholds{0.0, 0.1, 0.15, 0.2};
  std::size_t eval_batches = 16;
  double active_params = 0.0;
  double embed_params = 0.0;
  double tokens = 0.0;
  // The config as given, hashed into every output.
  Json raw;
};

const std::vector<std::string>& experiment_kinds();

// Throws ConfigError on unknown kinds, unknown keys or bad values.
ExperimentConfig experiment_from_json(const std::string& kind, const Json& j);

// Runs the experiment and writes CSV and JSON outputs into cfg.out_dir.
// Returns the process exit code: 0 on success, 1 when any run failed.
int run_experiment(const ExperimentConfig& cfg, std::ostream& log);

// A checkpoint directory, or the latest checkpoint of a run directory.
std::filesystem::path resolve_checkpoint(const std::filesystem::path& source);

}  // namespace simbal
