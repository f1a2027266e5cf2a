// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "simbal/config_io.hpp"
#include "simbal/data.hpp"
#include "simbal/model.hpp"
#include "simbal/trainer.hpp"

namespace simbal {

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // nan with fewer than two values
  std::size_t n = 0;
};

Summary summarize(const std::vector<double>& values);

// Named measurements per row label, each with one value per trial.
class ResultTable {
 public:
  void add(const std::string& label, const std::string& metric, double value);
  const std::vector<double>& values(const std::string& label, const std::string& metric) const;
  Summary summary(const std::string& label, const std::string& metric) const;
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<std::string>& metrics() const { return metrics_; }

  // label, metric, mean, stddev, n
  void write_summary_csv(const std::filesystem::path& path, const std::string& provenance) const;
  // label, metric, trial, value
  void write_trials_csv(const std::filesystem::path& path, const std::string& provenance) const;
  Json to_json() const;

 private:
  std::vector<std::string> labels_, metrics_;
  std::map<std::pair<std::string, std::string>, std::vector<double>> cells_;
};

// --- orthogonalization microbenchmark ---

enum class Precision { kF64, kBf16 };

struct BenchOrthoConfig {
  std::size_t rows = 1536;
  std::size_t cols = 32;
  std::size_t trials = 20;
  std::size_t steps = 100;
  double lr_start = 1e-4;
  double lr_end = 1e-5;
  Precision precision = Precision::kBf16;
  // Trained starts from the orthogonal initializer, or from a Gaussian draw.
  bool start_orthogonal = true;
  // Also run SimBal steps followed by a QR retraction after every step.
  bool include_qr_retract = false;
  std::uint64_t seed = 0;
};

Json to_json(const BenchOrthoConfig& c);
BenchOrthoConfig bench_ortho_from_json(const Json& j);

// Rows "Trained", "OrthoInit", "RandomInit" (and "QRRetract"); metrics
// "max_dev" and "l1_dist".
ResultTable bench_orthogonality(const BenchOrthoConfig& cfg);

// --- training comparisons ---

struct RunOutcome {
  std::string strategy;
  std::uint64_t seed = 0;
  double coefficient = 0.0;
  std::filesystem::path dir;
  bool failed = false;
  std::string failure;
  TrainResult result;
};

struct ComparisonResult {
  ResultTable table;
  std::vector<RunOutcome> runs;
  // Tokens each label needs to reach the loss the slowest label finishes at.
  std::map<std::string, double> tokens_to_target;
  double target_loss = 0.0;
  std::size_t failed_runs = 0;
};

// Trains base with each strategy and seed under out_dir/<strategy>/seed_<n>.
// Table metrics: perplexity, min_pes, mean_seu, gram_mse, min_unique_experts,
// early_pes_rate (when checkpoints exist).
ComparisonResult run_comparison(const TrainRunConfig& base, const std::vector<Strategy>& strategies,
                                const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_dir);

// SimBal at each coefficient; labels are "coeff=<value>".
ComparisonResult coefficient_sweep(const TrainRunConfig& base, const std::vector<double>& coefficients,
                                   const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_dir);

// Largest mean-perplexity gap between coefficients, and the mean seed stddev.
std::pair<double, double> sweep_gap(const ComparisonResult& sweep);

// --- model analyses ---

struct DropPoint {
  std::size_t k = 0;
  double perplexity = 0.0;
  std::vector<std::vector<std::uint32_t>> dropped;  // per layer
};

// Masks each layer's k most frequently selected experts (measured on the
// same batches) and re-evaluates.
std::vector<DropPoint> drop_top_experts(const Model& model, const std::vector<std::size_t>& k_list,
                                        const std::vector<Batch>& batches);

struct PrunePoint {
  double threshold = 0.0;
  double perplexity = 0.0;
  std::size_t expert_evaluations = 0;
  double seconds = 0.0;
};

std::vector<PrunePoint> prune_eval(const Model& model, const std::vector<double>& thresholds,
                                   const std::vector<Batch>& batches);

struct PesSeries {
  std::vector<std::size_t> steps;
  std::vector<std::vector<double>> pes;   // [checkpoint][layer]
  std::vector<std::vector<double>> rate;  // [checkpoint - 1][layer], per step
  std::vector<double> min_pes;
  std::vector<double> min_pes_rate;
  std::vector<double> mean_rate;          // layer-averaged rate
};

// PES of every checkpoint in a run directory on the run's own validation
// batches.
PesSeries pes_over_checkpoints(const std::filesystem::path& run_dir);
PesSeries pes_series_from_values(std::vector<std::size_t> steps, std::vector<std::vector<double>> pes);
// Mean of the layer-averaged rate over the first quarter of the series.
double early_pes_rate(const PesSeries& s);

double estimate_flops(double active_params, double embed_params, double tokens);

// Evaluation batches a run uses: validation windows of the run's corpus.
std::vector<Batch> eval_batches_for(const TrainRunConfig& run, std::size_t max_batches);

}  // namespace simbal
