// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "simbal/config_io.hpp"
#include "simbal/data.hpp"
#include "simbal/model.hpp"
#include "simbal/optimizer.hpp"

namespace simbal {

// A checkpoint directory holds manifest.json plus one raw little-endian
// float64 file per named tensor under params/ (and optim/ for Adam moments).
struct CheckpointMeta {
  Json config;  // full run config
  std::size_t step = 0;
  std::size_t tokens_seen = 0;
  BatchStream::Position data;
  std::string rng_state;
};

void save_checkpoint(const std::filesystem::path& dir, const Model& model, const AdamW* optimizer,
                     const CheckpointMeta& meta);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir);

// Restores parameters and selection biases into a model of the same shape.
void load_model_state(const std::filesystem::path& dir, Model& model);
void load_optimizer_state(const std::filesystem::path& dir, AdamW& optimizer);

// Builds the model described by the manifest and restores its state.
Model load_model(const std::filesystem::path& dir);

// Checkpoint directories of a run, ordered by step.
std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& run_dir);

void write_f64(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f64(const std::filesystem::path& path, std::size_t expected);

}  // namespace simbal
