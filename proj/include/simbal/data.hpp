// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace simbal {

constexpr std::size_t kByteVocab = 256;

std::vector<std::uint32_t> tokenize_bytes(std::string_view text);
std::string detokenize_bytes(std::span<const std::uint32_t> ids);

struct Batch {
  std::size_t n_seqs = 0;
  std::size_t seq_len = 0;
  std::vector<std::uint32_t> inputs;   // [n_seqs * seq_len]
  std::vector<std::uint32_t> targets;  // inputs shifted by one
};

class Corpus {
 public:
  Corpus() = default;
  // Training tokens are [0, split); validation tokens are [split, end).
  Corpus(std::vector<std::uint32_t> tokens, std::size_t split);

  // Splits at floor(n * (1 - validation_fraction)).
  static Corpus from_tokens(std::vector<std::uint32_t> tokens, double validation_fraction);
  // A plain file is split by fraction. A ".json" manifest {"shards": [...]}
  // lists files in order (paths relative to the manifest); its last shard is
  // held out for validation.
  static Corpus load(const std::string& path, double validation_fraction);

  std::span<const std::uint32_t> train() const;
  std::span<const std::uint32_t> validation() const;
  std::size_t size() const { return tokens_.size(); }
  std::size_t split() const { return split_; }

 private:
  std::vector<std::uint32_t> tokens_;
  std::size_t split_ = 0;
};

// Non-overlapping windows of seq_len + 1 tokens, visited in a seeded order
// that is reshuffled every epoch.
class BatchStream {
 public:
  struct Position {
    std::uint64_t epoch = 0;
    std::size_t cursor = 0;
  };

  BatchStream(std::span<const std::uint32_t> tokens, std::size_t batch, std::size_t seq_len,
              std::uint64_t seed);

  Batch next();
  std::size_t windows_per_epoch() const { return windows_; }
  Position position() const { return pos_; }
  void seek(Position pos);

 private:
  void shuffle();

  std::span<const std::uint32_t> tokens_;
  std::size_t batch_, seq_len_, windows_;
  std::uint64_t seed_;
  Position pos_;
  std::vector<std::size_t> order_;
};

// Consecutive windows from the start of tokens, at most max_batches batches
// (0 = all full batches).
std::vector<Batch> sequential_batches(std::span<const std::uint32_t> tokens, std::size_t batch,
                                      std::size_t seq_len, std::size_t max_batches = 0);

// Text built from `modes` families of repeated byte patterns. Each family has
// its own alphabet; families are drawn with geometrically decaying frequency.
std::vector<std::uint32_t> make_skewed_synthetic(std::size_t n_tokens, std::size_t modes,
                                                 std::uint64_t seed);

// Index of the pattern family a synthetic token belongs to.
std::size_t synthetic_family(std::uint32_t token, std::size_t modes);

}  // namespace simbal
