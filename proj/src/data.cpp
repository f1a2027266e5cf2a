// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include "simbal/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "simbal/error.hpp"
#include "simbal/rng.hpp"

namespace simbal {

namespace {

constexpr std::uint32_t kSyntheticBase = 33;
constexpr std::size_t kSyntheticSpan = 220;

std::size_t alphabet_size(std::size_t modes) { return std::min<std::size_t>(8, kSyntheticSpan / modes); }

std::vector<std::uint32_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return tokenize_bytes(bytes);
}

}  // namespace

std::vector<std::uint32_t> tokenize_bytes(std::string_view text) {
  std::vector<std::uint32_t> ids(text.size());
  std::transform(text.begin(), text.end(), ids.begin(),
                 [](char c) { return static_cast<std::uint32_t>(static_cast<unsigned char>(c)); });
  return ids;
}

std::string detokenize_bytes(std::span<const std::uint32_t> ids) {
  std::string out(ids.size(), '\0');
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= kByteVocab) throw DataError("token id " + std::to_string(ids[i]) + " is not a byte");
    out[i] = static_cast<char>(static_cast<unsigned char>(ids[i]));
  }
  return out;
}

Corpus::Corpus(std::vector<std::uint32_t> tokens, std::size_t split)
    : tokens_(std::move(tokens)), split_(split) {
  if (split_ > tokens_.size()) throw DataError("corpus split beyond end of data");
}

Corpus Corpus::from_tokens(std::vector<std::uint32_t> tokens, double validation_fraction) {
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in [0, 1)");
  }
  const auto split = static_cast<std::size_t>(
      std::floor(static_cast<double>(tokens.size()) * (1.0 - validation_fraction)));
  return Corpus(std::move(tokens), split);
}

Corpus Corpus::load(const std::string& path, double validation_fraction) {
  const std::filesystem::path p(path);
  if (p.extension() != ".json") return from_tokens(read_bytes(p), validation_fraction);

  std::ifstream in(p);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest '" + path + "': " + e.what());
  }
  if (!manifest.contains("shards") || !manifest["shards"].is_array() || manifest["shards"].empty()) {
    throw DataError("manifest '" + path + "' needs a non-empty \"shards\" array");
  }
  std::vector<std::vector<std::uint32_t>> shards;
  for (const auto& s : manifest["shards"]) shards.push_back(read_bytes(p.parent_path() / s.get<std::string>()));
  if (shards.size() == 1) return from_tokens(std::move(shards[0]), validation_fraction);
  std::vector<std::uint32_t> all;
  for (std::size_t i = 0; i + 1 < shards.size(); ++i) all.insert(all.end(), shards[i].begin(), shards[i].end());
  const std::size_t split = all.size();
  all.insert(all.end(), shards.back().begin(), shards.back().end());
  return Corpus(std::move(all), split);
}

std::span<const std::uint32_t> Corpus::train() const {
  return std::span<const std::uint32_t>(tokens_).first(split_);
}

std::span<const std::uint32_t> Corpus::validation() const {
  return std::span<const std::uint32_t>(tokens_).subspan(split_);
}

BatchStream::BatchStream(std::span<const std::uint32_t> tokens, std::size_t batch,
                         std::size_t seq_len, std::uint64_t seed)
    : tokens_(tokens), batch_(batch), seq_len_(seq_len), windows_(0), seed_(seed) {
  if (batch == 0 || seq_len == 0) throw ConfigError("batch size and sequence length must be positive");
  windows_ = tokens.size() / (seq_len + 1);
  if (windows_ < batch) {
    throw DataError("corpus too small: " + std::to_string(tokens.size()) + " tokens give " +
                    std::to_string(windows_) + " windows of " + std::to_string(seq_len + 1) +
                    ", need at least " + std::to_string(batch));
  }
  shuffle();
}

void BatchStream::shuffle() {
  order_.resize(windows_);
  for (std::size_t i = 0; i < windows_; ++i) order_[i] = i;
  Rng rng(Rng::derive(seed_, pos_.epoch));
  for (std::size_t i = windows_; i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
}

void BatchStream::seek(Position pos) {
  if (pos.cursor > windows_) throw DataError("batch stream position beyond epoch end");
  pos_ = pos;
  shuffle();
}

Batch BatchStream::next() {
  Batch b;
  b.n_seqs = batch_;
  b.seq_len = seq_len_;
  b.inputs.reserve(batch_ * seq_len_);
  b.targets.reserve(batch_ * seq_len_);
  for (std::size_t i = 0; i < batch_; ++i) {
    if (pos_.cursor == windows_) {
      ++pos_.epoch;
      pos_.cursor = 0;
      shuffle();
    }
    const std::size_t start = order_[pos_.cursor++] * (seq_len_ + 1);
    b.inputs.insert(b.inputs.end(), tokens_.begin() + start, tokens_.begin() + start + seq_len_);
    b.targets.insert(b.targets.end(), tokens_.begin() + start + 1, tokens_.begin() + start + seq_len_ + 1);
  }
  return b;
}

std::vector<Batch> sequential_batches(std::span<const std::uint32_t> tokens, std::size_t batch,
                                      std::size_t seq_len, std::size_t max_batches) {
  if (batch == 0 || seq_len == 0) throw ConfigError("batch size and sequence length must be positive");
  const std::size_t windows = tokens.size() / (seq_len + 1);
  std::size_t n = windows / batch;
  if (max_batches > 0) n = std::min(n, max_batches);
  if (n == 0) throw DataError("evaluation data smaller than one batch");
  std::vector<Batch> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Batch& b = out[k];
    b.n_seqs = batch;
    b.seq_len = seq_len;
    for (std::size_t i = 0; i < batch; ++i) {
      const std::size_t start = (k * batch + i) * (seq_len + 1);
      b.inputs.insert(b.inputs.end(), tokens.begin() + start, tokens.begin() + start + seq_len);
      b.targets.insert(b.targets.end(), tokens.begin() + start + 1, tokens.begin() + start + seq_len + 1);
    }
  }
  return out;
}

std::vector<std::uint32_t> make_skewed_synthetic(std::size_t n_tokens, std::size_t modes,
                                                 std::uint64_t seed) {
  if (modes < 2) throw ConfigError("synthetic corpus needs at least 2 modes");
  if (modes > kSyntheticSpan) throw ConfigError("too many synthetic modes");
  const std::size_t alpha = alphabet_size(modes);
  Rng rng(seed);

  // A handful of fixed words per family.
  constexpr std::size_t kWords = 4;
  std::vector<std::vector<std::vector<std::uint32_t>>> words(modes);
  for (std::size_t m = 0; m < modes; ++m) {
    const auto base = static_cast<std::uint32_t>(kSyntheticBase + m * alpha);
    for (std::size_t w = 0; w < kWords; ++w) {
      std::vector<std::uint32_t> word(3 + rng.below(5));
      for (auto& c : word) c = base + static_cast<std::uint32_t>(rng.below(alpha));
      words[m].push_back(std::move(word));
    }
  }
  std::vector<double> cumulative(modes);
  double total = 0.0;
  for (std::size_t m = 0; m < modes; ++m) cumulative[m] = (total += std::ldexp(1.0, -static_cast<int>(m)));

  std::vector<std::uint32_t> out;
  out.reserve(n_tokens);
  while (out.size() < n_tokens) {
    const double u = rng.uniform() * total;
    const std::size_t m = static_cast<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    const std::size_t segment = 32 + rng.below(97);
    for (std::size_t k = 0; k < segment && out.size() < n_tokens;) {
      const auto& word = words[std::min(m, modes - 1)][rng.below(kWords)];
      for (std::size_t i = 0; i < word.size() && out.size() < n_tokens; ++i, ++k) out.push_back(word[i]);
    }
  }
  return out;
}

std::size_t synthetic_family(std::uint32_t token, std::size_t modes) {
  if (modes < 2 || token < kSyntheticBase) throw DataError("token is not from a synthetic corpus");
  const std::size_t family = (token - kSyntheticBase) / alphabet_size(modes);
  if (family >= modes) throw DataError("token is not from a synthetic corpus");
  return family;
}

}  // namespace simbal
