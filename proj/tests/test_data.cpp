// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "simbal/data.hpp"
#include "simbal/error.hpp"
#include "simbal/rng.hpp"

namespace {

using namespace simbal;
namespace fs = std::filesystem;

std::vector<std::uint32_t> iota_tokens(std::size_t n) {
  std::vector<std::uint32_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::uint32_t>(i);
  return v;
}

TEST(Tokenize, Bytes) {
  EXPECT_EQ(tokenize_bytes("AB"), (std::vector<std::uint32_t>{65, 66}));
  EXPECT_TRUE(tokenize_bytes("").empty());
  EXPECT_EQ(tokenize_bytes("\xff")[0], 255u);
}

TEST(Tokenize, RoundTripRandomBlob) {
  Rng rng(1);
  std::string blob(1024, '\0');
  for (char& c : blob) c = static_cast<char>(rng.below(256));
  EXPECT_EQ(detokenize_bytes(tokenize_bytes(blob)), blob);
}

TEST(Corpus, SplitByFraction) {
  Corpus c = Corpus::from_tokens(iota_tokens(100), 0.1);
  EXPECT_EQ(c.train().size(), 90u);
  EXPECT_EQ(c.validation().size(), 10u);
  EXPECT_EQ(c.validation()[0], 90u);
  EXPECT_THROW(Corpus::from_tokens(iota_tokens(10), 1.0), ConfigError);
}

TEST(Corpus, ManifestHoldsOutLastShard) {
  const fs::path dir = fs::temp_directory_path() / "simbal_manifest_test";
  fs::create_directories(dir);
  std::ofstream(dir / "a.txt") << "hello ";
  std::ofstream(dir / "b.txt") << "world";
  std::ofstream(dir / "c.txt") << "!!";
  std::ofstream(dir / "m.json") << R"({"shards": ["a.txt", "b.txt", "c.txt"]})";
  Corpus c = Corpus::load((dir / "m.json").string(), 0.5);
  EXPECT_EQ(detokenize_bytes(c.train()), "hello world");
  EXPECT_EQ(detokenize_bytes(c.validation()), "!!");
  EXPECT_THROW(Corpus::load((dir / "missing.txt").string(), 0.1), DataError);
  fs::remove_all(dir);
}

TEST(Batches, DeterministicForSeed) {
  auto tokens = iota_tokens(1000);
  BatchStream a(tokens, 4, 9, 7), b(tokens, 4, 9, 7), c(tokens, 4, 9, 8);
  bool differs = false;
  for (int i = 0; i < 60; ++i) {
    Batch x = a.next(), y = b.next(), z = c.next();
    EXPECT_EQ(x.inputs, y.inputs);
    differs |= x.inputs != z.inputs;
  }
  EXPECT_TRUE(differs);
}

TEST(Batches, WindowCountAndTargets) {
  auto tokens = iota_tokens(105);
  BatchStream s(tokens, 2, 9, 1);
  EXPECT_EQ(s.windows_per_epoch(), 105u / 10u);
  std::set<std::uint32_t> starts;
  for (int i = 0; i < 5; ++i) {
    Batch b = s.next();
    ASSERT_EQ(b.inputs.size(), 18u);
    for (std::size_t k = 0; k < 18; ++k) EXPECT_EQ(b.targets[k], b.inputs[k] + 1);
    starts.insert(b.inputs[0]);
    starts.insert(b.inputs[9]);
  }
  // One epoch visits every window once.
  EXPECT_EQ(starts.size(), 10u);
  for (std::uint32_t v : starts) EXPECT_EQ(v % 10, 0u);
}

TEST(Batches, NeverReadValidation) {
  Corpus c = Corpus::from_tokens(iota_tokens(200), 0.25);
  BatchStream s(c.train(), 3, 6, 2);
  for (int i = 0; i < 100; ++i) {
    Batch b = s.next();
    for (auto id : b.inputs) EXPECT_LT(id, c.split());
    for (auto id : b.targets) EXPECT_LT(id, c.split());
  }
}

TEST(Batches, SeekReproducesStream) {
  auto tokens = iota_tokens(500);
  BatchStream a(tokens, 3, 7, 4);
  for (int i = 0; i < 23; ++i) a.next();
  BatchStream b(tokens, 3, 7, 4);
  b.seek(a.position());
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next().inputs, b.next().inputs);
}

TEST(Batches, CorpusTooSmall) {
  auto tokens = iota_tokens(20);
  EXPECT_THROW(BatchStream(tokens, 3, 9, 1), DataError);
}

TEST(Batches, SequentialCoverage) {
  auto tokens = iota_tokens(100);
  auto batches = sequential_batches(tokens, 2, 4);
  EXPECT_EQ(batches.size(), 10u);
  EXPECT_EQ(batches[1].inputs[0], 10u);
  EXPECT_EQ(sequential_batches(tokens, 2, 4, 3).size(), 3u);
}

TEST(Synthetic, ExactlyModesFamilies) {
  for (std::size_t modes : {2u, 3u, 5u}) {
    auto t = make_skewed_synthetic(20000, modes, 9);
    EXPECT_EQ(t.size(), 20000u);
    std::set<std::size_t> families;
    for (auto id : t) families.insert(synthetic_family(id, modes));
    EXPECT_EQ(families.size(), modes);
  }
}

TEST(Synthetic, SkewedAndDeterministic) {
  auto a = make_skewed_synthetic(50000, 3, 4), b = make_skewed_synthetic(50000, 3, 4);
  EXPECT_EQ(a, b);
  std::vector<std::size_t> counts(3, 0);
  for (auto id : a) ++counts[synthetic_family(id, 3)];
  EXPECT_GT(counts[0], counts[1]);
  EXPECT_GT(counts[1], counts[2]);
  EXPECT_THROW(make_skewed_synthetic(10, 1, 0), ConfigError);
}

}  // namespace
