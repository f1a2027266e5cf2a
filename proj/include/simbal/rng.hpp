// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace simbal {

// Seeded generator with portable uniform/normal draws. The standard
// distributions are implementation-defined, so draws are derived directly
// from the mt19937_64 stream to keep runs reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller (no cached second value, so the state is
  // fully described by the engine).
  double normal();

  std::string serialize() const;
  void deserialize(const std::string& state);

  // Child seed derived from (seed, stream) with splitmix64.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
};

}  // namespace simbal
