// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

#include "simbal/tensor.hpp"

namespace simbal {

// Orthonormal-column matrix [rows, cols] from the thin QR factor of a seeded
// Gaussian draw, with the triangular factor's diagonal made positive so the
// result is a deterministic function of the seed. When rows < cols the
// transpose is built instead, giving orthonormal rows. A rank-deficient draw
// is retried with seed + 1.
Tensor orthogonal_init(std::size_t rows, std::size_t cols, std::uint64_t seed);

// Entries drawn i.i.d. from N(0, stddev^2).
Tensor normal_init(std::size_t rows, std::size_t cols, double stddev, std::uint64_t seed);

// Projects the columns of `m` onto the nearest orthonormal set via QR
// (positive-diagonal convention). Used as a retraction after optimizer steps.
void qr_retract(Tensor& m);

}  // namespace simbal
