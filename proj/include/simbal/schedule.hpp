// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

namespace simbal {

struct ScheduleConfig {
  double peak_lr = 3e-3;
  std::size_t warmup_steps = 25;
  std::size_t total_steps = 500;
  double floor_fraction = 0.1;

  void validate() const;
  // Warmup of 2000 steps for long runs, otherwise 5% of the run.
  static ScheduleConfig with_default_warmup(double peak_lr, std::size_t total_steps);
};

// Linear warmup from floor_fraction * peak to peak, then cosine decay to
// floor_fraction * peak at total_steps; clamped to the floor afterwards.
double lr_at(std::size_t step, const ScheduleConfig& sched);

}  // namespace simbal
