// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include "simbal/schedule.hpp"

#include <cmath>
#include <numbers>

#include "simbal/error.hpp"

namespace simbal {

void ScheduleConfig::validate() const {
  if (!(peak_lr > 0.0)) throw ConfigError("schedule: peak_lr must be positive");
  if (total_steps == 0) throw ConfigError("schedule: total_steps must be positive");
  if (warmup_steps >= total_steps) throw ConfigError("schedule: warmup_steps must be below total_steps");
  if (!(floor_fraction >= 0.0 && floor_fraction <= 1.0)) {
    throw ConfigError("schedule: floor_fraction must lie in [0, 1]");
  }
}

ScheduleConfig ScheduleConfig::with_default_warmup(double peak_lr, std::size_t total_steps) {
  ScheduleConfig s;
  s.peak_lr = peak_lr;
  s.total_steps = total_steps;
  s.warmup_steps = total_steps < 2000 * 20 ? total_steps / 20 : 2000;
  return s;
}

double lr_at(std::size_t step, const ScheduleConfig& s) {
  const double floor = s.floor_fraction * s.peak_lr;
  if (step >= s.total_steps) return floor;
  if (step < s.warmup_steps) {
    return floor + (s.peak_lr - floor) * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  }
  const double progress = static_cast<double>(step - s.warmup_steps) /
                          static_cast<double>(s.total_steps - s.warmup_steps);
  return floor + (s.peak_lr - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace simbal
