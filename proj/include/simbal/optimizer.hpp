// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "simbal/tensor.hpp"

namespace simbal {

// Rounds to the nearest bfloat16 value (ties to even).
double round_bf16(double v);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  // Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;
  // Store parameters as bfloat16 values after every update.
  bool bf16_params = false;
};

struct ParamSlot {
  std::string name;
  Tensor tensor;
  bool decay = true;
};

// Decoupled weight decay Adam: p -= lr * wd * p, then the bias-corrected Adam
// step.
class AdamW {
 public:
  AdamW(std::vector<ParamSlot> params, const AdamWConfig& config);

  // Throws NumericError, leaving every parameter untouched, if any gradient
  // is non-finite.
  void step(double lr);
  void zero_grad();
  double grad_norm() const;

  std::size_t steps() const { return steps_; }
  void set_steps(std::size_t n) { steps_ = n; }
  const AdamWConfig& config() const { return config_; }
  const std::vector<ParamSlot>& params() const { return params_; }
  std::vector<double>& first_moment(std::size_t i) { return m_[i]; }
  std::vector<double>& second_moment(std::size_t i) { return v_[i]; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<ParamSlot> params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

}  // namespace simbal
