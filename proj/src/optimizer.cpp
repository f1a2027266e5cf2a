// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include "simbal/optimizer.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>

#include "simbal/error.hpp"

namespace simbal {

double round_bf16(double v) {
  const auto f = static_cast<float>(v);
  if (!std::isfinite(f)) return f;
  std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
  bits += 0x7FFFu + ((bits >> 16) & 1u);
  bits &= 0xFFFF0000u;
  return static_cast<double>(std::bit_cast<float>(bits));
}

AdamW::AdamW(std::vector<ParamSlot> params, const AdamWConfig& config)
    : params_(std::move(params)), config_(config) {
  for (const ParamSlot& p : params_) {
    if (!p.tensor.requires_grad()) throw ConfigError("AdamW: parameter '" + p.name + "' has no gradient");
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

double AdamW::grad_norm() const {
  double s = 0.0;
  for (const ParamSlot& p : params_)
    for (double g : p.tensor.grad()) s += g * g;
  return std::sqrt(s);
}

void AdamW::zero_grad() {
  for (ParamSlot& p : params_) p.tensor.zero_grad();
}

void AdamW::step(double lr) {
  for (const ParamSlot& p : params_) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("AdamW: non-finite gradient in '" + p.name + "'");
    }
  }
  double clip = 1.0;
  if (config_.grad_clip > 0.0) {
    const double norm = grad_norm();
    if (norm > config_.grad_clip) clip = config_.grad_clip / norm;
  }
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ParamSlot& p = params_[i];
    std::span<double> w = p.tensor.mutable_data();
    const auto& grad = p.tensor.grad();
    const double decay = p.decay ? lr * config_.weight_decay : 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = grad[k] * clip;
      m_[i][k] = b1 * m_[i][k] + (1.0 - b1) * g;
      v_[i][k] = b2 * v_[i][k] + (1.0 - b2) * g * g;
      const double mh = m_[i][k] / c1, vh = v_[i][k] / c2;
      double x = w[k] - decay * w[k];
      x -= lr * mh / (std::sqrt(vh) + config_.eps);
      w[k] = config_.bf16_params ? round_bf16(x) : x;
    }
  }
}

}  // namespace simbal
