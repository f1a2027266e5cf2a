// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "simbal/tensor.hpp"

namespace simbal {

struct GradCheckOptions {
  double epsilon = 1e-5;
  // An entry passes if |tape - numeric| <= abs_tol, or if the relative
  // discrepancy |tape - numeric| / max(|tape|, |numeric|) <= rel_tol.
  double rel_tol = 1e-5;
  double abs_tol = 1e-8;
  // Check at most this many entries per tensor, evenly strided (0 = all).
  std::size_t max_entries = 0;
};

struct GradCheckReport {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::string worst;  // "<tensor #>[<index>]" of the largest relative error
  bool passed() const { return failures == 0; }
};

// Builds a scalar-valued graph from the current parameter values.
using ScalarFn = std::function<Tensor(Graph&)>;

// Compares reverse-mode gradients of f with respect to each tensor in params
// against central finite differences. Parameter values are restored on exit.
// NumericError raised by any op is rethrown with the perturbed location.
GradCheckReport grad_check(const ScalarFn& f, std::span<Tensor> params,
                           const GradCheckOptions& options = {});

inline GradCheckReport grad_check(const ScalarFn& f, Tensor& param,
                                  const GradCheckOptions& options = {}) {
  return grad_check(f, std::span<Tensor>(&param, 1), options);
}

}  // namespace simbal
