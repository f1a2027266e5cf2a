// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include "simbal/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "simbal/error.hpp"

namespace simbal {

namespace {

double evaluate(const ScalarFn& f) {
  Graph g(false);
  return f(g).item();
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, std::span<Tensor> params,
                           const GradCheckOptions& options) {
  std::vector<bool> had_grad;
  for (Tensor& p : params) {
    had_grad.push_back(p.requires_grad());
    p.set_requires_grad(true);
  }

  std::vector<std::vector<double>> tape;
  {
    Graph g;
    Tensor loss = f(g);
    g.backward(loss);
    for (Tensor& p : params) tape.emplace_back(p.grad().begin(), p.grad().end());
  }

  GradCheckReport report;
  const double eps = options.epsilon;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = params[t];
    const std::size_t n = p.size();
    const std::size_t stride =
        options.max_entries == 0 || n <= options.max_entries ? 1 : n / options.max_entries;
    for (std::size_t i = 0; i < n; i += stride) {
      const double original = p.data()[i];
      double plus = 0.0, minus = 0.0;
      try {
        p.mutable_data()[i] = original + eps;
        plus = evaluate(f);
        p.mutable_data()[i] = original - eps;
        minus = evaluate(f);
      } catch (const NumericError& e) {
        p.mutable_data()[i] = original;
        throw NumericError(std::string("grad_check: ") + e.what() + " (perturbing tensor " +
                           std::to_string(t) + " index " + std::to_string(i) + ")");
      }
      p.mutable_data()[i] = original;

      const double numeric = (plus - minus) / (2.0 * eps);
      const double analytic = tape[t][i];
      const double abs_err = std::fabs(numeric - analytic);
      const double scale = std::max(std::fabs(numeric), std::fabs(analytic));
      const double rel_err = abs_err <= options.abs_tol ? 0.0 : abs_err / scale;
      ++report.checked;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel_err > report.max_rel_error) {
        report.max_rel_error = rel_err;
        report.worst = std::to_string(t) + "[" + std::to_string(i) + "]";
      }
      if (abs_err > options.abs_tol && rel_err > options.rel_tol) ++report.failures;
    }
  }

  for (std::size_t t = 0; t < params.size(); ++t) {
    params[t].zero_grad();
    if (!had_grad[t]) params[t].set_requires_grad(false);
  }
  return report;
}

}  // namespace simbal
