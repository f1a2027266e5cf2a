// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

// The OpenMP kernels against the serial reference loops.

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "simbal/kernels.hpp"
#include "simbal/rng.hpp"

namespace {

using namespace simbal;

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i], b[i], tol * std::max(1.0, std::fabs(b[i]))) << "at " << i;
  }
}

TEST(Kernels, GemmVariantsMatchReference) {
  const std::size_t m = 37, k = 29, n = 41;
  auto a = random_vec(m * k, 1), b = random_vec(k * n, 2);
  std::vector<double> ref(m * n), got(m * n);
  kernels::serial::gemm(m, k, n, a, b, ref, false);
  kernels::omp::gemm(m, k, n, a, b, got, false);
  expect_close(got, ref, 1e-12);

  auto bt = random_vec(n * k, 3);
  kernels::serial::gemm_nt(m, k, n, a, bt, ref, false);
  kernels::omp::gemm_nt(m, k, n, a, bt, got, false);
  expect_close(got, ref, 1e-12);

  auto at = random_vec(k * m, 4);
  kernels::serial::gemm_tn(m, k, n, at, b, ref, true);
  kernels::omp::gemm_tn(m, k, n, at, b, got, true);
  expect_close(got, ref, 1e-12);
}

TEST(Kernels, AccumulateAddsToExisting) {
  std::vector<double> a{1, 2, 3, 4}, b{1, 0, 0, 1}, c{10, 10, 10, 10};
  kernels::omp::gemm(2, 2, 2, a, b, c, true);
  EXPECT_EQ(c, (std::vector<double>{11, 12, 13, 14}));
}

TEST(Kernels, SoftmaxMatchesReference) {
  auto x = random_vec(64 * 33, 5);
  std::vector<double> ref(x.size()), got(x.size());
  kernels::serial::softmax_rows(64, 33, x, ref);
  kernels::omp::softmax_rows(64, 33, x, got);
  expect_close(got, ref, 1e-13);
}

TEST(Kernels, AttentionForwardBackwardMatchReference) {
  const kernels::AttentionDims dims{3, 7, 2, 4};
  const std::size_t n = dims.rows() * dims.width();
  auto q = random_vec(n, 6), k = random_vec(n, 7), v = random_vec(n, 8), dout = random_vec(n, 9);
  std::vector<double> p_ref(dims.prob_size()), p_got(dims.prob_size()), o_ref(n), o_got(n);
  kernels::serial::causal_attention_forward(dims, 0.5, q, k, v, p_ref, o_ref);
  kernels::omp::causal_attention_forward(dims, 0.5, q, k, v, p_got, o_got);
  expect_close(p_got, p_ref, 1e-12);
  expect_close(o_got, o_ref, 1e-12);

  std::vector<double> dq_r(n), dk_r(n), dv_r(n), dq_g(n), dk_g(n), dv_g(n);
  kernels::serial::causal_attention_backward(dims, 0.5, q, k, v, p_ref, dout, dq_r, dk_r, dv_r);
  kernels::omp::causal_attention_backward(dims, 0.5, q, k, v, p_got, dout, dq_g, dk_g, dv_g);
  expect_close(dq_g, dq_r, 1e-12);
  expect_close(dk_g, dk_r, 1e-12);
  expect_close(dv_g, dv_r, 1e-12);
}

TEST(Kernels, ResultsIndependentOfThreadCount) {
  const std::size_t m = 128, k = 96, n = 80;
  auto a = random_vec(m * k, 10), b = random_vec(k * n, 11);
  std::vector<double> one(m * n), many(m * n);
  const int saved = kernels::max_threads();
  kernels::set_threads(1);
  kernels::omp::gemm(m, k, n, a, b, one, false);
  kernels::set_threads(4);
  kernels::omp::gemm(m, k, n, a, b, many, false);
  kernels::set_threads(saved);
  EXPECT_EQ(one, many);
}

}  // namespace
