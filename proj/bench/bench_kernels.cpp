// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "simbal/kernels.hpp"
#include "simbal/rng.hpp"

namespace {

using namespace simbal;

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform() - 0.5;
  return v;
}

template <auto Gemm>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(n, n, n, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <auto Softmax>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), cols = std::size_t{256};
  auto x = random_vec(rows * cols, 3);
  std::vector<double> y(rows * cols);
  for (auto _ : state) {
    Softmax(rows, cols, x, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <auto Forward>
void BM_Attention(benchmark::State& state) {
  kernels::AttentionDims d{8, static_cast<std::size_t>(state.range(0)), 4, 16};
  auto q = random_vec(d.rows() * d.width(), 4), k = random_vec(d.rows() * d.width(), 5),
       v = random_vec(d.rows() * d.width(), 6);
  std::vector<double> probs(d.prob_size()), out(d.rows() * d.width());
  const double scale = 1.0 / std::sqrt(16.0);
  for (auto _ : state) {
    Forward(d, scale, q, k, v, probs, out);
    benchmark::DoNotOptimize(out.data());
  }
}

BENCHMARK(BM_Gemm<kernels::serial::gemm>)->Name("gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<kernels::omp::gemm>)->Name("gemm/omp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<kernels::serial::gemm_tn>)->Name("gemm_tn/serial")->Arg(128);
BENCHMARK(BM_Gemm<kernels::omp::gemm_tn>)->Name("gemm_tn/omp")->Arg(128);
BENCHMARK(BM_Gemm<kernels::serial::gemm_nt>)->Name("gemm_nt/serial")->Arg(128);
BENCHMARK(BM_Gemm<kernels::omp::gemm_nt>)->Name("gemm_nt/omp")->Arg(128);
BENCHMARK(BM_Softmax<kernels::serial::softmax_rows>)->Name("softmax_rows/serial")->Arg(1024);
BENCHMARK(BM_Softmax<kernels::omp::softmax_rows>)->Name("softmax_rows/omp")->Arg(1024);
BENCHMARK(BM_Attention<kernels::serial::causal_attention_forward>)->Name("attention/serial")->Arg(32)->Arg(128);
BENCHMARK(BM_Attention<kernels::omp::causal_attention_forward>)->Name("attention/omp")->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
