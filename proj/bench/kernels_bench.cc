// Copyright 2026 The M3PC Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Parallel kernels vs their serial references.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "m3pc/kernels.h"

namespace m3pc::kernels {
namespace {

std::vector<double> Random(size_t n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

template <bool kParallel>
void BM_Gemm(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  const int k = static_cast<int>(state.range(2));
  auto a = Random(size_t(m) * k);
  auto b = Random(size_t(k) * n);
  std::vector<double> c(size_t(m) * n);
  for (auto _ : state) {
    if constexpr (kParallel) {
      Gemm(Trans::kNo, Trans::kNo, m, n, k, a.data(), b.data(), c.data(),
           false);
    } else {
      reference::Gemm(Trans::kNo, Trans::kNo, m, n, k, a.data(), b.data(),
                      c.data(), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(
      2.0 * m * n * k, benchmark::Counter::kIsIterationInvariantRate,
      benchmark::Counter::kIs1000);
}

// token-batch shapes seen in training: (batch * tokens) x width
BENCHMARK(BM_Gemm<true>)->Args({1024, 96, 32})->Args({2048, 128, 32})
    ->Args({1024, 32, 128});
BENCHMARK(BM_Gemm<false>)->Args({1024, 96, 32})->Args({2048, 128, 32})
    ->Args({1024, 32, 128});

template <bool kParallel>
void BM_Softmax(benchmark::State& state) {
  const int64_t rows = state.range(0);
  const int cols = 32;
  auto x = Random(size_t(rows) * cols);
  std::vector<double> y(x.size());
  for (auto _ : state) {
    if constexpr (kParallel) {
      SoftmaxRows(rows, cols, x.data(), y.data(), nullptr, 1);
    } else {
      reference::SoftmaxRows(rows, cols, x.data(), y.data(), nullptr, 1);
    }
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Softmax<true>)->Arg(4096)->Arg(32768);
BENCHMARK(BM_Softmax<false>)->Arg(4096)->Arg(32768);

template <bool kParallel>
void BM_LayerNorm(benchmark::State& state) {
  const int64_t rows = state.range(0);
  const int cols = 32;
  auto x = Random(size_t(rows) * cols);
  std::vector<double> gamma(cols, 1.0), beta(cols, 0.0), y(x.size());
  std::vector<double> mean(rows), rstd(rows);
  for (auto _ : state) {
    if constexpr (kParallel) {
      LayerNormRows(rows, cols, x.data(), gamma.data(), beta.data(), 1e-5,
                    y.data(), mean.data(), rstd.data());
    } else {
      reference::LayerNormRows(rows, cols, x.data(), gamma.data(),
                               beta.data(), 1e-5, y.data(), mean.data(),
                               rstd.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_LayerNorm<true>)->Arg(8192);
BENCHMARK(BM_LayerNorm<false>)->Arg(8192);

template <bool kParallel>
void BM_Gelu(benchmark::State& state) {
  const int64_t n = state.range(0);
  auto x = Random(size_t(n));
  std::vector<double> y(x.size());
  for (auto _ : state) {
    if constexpr (kParallel) {
      Gelu(n, x.data(), y.data());
    } else {
      reference::Gelu(n, x.data(), y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Gelu<true>)->Arg(1 << 17);
BENCHMARK(BM_Gelu<false>)->Arg(1 << 17);

}  // namespace
}  // namespace m3pc::kernels

BENCHMARK_MAIN();
