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

#include <random>
#include <vector>

#include "gtest/gtest.h"
#include "m3pc/kernels.h"

namespace m3pc::kernels {
namespace {

std::vector<double> Random(size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

TEST(Kernels, GemmMatchesReferenceAllLayouts) {
  std::mt19937_64 rng(7);
  for (Trans ta : {Trans::kNo, Trans::kYes}) {
    for (Trans tb : {Trans::kNo, Trans::kYes}) {
      for (int m : {1, 7, 64}) {
        const int n = 33, k = 19;
        auto a = Random(size_t(m) * k, rng);
        auto b = Random(size_t(k) * n, rng);
        auto c0 = Random(size_t(m) * n, rng);
        auto c1 = c0;
        Gemm(ta, tb, m, n, k, a.data(), b.data(), c0.data(), true);
        reference::Gemm(ta, tb, m, n, k, a.data(), b.data(), c1.data(), true);
        for (size_t i = 0; i < c0.size(); ++i) {
          EXPECT_NEAR(c0[i], c1[i], 1e-12);
        }
      }
    }
  }
}

TEST(Kernels, GemmBatchedMatchesLoopedReference) {
  std::mt19937_64 rng(8);
  const int g = 5, m = 6, n = 7, k = 8;
  auto a = Random(size_t(g) * m * k, rng);
  auto b = Random(size_t(g) * n * k, rng);
  std::vector<double> c(size_t(g) * m * n), expected(c.size());
  GemmBatched(g, Trans::kNo, Trans::kYes, m, n, k, a.data(), b.data(),
              c.data(), false);
  for (int i = 0; i < g; ++i) {
    reference::Gemm(Trans::kNo, Trans::kYes, m, n, k, a.data() + i * m * k,
                    b.data() + i * n * k, expected.data() + i * m * n, false);
  }
  for (size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], expected[i], 1e-12);
}

TEST(Kernels, SoftmaxLayerNormGeluMatchReference) {
  std::mt19937_64 rng(9);
  const int rows = 40, cols = 17;
  auto x = Random(size_t(rows) * cols, rng);
  std::vector<unsigned char> vis(size_t(rows / 4) * cols);
  for (size_t i = 0; i < vis.size(); ++i) vis[i] = (i * 7) % 3 != 0;
  std::vector<double> y0(x.size()), y1(x.size());
  SoftmaxRows(rows, cols, x.data(), y0.data(), vis.data(), 4);
  reference::SoftmaxRows(rows, cols, x.data(), y1.data(), vis.data(), 4);
  for (size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y0[i], y1[i], 1e-14);

  auto gamma = Random(cols, rng), beta = Random(cols, rng);
  std::vector<double> m0(rows), r0(rows), m1(rows), r1(rows);
  LayerNormRows(rows, cols, x.data(), gamma.data(), beta.data(), 1e-5,
                y0.data(), m0.data(), r0.data());
  reference::LayerNormRows(rows, cols, x.data(), gamma.data(), beta.data(),
                           1e-5, y1.data(), m1.data(), r1.data());
  for (size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y0[i], y1[i], 1e-12);

  Gelu(int64_t(x.size()), x.data(), y0.data());
  reference::Gelu(int64_t(x.size()), x.data(), y1.data());
  for (size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y0[i], y1[i], 1e-15);
}

}  // namespace
}  // namespace m3pc::kernels
