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

#include "m3pc/kernels.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace m3pc::kernels {
namespace {

// below this many multiply-adds a parallel region costs more than it saves
constexpr int64_t kParallelWork = 1 << 15;

inline double GeluValue(double x) {
  return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

inline double GeluDerivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) * 0.5 * M_2_SQRTPI * M_SQRT1_2;
  return cdf + x * pdf;
}

// R x W block of C += A B with A row-major (lda) and B row-major (ldb).
// Accumulators live in registers; each output is summed over p in order, so
// a row's result does not depend on which other rows share its block.
template <int R, int W>
inline void MicroKernel(int k, const double* a, int64_t lda, const double* b,
                        int64_t ldb, double* c, int64_t ldc) {
  double acc[R][W] = {};
  for (int p = 0; p < k; ++p) {
    const double* br = b + int64_t(p) * ldb;
    for (int r = 0; r < R; ++r) {
      const double av = a[r * lda + p];
#pragma omp simd
      for (int j = 0; j < W; ++j) acc[r][j] += av * br[j];
    }
  }
  for (int r = 0; r < R; ++r) {
    for (int j = 0; j < W; ++j) c[r * ldc + j] += acc[r][j];
  }
}

template <int R>
inline void RowBlock(int n, int k, const double* a, int64_t lda,
                     const double* b, double* c) {
  int j = 0;
  for (; j + 32 <= n; j += 32) MicroKernel<R, 32>(k, a, lda, b + j, n, c + j, n);
  for (; j + 16 <= n; j += 16) MicroKernel<R, 16>(k, a, lda, b + j, n, c + j, n);
  for (; j + 8 <= n; j += 8) MicroKernel<R, 8>(k, a, lda, b + j, n, c + j, n);
  for (; j < n; ++j) {
    for (int r = 0; r < R; ++r) {
      double sum = 0.0;
      for (int p = 0; p < k; ++p) sum += a[r * lda + p] * b[int64_t(p) * n + j];
      c[r * n + j] += sum;
    }
  }
}

// rows [i0, i1) of C (+)= A B, all row-major and untransposed
inline void GemmRowsNN(int i0, int i1, int n, int k, const double* a,
                       const double* b, double* c) {
  int i = i0;
  for (; i + 4 <= i1; i += 4) {
    RowBlock<4>(n, k, a + int64_t(i) * k, k, b, c + int64_t(i) * n);
  }
  for (; i < i1; ++i) {
    RowBlock<1>(n, k, a + int64_t(i) * k, k, b, c + int64_t(i) * n);
  }
}

// op(X) as a row-major rows x cols matrix, copying only when transposed
const double* Untranspose(Trans trans, int rows, int cols, const double* x,
                          std::vector<double>& scratch) {
  if (trans == Trans::kNo) return x;
  scratch.resize(size_t(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int q = 0; q < cols; ++q) {
      scratch[size_t(r) * cols + q] = x[int64_t(q) * rows + r];
    }
  }
  return scratch.data();
}

}  // namespace

int MaxThreads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void Gemm(Trans trans_a, Trans trans_b, int m, int n, int k, const double* a,
          const double* b, double* c, bool accumulate) {
  std::vector<double> sa, sb;
  const double* pa = Untranspose(trans_a, m, k, a, sa);
  const double* pb = Untranspose(trans_b, k, n, b, sb);
  if (!accumulate) std::fill(c, c + int64_t(m) * n, 0.0);
  const int64_t work = int64_t(m) * n * k;
  const int blocks = (m + 3) / 4;
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (int blk = 0; blk < blocks; ++blk) {
    GemmRowsNN(blk * 4, std::min(m, blk * 4 + 4), n, k, pa, pb, c);
  }
}

void GemmBatched(int batch, Trans trans_a, Trans trans_b, int m, int n, int k,
                 const double* a, const double* b, double* c,
                 bool accumulate) {
  const int64_t a_stride = int64_t(m) * k;
  const int64_t b_stride = int64_t(k) * n;
  const int64_t c_stride = int64_t(m) * n;
  const int64_t work = int64_t(batch) * m * n * k;
#pragma omp parallel if (work > kParallelWork)
  {
    std::vector<double> sa, sb;
#pragma omp for schedule(static)
    for (int bi = 0; bi < batch; ++bi) {
      const double* pa = Untranspose(trans_a, m, k, a + bi * a_stride, sa);
      const double* pb = Untranspose(trans_b, k, n, b + bi * b_stride, sb);
      double* cb = c + bi * c_stride;
      if (!accumulate) std::fill(cb, cb + c_stride, 0.0);
      GemmRowsNN(0, m, n, k, pa, pb, cb);
    }
  }
}

void SoftmaxRows(int64_t rows, int cols, const double* x, double* y,
                 const unsigned char* key_visible, int64_t rows_per_mask) {
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    const unsigned char* vis =
        key_visible ? key_visible + (r / rows_per_mask) * cols : nullptr;
    double max_value = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < cols; ++j) {
      if (!vis || vis[j]) max_value = std::max(max_value, xr[j]);
    }
    if (max_value == -std::numeric_limits<double>::infinity()) {
      std::fill(yr, yr + cols, 0.0);
      continue;
    }
    double total = 0.0;
    for (int j = 0; j < cols; ++j) {
      yr[j] = (!vis || vis[j]) ? std::exp(xr[j] - max_value) : 0.0;
      total += yr[j];
    }
    const double inv = 1.0 / total;
    for (int j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

void SoftmaxRowsBackward(int64_t rows, int cols, const double* y,
                         const double* dy, double* dx) {
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (int64_t r = 0; r < rows; ++r) {
    const double* yr = y + r * cols;
    const double* dyr = dy + r * cols;
    double dot = 0.0;
    for (int j = 0; j < cols; ++j) dot += yr[j] * dyr[j];
    double* dxr = dx + r * cols;
    for (int j = 0; j < cols; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
  }
}

void LayerNormRows(int64_t rows, int cols, const double* x,
                   const double* gamma, const double* beta, double eps,
                   double* y, double* mean, double* rstd) {
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double mu = 0.0;
    for (int j = 0; j < cols; ++j) mu += xr[j];
    mu /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= cols;
    const double inv = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = inv;
    double* yr = y + r * cols;
    for (int j = 0; j < cols; ++j) {
      yr[j] = (xr[j] - mu) * inv * gamma[j] + beta[j];
    }
  }
}

void LayerNormRowsBackward(int64_t rows, int cols, const double* x,
                           const double* gamma, const double* mean,
                           const double* rstd, const double* dy, double* dx,
                           double* dgamma, double* dbeta) {
  // dgamma/dbeta reduce across rows; kept serial for a fixed summation order
  if (dgamma || dbeta) {
    for (int64_t r = 0; r < rows; ++r) {
      const double* xr = x + r * cols;
      const double* dyr = dy + r * cols;
      for (int j = 0; j < cols; ++j) {
        if (dgamma) dgamma[j] += dyr[j] * (xr[j] - mean[r]) * rstd[r];
        if (dbeta) dbeta[j] += dyr[j];
      }
    }
  }
  if (!dx) return;
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    const double* dyr = dy + r * cols;
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double g = dyr[j] * gamma[j];
      const double xhat = (xr[j] - mean[r]) * rstd[r];
      sum_g += g;
      sum_gx += g * xhat;
    }
    double* dxr = dx + r * cols;
    for (int j = 0; j < cols; ++j) {
      const double g = dyr[j] * gamma[j];
      const double xhat = (xr[j] - mean[r]) * rstd[r];
      dxr[j] += rstd[r] * (g - sum_g / cols - xhat * sum_gx / cols);
    }
  }
}

void Gelu(int64_t n, const double* x, double* y) {
#pragma omp parallel for schedule(static) if (n > kParallelWork)
  for (int64_t i = 0; i < n; ++i) y[i] = GeluValue(x[i]);
}

void GeluBackward(int64_t n, const double* x, const double* dy, double* dx) {
#pragma omp parallel for schedule(static) if (n > kParallelWork)
  for (int64_t i = 0; i < n; ++i) dx[i] += dy[i] * GeluDerivative(x[i]);
}

namespace reference {

void Gemm(Trans trans_a, Trans trans_b, int m, int n, int k, const double* a,
          const double* b, double* c, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double sum = 0.0;
      for (int p = 0; p < k; ++p) {
        const double av =
            trans_a == Trans::kNo ? a[int64_t(i) * k + p] : a[int64_t(p) * m + i];
        const double bv =
            trans_b == Trans::kNo ? b[int64_t(p) * n + j] : b[int64_t(j) * k + p];
        sum += av * bv;
      }
      c[int64_t(i) * n + j] = (accumulate ? c[int64_t(i) * n + j] : 0.0) + sum;
    }
  }
}

void SoftmaxRows(int64_t rows, int cols, const double* x, double* y,
                 const unsigned char* key_visible, int64_t rows_per_mask) {
  for (int64_t r = 0; r < rows; ++r) {
    const unsigned char* vis =
        key_visible ? key_visible + (r / rows_per_mask) * cols : nullptr;
    double max_value = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (int j = 0; j < cols; ++j) {
      if (vis && !vis[j]) continue;
      any = true;
      max_value = std::max(max_value, x[r * cols + j]);
    }
    double total = 0.0;
    for (int j = 0; j < cols; ++j) {
      const bool on = any && (!vis || vis[j]);
      y[r * cols + j] = on ? std::exp(x[r * cols + j] - max_value) : 0.0;
      total += y[r * cols + j];
    }
    for (int j = 0; j < cols; ++j) {
      if (total > 0.0) y[r * cols + j] /= total;
    }
  }
}

void LayerNormRows(int64_t rows, int cols, const double* x,
                   const double* gamma, const double* beta, double eps,
                   double* y, double* mean, double* rstd) {
  for (int64_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (int j = 0; j < cols; ++j) mu += x[r * cols + j];
    mu /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
      var += (x[r * cols + j] - mu) * (x[r * cols + j] - mu);
    }
    var /= cols;
    mean[r] = mu;
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < cols; ++j) {
      y[r * cols + j] =
          (x[r * cols + j] - mu) * rstd[r] * gamma[j] + beta[j];
    }
  }
}

void Gelu(int64_t n, const double* x, double* y) {
  for (int64_t i = 0; i < n; ++i) {
    y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] / std::sqrt(2.0)));
  }
}

}  // namespace reference
}  // namespace m3pc::kernels
