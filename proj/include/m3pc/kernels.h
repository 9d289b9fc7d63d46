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

// Dense numeric kernels behind the autodiff ops. Every kernel has an
// OpenMP-parallel implementation and a plain serial implementation in
// `reference`; the latter is kept for tests and the kernel benchmark.

#ifndef M3PC_KERNELS_H_
#define M3PC_KERNELS_H_

#include <cstdint>

namespace m3pc::kernels {

enum class Trans { kNo, kYes };

// C[m,n] (+)= op(A) * op(B) where op(A) is m x k and op(B) is k x n.
// Row-major storage; A is m x k (or k x m when transposed), B is k x n (or
// n x k when transposed).
void Gemm(Trans trans_a, Trans trans_b, int m, int n, int k, const double* a,
          const double* b, double* c, bool accumulate);

// `batch` independent Gemms with contiguous operands.
void GemmBatched(int batch, Trans trans_a, Trans trans_b, int m, int n, int k,
                 const double* a, const double* b, double* c, bool accumulate);

// Row-wise softmax over `cols`. When `key_visible` is non-null, row r uses
// key_visible[(r / rows_per_mask) * cols + j] to exclude columns; excluded
// columns get probability exactly 0 and rows with no visible column are all
// zeros.
void SoftmaxRows(int64_t rows, int cols, const double* x, double* y,
                 const unsigned char* key_visible, int64_t rows_per_mask);

// dx = y * (dy - sum(dy * y)) per row, accumulated into dx.
void SoftmaxRowsBackward(int64_t rows, int cols, const double* y,
                         const double* dy, double* dx);

// Normalizes each row to zero mean and unit variance; writes the per-row
// mean and reciprocal standard deviation.
void LayerNormRows(int64_t rows, int cols, const double* x,
                   const double* gamma, const double* beta, double eps,
                   double* y, double* mean, double* rstd);

void LayerNormRowsBackward(int64_t rows, int cols, const double* x,
                           const double* gamma, const double* mean,
                           const double* rstd, const double* dy, double* dx,
                           double* dgamma, double* dbeta);

// Exact erf-based GELU and its derivative.
void Gelu(int64_t n, const double* x, double* y);
void GeluBackward(int64_t n, const double* x, const double* dy, double* dx);

namespace reference {

void Gemm(Trans trans_a, Trans trans_b, int m, int n, int k, const double* a,
          const double* b, double* c, bool accumulate);
void SoftmaxRows(int64_t rows, int cols, const double* x, double* y,
                 const unsigned char* key_visible, int64_t rows_per_mask);
void LayerNormRows(int64_t rows, int cols, const double* x,
                   const double* gamma, const double* beta, double eps,
                   double* y, double* mean, double* rstd);
void Gelu(int64_t n, const double* x, double* y);

}  // namespace reference

// Number of worker threads OpenMP will use (1 when built without OpenMP).
int MaxThreads();

}  // namespace m3pc::kernels

#endif  // M3PC_KERNELS_H_
