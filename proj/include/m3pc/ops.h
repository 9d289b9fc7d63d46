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

// Differentiable primitives. Binary elementwise ops broadcast by trailing
// dimension alignment only: the smaller operand's shape must equal the
// trailing dimensions of the larger one (a scalar aligns with anything).

#ifndef M3PC_OPS_H_
#define M3PC_OPS_H_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "m3pc/tensor.h"

namespace m3pc {

Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor Scale(const Tensor& a, double factor);
Tensor AddScalar(const Tensor& a, double value);
Tensor Square(const Tensor& a);

// a: [..., k], b: [k, n] -> [..., n]
Tensor MatMul(const Tensor& a, const Tensor& b);
// x: [..., in], weight: [in, out], bias: [out]
Tensor Linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
// a: [g, m, k], b: [g, k, n] (or [g, n, k] when transpose_b) -> [g, m, n]
Tensor BatchMatMul(const Tensor& a, const Tensor& b, bool transpose_b);

// softmax over the last dimension
Tensor Softmax(const Tensor& x);
// scores: [batch * heads, queries, keys]; key_visible: batch x keys flags.
// Hidden keys receive probability exactly zero; a query with no visible key
// yields an all-zero row.
Tensor MaskedSoftmax(const Tensor& scores,
                     std::span<const unsigned char> key_visible, int heads);

Tensor LayerNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps = 1e-5);
Tensor Gelu(const Tensor& x);
Tensor Exp(const Tensor& x);
Tensor Log(const Tensor& x);
Tensor Tanh(const Tensor& x);

Tensor Sum(const Tensor& x);
Tensor Mean(const Tensor& x);
// [..., n] -> [...]
Tensor SumLastDim(const Tensor& x);

Tensor Slice(const Tensor& x, int axis, int start, int length);
Tensor Concat(const std::vector<Tensor>& parts, int axis);
Tensor Reshape(const Tensor& x, const Shape& shape);
Tensor Permute(const Tensor& x, const std::vector<int>& order);

// table: [rows, d]; returns [indices.size(), d] reshaped to
// prefix_shape + [d].
Tensor EmbeddingLookup(const Tensor& table, std::span<const int> indices,
                       const Shape& prefix_shape);

// inverted dropout; identity when p == 0
Tensor Dropout(const Tensor& x, double p, std::mt19937_64& rng);

}  // namespace m3pc

#endif  // M3PC_OPS_H_
