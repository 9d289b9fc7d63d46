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

#include "m3pc/ops.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "m3pc/kernels.h"

namespace m3pc {
namespace {

using kernels::Trans;

bool IsSuffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Which operand is broadcast, and by how much.
struct Broadcast {
  Shape out;
  int64_t na;  // elements of a
  int64_t nb;
  int64_t n;   // elements of output
};

Broadcast ResolveBroadcast(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape() || IsSuffix(b.shape(), a.shape())) {
    return {a.shape(), a.numel(), b.numel(), a.numel()};
  }
  if (IsSuffix(a.shape(), b.shape())) {
    return {b.shape(), a.numel(), b.numel(), b.numel()};
  }
  throw ShapeError(op, a.shape(), b.shape());
}

// reduce an output-shaped gradient into an operand with `count` elements
void AccumulateBroadcast(std::span<const double> grad,
                         std::vector<double>& into) {
  const int64_t count = static_cast<int64_t>(into.size());
  const int64_t n = static_cast<int64_t>(grad.size());
  if (count == n) {
    for (int64_t i = 0; i < n; ++i) into[i] += grad[i];
    return;
  }
  for (int64_t o = 0; o < n; o += count) {
    for (int64_t j = 0; j < count; ++j) into[j] += grad[o + j];
  }
}

// out[i] = f(a[i mod na], b[i mod nb]) where the smaller operand tiles the
// larger one
template <typename F>
void BroadcastApply(const Broadcast& bc, std::span<const double> av,
                    std::span<const double> bv, double* out, F&& f) {
  if (bc.na == bc.n && bc.nb == bc.n) {
    for (int64_t i = 0; i < bc.n; ++i) out[i] = f(av[i], bv[i]);
  } else if (bc.na == bc.n) {
    for (int64_t o = 0; o < bc.n; o += bc.nb) {
      for (int64_t j = 0; j < bc.nb; ++j) out[o + j] = f(av[o + j], bv[j]);
    }
  } else {
    for (int64_t o = 0; o < bc.n; o += bc.na) {
      for (int64_t j = 0; j < bc.na; ++j) out[o + j] = f(av[j], bv[o + j]);
    }
  }
}

template <typename F>
Tensor Unary(const char* op, const Tensor& x, F&& forward,
             std::function<void(Node&)> backward) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = forward(in[i]);
  return MakeResult(op, x.shape(), std::move(out), {x}, std::move(backward));
}

}  // namespace

Tensor Add(const Tensor& a, const Tensor& b) {
  const Broadcast bc = ResolveBroadcast("add", a, b);
  std::vector<double> out(bc.n);
  const auto av = a.data();
  const auto bv = b.data();
  BroadcastApply(bc, av, bv, out.data(),
                 [](double x, double y) { return x + y; });
  return MakeResult("add", bc.out, std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) AccumulateBroadcast(self.grad, p->grad);
    }
  });
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  const Broadcast bc = ResolveBroadcast("sub", a, b);
  std::vector<double> out(bc.n);
  const auto av = a.data();
  const auto bv = b.data();
  BroadcastApply(bc, av, bv, out.data(),
                 [](double x, double y) { return x - y; });
  return MakeResult("sub", bc.out, std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) AccumulateBroadcast(self.grad, pa.grad);
    if (pb.requires_grad) {
      const int64_t count = static_cast<int64_t>(pb.grad.size());
      const int64_t n = static_cast<int64_t>(self.grad.size());
      for (int64_t o = 0; o < n; o += count) {
        for (int64_t j = 0; j < count; ++j) pb.grad[j] -= self.grad[o + j];
      }
    }
  });
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  const Broadcast bc = ResolveBroadcast("mul", a, b);
  std::vector<double> out(bc.n);
  const auto av = a.data();
  const auto bv = b.data();
  BroadcastApply(bc, av, bv, out.data(),
                 [](double x, double y) { return x * y; });
  return MakeResult("mul", bc.out, std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const int64_t na = static_cast<int64_t>(pa.value.size());
    const int64_t nb = static_cast<int64_t>(pb.value.size());
    const int64_t n = static_cast<int64_t>(self.grad.size());
    // walk the output in tiles of the smaller operand
    const int64_t tile = std::min(na, nb);
    for (int64_t o = 0; o < n; o += tile) {
      const int64_t ia = na == n ? o : 0;
      const int64_t ib = nb == n ? o : 0;
      for (int64_t j = 0; j < tile; ++j) {
        const double g = self.grad[o + j];
        if (pa.requires_grad) pa.grad[ia + j] += g * pb.value[ib + j];
        if (pb.requires_grad) pb.grad[ib + j] += g * pa.value[ia + j];
      }
    }
  });
}

Tensor Scale(const Tensor& a, double factor) {
  return Unary(
      "scale", a, [factor](double v) { return v * factor; },
      [factor](Node& self) {
        Node& p = *self.parents[0];
        for (size_t i = 0; i < self.grad.size(); ++i) {
          p.grad[i] += factor * self.grad[i];
        }
      });
}

Tensor AddScalar(const Tensor& a, double value) {
  return Unary(
      "add_scalar", a, [value](double v) { return v + value; },
      [](Node& self) {
        Node& p = *self.parents[0];
        for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
      });
}

Tensor Square(const Tensor& a) {
  return Unary(
      "square", a, [](double v) { return v * v; },
      [](Node& self) {
        Node& p = *self.parents[0];
        for (size_t i = 0; i < self.grad.size(); ++i) {
          p.grad[i] += 2.0 * p.value[i] * self.grad[i];
        }
      });
}

Tensor MatMul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || b.rank() != 2 || a.dim(-1) != b.dim(0)) {
    throw ShapeError("matmul", a.shape(), b.shape());
  }
  const int k = b.dim(0);
  const int n = b.dim(1);
  const int m = static_cast<int>(a.numel() / std::max(k, 1));
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<double> out(int64_t(m) * n);
  kernels::Gemm(Trans::kNo, Trans::kNo, m, n, k, a.data().data(),
                b.data().data(), out.data(), false);
  return MakeResult("matmul", out_shape, std::move(out), {a, b},
                    [m, n, k](Node& self) {
                      Node& pa = *self.parents[0];
                      Node& pb = *self.parents[1];
                      // dA = dC B^T, dB = A^T dC
                      if (pa.requires_grad) {
                        kernels::Gemm(Trans::kNo, Trans::kYes, m, k, n,
                                      self.grad.data(), pb.value.data(),
                                      pa.grad.data(), true);
                      }
                      if (pb.requires_grad) {
                        kernels::Gemm(Trans::kYes, Trans::kNo, k, n, m,
                                      pa.value.data(), self.grad.data(),
                                      pb.grad.data(), true);
                      }
                    });
}

Tensor Linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return Add(MatMul(x, weight), bias);
}

Tensor BatchMatMul(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) {
    throw ShapeError("batch_matmul", a.shape(), b.shape());
  }
  const int g = a.dim(0);
  const int m = a.dim(1);
  const int k = a.dim(2);
  const int kb = transpose_b ? b.dim(2) : b.dim(1);
  const int n = transpose_b ? b.dim(1) : b.dim(2);
  if (kb != k) throw ShapeError("batch_matmul", a.shape(), b.shape());
  std::vector<double> out(int64_t(g) * m * n);
  const Trans tb = transpose_b ? Trans::kYes : Trans::kNo;
  kernels::GemmBatched(g, Trans::kNo, tb, m, n, k, a.data().data(),
                       b.data().data(), out.data(), false);
  return MakeResult(
      "batch_matmul", {g, m, n}, std::move(out), {a, b},
      [g, m, n, k, transpose_b](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
          // dA = dC op(B)^T
          kernels::GemmBatched(g, Trans::kNo,
                               transpose_b ? Trans::kNo : Trans::kYes, m, k, n,
                               self.grad.data(), pb.value.data(),
                               pa.grad.data(), true);
        }
        if (pb.requires_grad) {
          if (transpose_b) {
            // B is [n, k]: dB = dC^T A
            kernels::GemmBatched(g, Trans::kYes, Trans::kNo, n, k, m,
                                 self.grad.data(), pa.value.data(),
                                 pb.grad.data(), true);
          } else {
            kernels::GemmBatched(g, Trans::kYes, Trans::kNo, k, n, m,
                                 pa.value.data(), self.grad.data(),
                                 pb.grad.data(), true);
          }
        }
      });
}

Tensor Softmax(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("softmax", "rank-0 input");
  const int cols = x.dim(-1);
  const int64_t rows = x.numel() / std::max(cols, 1);
  std::vector<double> out(x.numel());
  kernels::SoftmaxRows(rows, cols, x.data().data(), out.data(), nullptr, 1);
  return MakeResult("softmax", x.shape(), std::move(out), {x},
                    [rows, cols](Node& self) {
                      kernels::SoftmaxRowsBackward(
                          rows, cols, self.value.data(), self.grad.data(),
                          self.parents[0]->grad.data());
                    });
}

Tensor MaskedSoftmax(const Tensor& scores,
                     std::span<const unsigned char> key_visible, int heads) {
  if (scores.rank() != 3 || heads <= 0 || scores.dim(0) % heads != 0) {
    throw ShapeError("masked_softmax",
                     "scores " + ShapeString(scores.shape()) + " with " +
                         std::to_string(heads) + " heads");
  }
  const int batch = scores.dim(0) / heads;
  const int queries = scores.dim(1);
  const int keys = scores.dim(2);
  if (static_cast<int64_t>(key_visible.size()) != int64_t(batch) * keys) {
    throw ShapeError("masked_softmax", scores.shape(),
                     Shape{static_cast<int>(key_visible.size())});
  }
  const int64_t rows = int64_t(batch) * heads * queries;
  std::vector<double> out(scores.numel());
  kernels::SoftmaxRows(rows, keys, scores.data().data(), out.data(),
                       key_visible.data(), int64_t(heads) * queries);
  return MakeResult("masked_softmax", scores.shape(), std::move(out), {scores},
                    [rows, keys](Node& self) {
                      kernels::SoftmaxRowsBackward(
                          rows, keys, self.value.data(), self.grad.data(),
                          self.parents[0]->grad.data());
                    });
}

Tensor LayerNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps) {
  const int cols = x.dim(-1);
  if (gamma.shape() != Shape{cols} || beta.shape() != Shape{cols}) {
    throw ShapeError("layer_norm", x.shape(), gamma.shape());
  }
  const int64_t rows = x.numel() / cols;
  std::vector<double> out(x.numel());
  auto mean = std::make_shared<std::vector<double>>(rows);
  auto rstd = std::make_shared<std::vector<double>>(rows);
  kernels::LayerNormRows(rows, cols, x.data().data(), gamma.data().data(),
                         beta.data().data(), eps, out.data(), mean->data(),
                         rstd->data());
  return MakeResult(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [rows, cols, mean, rstd](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        kernels::LayerNormRowsBackward(
            rows, cols, px.value.data(), pg.value.data(), mean->data(),
            rstd->data(), self.grad.data(),
            px.requires_grad ? px.grad.data() : nullptr,
            pg.requires_grad ? pg.grad.data() : nullptr,
            pb.requires_grad ? pb.grad.data() : nullptr);
      });
}

Tensor Gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  kernels::Gelu(x.numel(), x.data().data(), out.data());
  return MakeResult("gelu", x.shape(), std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    kernels::GeluBackward(static_cast<int64_t>(p.value.size()), p.value.data(),
                          self.grad.data(), p.grad.data());
  });
}

Tensor Exp(const Tensor& x) {
  return Unary(
      "exp", x, [](double v) { return std::exp(v); },
      [](Node& self) {
        Node& p = *self.parents[0];
        for (size_t i = 0; i < self.grad.size(); ++i) {
          p.grad[i] += self.grad[i] * self.value[i];
        }
      });
}

Tensor Log(const Tensor& x) {
  return Unary(
      "log", x, [](double v) { return std::log(v); },
      [](Node& self) {
        Node& p = *self.parents[0];
        for (size_t i = 0; i < self.grad.size(); ++i) {
          p.grad[i] += self.grad[i] / p.value[i];
        }
      });
}

Tensor Tanh(const Tensor& x) {
  return Unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](Node& self) {
        Node& p = *self.parents[0];
        for (size_t i = 0; i < self.grad.size(); ++i) {
          p.grad[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
        }
      });
}

Tensor Sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return MakeResult("sum", {}, {total}, {x}, [](Node& self) {
    Node& p = *self.parents[0];
    for (double& g : p.grad) g += self.grad[0];
  });
}

Tensor Mean(const Tensor& x) {
  const double n = static_cast<double>(std::max<int64_t>(x.numel(), 1));
  double total = 0.0;
  for (double v : x.data()) total += v;
  return MakeResult("mean", {}, {total / n}, {x}, [n](Node& self) {
    Node& p = *self.parents[0];
    for (double& g : p.grad) g += self.grad[0] / n;
  });
}

Tensor SumLastDim(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("sum_last_dim", "rank-0 input");
  const int cols = x.dim(-1);
  const int64_t rows = x.numel() / std::max(cols, 1);
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  std::vector<double> out(rows, 0.0);
  const auto in = x.data();
  for (int64_t r = 0; r < rows; ++r) {
    for (int j = 0; j < cols; ++j) out[r] += in[r * cols + j];
  }
  return MakeResult("sum_last_dim", out_shape, std::move(out), {x},
                    [rows, cols](Node& self) {
                      Node& p = *self.parents[0];
                      for (int64_t r = 0; r < rows; ++r) {
                        for (int j = 0; j < cols; ++j) {
                          p.grad[r * cols + j] += self.grad[r];
                        }
                      }
                    });
}

Tensor Slice(const Tensor& x, int axis, int start, int length) {
  if (axis < 0) axis += x.rank();
  if (axis < 0 || axis >= x.rank() || start < 0 || length < 0 ||
      start + length > x.dim(axis)) {
    throw ShapeError("slice", "axis " + std::to_string(axis) + " range [" +
                                  std::to_string(start) + ", " +
                                  std::to_string(start + length) + ") of " +
                                  ShapeString(x.shape()));
  }
  int64_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  int64_t inner = 1;
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const int64_t full = x.dim(axis);
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<double> out(outer * length * inner);
  const auto in = x.data();
  for (int64_t o = 0; o < outer; ++o) {
    std::copy_n(in.begin() + (o * full + start) * inner, length * inner,
                out.begin() + o * length * inner);
  }
  return MakeResult("slice", out_shape, std::move(out), {x},
                    [outer, inner, full, start, length](Node& self) {
                      Node& p = *self.parents[0];
                      for (int64_t o = 0; o < outer; ++o) {
                        const int64_t src = o * length * inner;
                        const int64_t dst = (o * full + start) * inner;
                        for (int64_t i = 0; i < length * inner; ++i) {
                          p.grad[dst + i] += self.grad[src + i];
                        }
                      }
                    });
}

Tensor Concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat", "no inputs");
  const int rank = parts[0].rank();
  if (axis < 0) axis += rank;
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  for (const Tensor& t : parts) {
    Shape probe = t.shape();
    if (t.rank() != rank) throw ShapeError("concat", parts[0].shape(), probe);
    probe[axis] = parts[0].dim(axis);
    if (probe != parts[0].shape()) {
      throw ShapeError("concat", parts[0].shape(), t.shape());
    }
    out_shape[axis] += t.dim(axis);
  }
  int64_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[i];
  int64_t inner = 1;
  for (int i = axis + 1; i < rank; ++i) inner *= out_shape[i];
  const int64_t total = out_shape[axis];
  std::vector<double> out(NumElements(out_shape));
  std::vector<int64_t> offsets;
  int64_t offset = 0;
  for (const Tensor& t : parts) {
    const int64_t len = t.dim(axis);
    const auto in = t.data();
    for (int64_t o = 0; o < outer; ++o) {
      std::copy_n(in.begin() + o * len * inner, len * inner,
                  out.begin() + (o * total + offset) * inner);
    }
    offsets.push_back(offset);
    offset += len;
  }
  return MakeResult(
      "concat", out_shape, std::move(out), parts,
      [outer, inner, total, offsets, axis](Node& self) {
        for (size_t k = 0; k < self.parents.size(); ++k) {
          Node& p = *self.parents[k];
          if (!p.requires_grad) continue;
          const int64_t len = p.shape[axis];
          for (int64_t o = 0; o < outer; ++o) {
            const int64_t src = (o * total + offsets[k]) * inner;
            const int64_t dst = o * len * inner;
            for (int64_t i = 0; i < len * inner; ++i) {
              p.grad[dst + i] += self.grad[src + i];
            }
          }
        }
      });
}

Tensor Reshape(const Tensor& x, const Shape& shape) {
  if (NumElements(shape) != x.numel()) {
    throw ShapeError("reshape", x.shape(), shape);
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return MakeResult("reshape", shape, std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor Permute(const Tensor& x, const std::vector<int>& order) {
  const int rank = x.rank();
  if (static_cast<int>(order.size()) != rank) {
    throw ShapeError("permute", "order size " + std::to_string(order.size()) +
                                    " for " + ShapeString(x.shape()));
  }
  Shape out_shape(rank);
  for (int i = 0; i < rank; ++i) out_shape[i] = x.dim(order[i]);
  // stride of each output axis inside the input
  std::vector<int64_t> in_strides(rank, 1);
  for (int i = rank - 2; i >= 0; --i) {
    in_strides[i] = in_strides[i + 1] * x.dim(i + 1);
  }
  std::vector<int64_t> gather(x.numel());
  {
    // odometer over output indices, tracking the source offset incrementally
    std::vector<int> idx(rank, 0);
    int64_t src = 0;
    for (int64_t flat = 0; flat < x.numel(); ++flat) {
      gather[flat] = src;
      for (int i = rank - 1; i >= 0; --i) {
        const int64_t stride = in_strides[order[i]];
        if (++idx[i] < out_shape[i]) {
          src += stride;
          break;
        }
        src -= stride * (out_shape[i] - 1);
        idx[i] = 0;
      }
    }
  }
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = in[gather[i]];
  return MakeResult("permute", out_shape, std::move(out), {x},
                    [gather = std::move(gather)](Node& self) {
                      Node& p = *self.parents[0];
                      for (size_t i = 0; i < gather.size(); ++i) {
                        p.grad[gather[i]] += self.grad[i];
                      }
                    });
}

Tensor EmbeddingLookup(const Tensor& table, std::span<const int> indices,
                       const Shape& prefix_shape) {
  if (table.rank() != 2 ||
      NumElements(prefix_shape) != static_cast<int64_t>(indices.size())) {
    throw ShapeError("embedding_lookup", table.shape(), prefix_shape);
  }
  const int rows = table.dim(0);
  const int d = table.dim(1);
  std::vector<int> idx(indices.begin(), indices.end());
  for (int i : idx) {
    if (i < 0 || i >= rows) {
      throw ShapeError("embedding_lookup",
                       "index " + std::to_string(i) + " outside table " +
                           ShapeString(table.shape()));
    }
  }
  Shape out_shape = prefix_shape;
  out_shape.push_back(d);
  std::vector<double> out(idx.size() * d);
  const auto in = table.data();
  for (size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(in.begin() + int64_t(idx[r]) * d, d, out.begin() + r * d);
  }
  return MakeResult("embedding_lookup", out_shape, std::move(out), {table},
                    [idx = std::move(idx), d](Node& self) {
                      Node& p = *self.parents[0];
                      for (size_t r = 0; r < idx.size(); ++r) {
                        for (int j = 0; j < d; ++j) {
                          p.grad[int64_t(idx[r]) * d + j] +=
                              self.grad[r * d + j];
                        }
                      }
                    });
}

Tensor Dropout(const Tensor& x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<double> mask(x.numel());
  const double scale = 1.0 / (1.0 - p);
  for (double& m : mask) m = keep(rng) ? scale : 0.0;
  return Mul(x, Tensor::FromData(x.shape(), std::move(mask)));
}

}  // namespace m3pc
