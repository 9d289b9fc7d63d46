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

#include "m3pc/tensor.h"

#include <sstream>
#include <unordered_set>
#include <utility>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace m3pc {
namespace {

#if defined(__GLIBC__)
// Graph buffers are large and short-lived. glibc would otherwise serve each
// one with a fresh mmap and pay the page faults on every step.
struct KeepBuffersOnHeap {
  KeepBuffersOnHeap() {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  }
} keep_buffers_on_heap;
#endif

thread_local bool grad_enabled = true;

std::shared_ptr<Node> NewNode(const Shape& shape, std::vector<double> data,
                              bool requires_grad) {
  if (NumElements(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("tensor", "shape " + ShapeString(shape) + " holds " +
                                   std::to_string(NumElements(shape)) +
                                   " values, got " +
                                   std::to_string(data.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

std::string ShapeString(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

ShapeError::ShapeError(const std::string& op, const Shape& a, const Shape& b)
    : std::invalid_argument(op + ": shape mismatch " + ShapeString(a) +
                            " vs " + ShapeString(b)) {}

ShapeError::ShapeError(const std::string& op, const std::string& detail)
    : std::invalid_argument(op + ": " + detail) {}

Tensor Tensor::Zeros(const Shape& shape, bool requires_grad) {
  return Tensor(NewNode(shape, std::vector<double>(NumElements(shape), 0.0),
                        requires_grad));
}

Tensor Tensor::Full(const Shape& shape, double value, bool requires_grad) {
  return Tensor(NewNode(
      shape, std::vector<double>(NumElements(shape), value), requires_grad));
}

Tensor Tensor::FromData(const Shape& shape, std::vector<double> data,
                        bool requires_grad) {
  return Tensor(NewNode(shape, std::move(data), requires_grad));
}

Tensor Tensor::Scalar(double value, bool requires_grad) {
  return Tensor(NewNode({}, {value}, requires_grad));
}

int Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw ShapeError("dim", "axis " + std::to_string(axis) +
                                " out of range for " + ShapeString(shape()));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item", "expected one element, shape " +
                                 ShapeString(shape()));
  }
  return node_->value[0];
}

std::span<const double> Tensor::grad() const {
  node_->EnsureGrad();
  return node_->grad;
}

Tensor Tensor::Detach() const {
  return Tensor(NewNode(shape(), node_->value, false));
}

NoGradGuard::NoGradGuard() : previous_(grad_enabled) { grad_enabled = false; }
NoGradGuard::~NoGradGuard() { grad_enabled = previous_; }

bool GradEnabled() { return grad_enabled; }

Tensor MakeResult(const char* op, Shape shape, std::vector<double> value,
                  std::vector<Tensor> inputs,
                  std::function<void(Node&)> backward) {
  bool needs = false;
  if (grad_enabled) {
    for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  }
  auto node = NewNode(shape, std::move(value), needs);
  node->op = op;
  if (needs) {
    node->parents.reserve(inputs.size());
    for (const Tensor& t : inputs) node->parents.push_back(t.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

std::vector<Node*> BuildTape(const Tensor& root) {
  // iterative post-order DFS; post-order is a topological order
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  if (!root.requires_grad()) return order;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return {order.rbegin(), order.rend()};
}

void Backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward", "loss must be scalar, got shape " +
                                     ShapeString(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  std::vector<Node*> tape = BuildTape(loss);
  Node* root = loss.node();
  root->EnsureGrad();
  root->grad[0] += 1.0;
  for (Node* node : tape) {
    if (!node->backward) continue;
    node->EnsureGrad();
    for (auto& parent : node->parents) {
      if (parent->requires_grad) parent->EnsureGrad();
    }
    node->backward(*node);
    // interior gradients are not needed after propagation
    if (!node->parents.empty()) node->grad.clear();
  }
}

}  // namespace m3pc
