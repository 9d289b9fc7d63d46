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

#ifndef M3PC_TENSOR_H_
#define M3PC_TENSOR_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace m3pc {

using Shape = std::vector<int>;

std::string ShapeString(const Shape& shape);
int64_t NumElements(const Shape& shape);

// Raised when operand shapes do not conform. The message names the operation
// and every offending shape.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const Shape& a, const Shape& b);
  ShapeError(const std::string& op, const std::string& detail);
};

// One vertex of the computation graph. Values are row-major doubles.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // reads this->grad, accumulates into parents' grads
  std::function<void(Node&)> backward;

  void EnsureGrad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Handle to a graph node. Copies share storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor Zeros(const Shape& shape, bool requires_grad = false);
  static Tensor Full(const Shape& shape, double value,
                     bool requires_grad = false);
  static Tensor FromData(const Shape& shape, std::vector<double> data,
                         bool requires_grad = false);
  static Tensor Scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int axis) const;
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  double item() const;
  double at(int64_t flat_index) const { return node_->value[flat_index]; }

  // zero-filled if nothing reached this tensor during Backward
  std::span<const double> grad() const;
  void ZeroGrad() { node_->grad.clear(); }

  // a new leaf sharing no history; copies values
  Tensor Detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Graph recording is on by default; this guard disables it for the current
// thread (inference, target-network updates, oracle evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradEnabled();

// Reverse topological order of every node reachable from `root` that
// participates in differentiation. Each node appears exactly once and every
// node appears after all of its consumers.
std::vector<Node*> BuildTape(const Tensor& root);

// Accumulates d(loss)/d(leaf) into every requires_grad leaf reachable from
// `loss`. Throws if loss is not a single element.
void Backward(const Tensor& loss);

// Internal: construct an op output, wiring parents only when recording.
Tensor MakeResult(const char* op, Shape shape, std::vector<double> value,
                  std::vector<Tensor> inputs,
                  std::function<void(Node&)> backward);

}  // namespace m3pc

#endif  // M3PC_TENSOR_H_
