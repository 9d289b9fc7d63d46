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

#ifndef M3PC_OPTIM_H_
#define M3PC_OPTIM_H_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "m3pc/tensor.h"

namespace m3pc {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedParameter>;

int64_t CountParameters(const ParameterList& params);

// Thrown before any parameter is touched when a gradient is NaN or infinite.
class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& parameter)
      : std::runtime_error("non-finite gradient in parameter " + parameter),
        parameter_(parameter) {}
  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction and decoupled weight decay: each step first
// scales parameters by (1 - lr * weight_decay), then applies the Adam update.
class Adam {
 public:
  explicit Adam(ParameterList params, AdamOptions options = {});

  void Step(double lr, double weight_decay);
  void ZeroGrad();

  int64_t steps() const { return steps_; }
  const ParameterList& params() const { return params_; }

  // moment buffers, aligned with params(); exposed for checkpointing
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_steps(int64_t steps) { steps_ = steps; }

 private:
  ParameterList params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  int64_t steps_ = 0;
};

// Linear warmup from 0 to base_lr over warmup_steps, then cosine decay to 0
// at total_steps; clamps beyond total_steps. Returns base_lr unchanged when
// scheduling is disabled.
double CosineWarmupLr(int64_t step, int64_t warmup_steps, int64_t total_steps,
                      double base_lr, bool enabled = true);

}  // namespace m3pc

#endif  // M3PC_OPTIM_H_
