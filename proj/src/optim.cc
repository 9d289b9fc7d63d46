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

#include "m3pc/optim.h"

#include <algorithm>
#include <cmath>

namespace m3pc {

int64_t CountParameters(const ParameterList& params) {
  int64_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

Adam::Adam(ParameterList params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::Step(double lr, double weight_decay) {
  for (const auto& p : params_) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NonFiniteGradient(p.name);
    }
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(options_.beta1, double(steps_));
  const double c2 = 1.0 - std::pow(options_.beta2, double(steps_));
  const double decay = 1.0 - lr * weight_decay;
  for (size_t k = 0; k < params_.size(); ++k) {
    Tensor& t = params_[k].tensor;
    auto value = t.mutable_data();
    const auto grad = t.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      value[i] = value[i] * decay -
                 lr * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
  }
}

void Adam::ZeroGrad() {
  for (auto& p : params_) p.tensor.ZeroGrad();
}

double CosineWarmupLr(int64_t step, int64_t warmup_steps, int64_t total_steps,
                      double base_lr, bool enabled) {
  if (!enabled) return base_lr;
  if (step < warmup_steps) {
    return base_lr * double(step) / double(warmup_steps);
  }
  const int64_t span = total_steps - warmup_steps;
  if (span <= 0) return step >= total_steps ? 0.0 : base_lr;
  const double progress =
      std::clamp(double(step - warmup_steps) / double(span), 0.0, 1.0);
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace m3pc
