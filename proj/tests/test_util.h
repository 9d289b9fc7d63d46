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

// Shared helpers for the unit tests: finite-difference gradient oracle and
// random tensor generation.

#ifndef M3PC_TESTS_TEST_UTIL_H_
#define M3PC_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "m3pc/tensor.h"

namespace m3pc::testing {

inline Tensor RandomTensor(const Shape& shape, std::mt19937_64& rng,
                           bool requires_grad = true, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> data(NumElements(shape));
  for (double& v : data) v = normal(rng);
  return Tensor::FromData(shape, std::move(data), requires_grad);
}

// Relative error with an absolute floor so exact zeros do not divide by 0.
inline double RelativeError(double analytic, double numeric) {
  const double scale =
      std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / scale;
}

// Compares Backward() against central differences for every entry of every
// input (or the first `max_entries` of each). Returns the worst relative
// error.
inline double GradCheck(const std::function<Tensor()>& loss_fn,
                        std::vector<Tensor> inputs, double step = 1e-5,
                        int max_entries = -1) {
  for (auto& t : inputs) t.ZeroGrad();
  Tensor loss = loss_fn();
  Backward(loss);
  double worst = 0.0;
  for (auto& t : inputs) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    const int64_t n = max_entries < 0
                          ? t.numel()
                          : std::min<int64_t>(t.numel(), max_entries);
    for (int64_t i = 0; i < n; ++i) {
      double& x = t.mutable_data()[i];
      const double saved = x;
      double plus, minus;
      {
        NoGradGuard guard;
        x = saved + step;
        plus = loss_fn().item();
        x = saved - step;
        minus = loss_fn().item();
      }
      x = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      worst = std::max(worst, RelativeError(analytic[i], numeric));
    }
  }
  return worst;
}

}  // namespace m3pc::testing

#endif  // M3PC_TESTS_TEST_UTIL_H_
