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

#include <cmath>
#include <limits>

#include "gtest/gtest.h"
#include "m3pc/optim.h"

namespace m3pc {
namespace {

Tensor ScalarParam(double v) { return Tensor::Scalar(v, true); }

void SetGrad(Tensor& t, double g) {
  t.ZeroGrad();
  t.node()->EnsureGrad();
  t.node()->grad[0] = g;
}

TEST(Adam, ZeroGradientNoDecayLeavesParams) {
  Tensor p = ScalarParam(1.25);
  Adam adam({{"p", p}});
  for (int i = 0; i < 5; ++i) {
    SetGrad(p, 0.0);
    adam.Step(1e-3, 0.0);
  }
  EXPECT_EQ(p.item(), 1.25);
}

TEST(Adam, ConstantGradientMatchesScalarRecurrence) {
  const double g = 0.37, lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Tensor p = ScalarParam(0.5);
  Adam adam({{"p", p}});
  // oracle: scripted scalar recurrence
  double x = 0.5, m = 0.0, v = 0.0;
  for (int t = 1; t <= 25; ++t) {
    SetGrad(p, g);
    adam.Step(lr, 0.0);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    x -= lr * mh / (std::sqrt(vh) + eps);
    EXPECT_NEAR(p.item(), x, 1e-15) << "step " << t;
  }
}

TEST(Adam, DecoupledDecayShrinksGeometrically) {
  const double lr = 1e-4, wd = 0.005;
  Tensor p = ScalarParam(2.0);
  Adam adam({{"p", p}});
  for (int k = 1; k <= 10; ++k) {
    SetGrad(p, 0.0);
    adam.Step(lr, wd);
    EXPECT_NEAR(p.item(), 2.0 * std::pow(1.0 - lr * wd, k), 1e-15);
  }
}

TEST(Adam, NanGradientAbortsAndNamesParameter) {
  Tensor a = ScalarParam(1.0);
  Tensor b = ScalarParam(2.0);
  Adam adam({{"encoder.weight", a}, {"head.bias", b}});
  SetGrad(a, 1.0);
  SetGrad(b, std::numeric_limits<double>::quiet_NaN());
  try {
    adam.Step(0.1, 0.0);
    FAIL() << "expected NonFiniteGradient";
  } catch (const NonFiniteGradient& e) {
    EXPECT_EQ(e.parameter(), "head.bias");
  }
  EXPECT_EQ(a.item(), 1.0);
  EXPECT_EQ(adam.steps(), 0);
}

TEST(CosineWarmupLr, Endpoints) {
  EXPECT_EQ(CosineWarmupLr(0, 40000, 140000, 1e-4), 0.0);
  EXPECT_DOUBLE_EQ(CosineWarmupLr(40000, 40000, 140000, 1e-4), 1e-4);
  EXPECT_NEAR(CosineWarmupLr(140000, 40000, 140000, 1e-4), 0.0, 1e-20);
  EXPECT_NEAR(CosineWarmupLr(500000, 40000, 140000, 1e-4), 0.0, 1e-20);
  EXPECT_DOUBLE_EQ(CosineWarmupLr(20000, 40000, 140000, 1e-4), 0.5e-4);
}

TEST(CosineWarmupLr, MidpointMatchesCosineSquaredProfile) {
  // halfway through decay: 0.5 (1 + cos(pi/2)) = cos^2(pi/4)
  const double expected = 1e-4 * std::pow(std::cos(M_PI / 4.0), 2);
  EXPECT_NEAR(CosineWarmupLr(90000, 40000, 140000, 1e-4), expected, 1e-18);
}

TEST(CosineWarmupLr, DisabledIsConstant) {
  for (int64_t s : {0, 10, 1000000}) {
    EXPECT_EQ(CosineWarmupLr(s, 40000, 140000, 1e-4, false), 1e-4);
  }
}

}  // namespace
}  // namespace m3pc
