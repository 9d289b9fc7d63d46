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

#include "m3pc/envs.h"

#include <algorithm>
#include <stdexcept>

namespace m3pc {

std::vector<double> Env::ClampAction(std::span<const double> action) const {
  const EnvSpec& s = spec();
  std::vector<double> out(action.begin(), action.end());
  bool clamped = false;
  for (int i = 0; i < s.action_dim; ++i) {
    const double c = std::clamp(out[i], s.action_low[i], s.action_high[i]);
    clamped = clamped || c != out[i];
    out[i] = c;
  }
  if (clamped) clamped_.fetch_add(1);
  return out;
}

PointMassEnv::PointMassEnv() {
  spec_.id = "pm-v1";
  spec_.state_dim = 4;
  spec_.action_dim = 2;
  spec_.action_low = {-1.0, -1.0};
  spec_.action_high = {1.0, 1.0};
  spec_.state_low = {-kWorkspace, -kWorkspace, -3.0, -3.0};
  spec_.state_high = {kWorkspace, kWorkspace, 3.0, 3.0};
  spec_.horizon = 50;
  spec_.dt = 0.1;
}

std::vector<double> PointMassEnv::Reset(Rng& rng) const {
  std::uniform_real_distribution<double> u(-kStartRange, kStartRange);
  const double x = u(rng);
  const double y = u(rng);
  return {x, y, 0.0, 0.0};
}

StepResult PointMassEnv::Step(std::span<const double> state,
                              std::span<const double> action, int t) const {
  const std::vector<double> a = ClampAction(action);
  StepResult r;
  r.next_state.resize(4);
  double reward = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double vmax = spec_.state_high[2 + i];
    double v = std::clamp(state[2 + i] + spec_.dt * a[i], -vmax, vmax);
    double p = state[i] + spec_.dt * v;
    if (p > kWorkspace || p < -kWorkspace) {
      p = std::clamp(p, -kWorkspace, kWorkspace);
      v = 0.0;
    }
    r.next_state[i] = p;
    r.next_state[2 + i] = v;
    reward -= p * p;  // target at the origin
  }
  r.reward = reward;
  r.done = t + 1 >= spec_.horizon;
  return r;
}

std::unique_ptr<Env> PointMassEnv::Clone() const {
  return std::make_unique<PointMassEnv>();
}

DoubleIntegratorEnv::DoubleIntegratorEnv() {
  spec_.id = "di-v1";
  spec_.state_dim = 2;
  spec_.action_dim = 1;
  spec_.action_low = {-5.0};
  spec_.action_high = {5.0};
  spec_.state_low = {-5.0, -5.0};
  spec_.state_high = {5.0, 5.0};
  spec_.horizon = 50;
  spec_.dt = 0.1;
}

std::vector<double> DoubleIntegratorEnv::Reset(Rng& rng) const {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return {u(rng), 0.0};
}

StepResult DoubleIntegratorEnv::Step(std::span<const double> state,
                                     std::span<const double> action,
                                     int t) const {
  const double u = ClampAction(action)[0];
  const double x = state[0];
  const double v = state[1];
  StepResult r;
  r.reward = -(kQx * x * x + kQv * v * v + kR * u * u);
  r.next_state = {x + spec_.dt * v, v + spec_.dt * u};
  r.done = t + 1 >= spec_.horizon;
  return r;
}

std::unique_ptr<Env> DoubleIntegratorEnv::Clone() const {
  return std::make_unique<DoubleIntegratorEnv>();
}

std::unique_ptr<Env> MakeEnv(std::string_view env_id) {
  if (env_id == "pm-v1") return std::make_unique<PointMassEnv>();
  if (env_id == "di-v1") return std::make_unique<DoubleIntegratorEnv>();
  throw std::invalid_argument("unknown env id '" + std::string(env_id) + "'");
}

double LqrSolution::OptimalReturn(std::span<const double> x0) const {
  const double x = x0[0], v = x0[1];
  return -(p0[0] * x * x + (p0[1] + p0[2]) * x * v + p0[3] * v * v);
}

LqrSolution SolveDoubleIntegratorLqr(const DoubleIntegratorEnv& env) {
  // x_{t+1} = A x_t + B u_t, stage cost x'Qx + R u^2, zero terminal cost
  const double dt = env.spec().dt;
  const double a[4] = {1.0, dt, 0.0, 1.0};
  const double b[2] = {0.0, dt};
  const double q[4] = {DoubleIntegratorEnv::kQx, 0.0, 0.0,
                       DoubleIntegratorEnv::kQv};
  const double r = DoubleIntegratorEnv::kR;
  const int horizon = env.spec().horizon;
  LqrSolution sol;
  sol.gains.resize(horizon);
  std::array<double, 4> p = {0.0, 0.0, 0.0, 0.0};
  for (int t = horizon - 1; t >= 0; --t) {
    // PB = P b, BtPB = b' P b, BtPA = b' P A
    const double pb0 = p[0] * b[0] + p[1] * b[1];
    const double pb1 = p[2] * b[0] + p[3] * b[1];
    const double btpb = b[0] * pb0 + b[1] * pb1;
    double btpa[2];
    for (int j = 0; j < 2; ++j) {
      btpa[j] = pb0 * a[0 * 2 + j] + pb1 * a[1 * 2 + j];
    }
    const double denom = r + btpb;
    const double k0 = btpa[0] / denom;
    const double k1 = btpa[1] / denom;
    sol.gains[t] = {k0, k1};
    // P <- Q + A' P (A - B K)
    double abk[4] = {a[0] - b[0] * k0, a[1] - b[0] * k1, a[2] - b[1] * k0,
                     a[3] - b[1] * k1};
    double pabk[4];
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        pabk[i * 2 + j] = p[i * 2 + 0] * abk[0 * 2 + j] +
                          p[i * 2 + 1] * abk[1 * 2 + j];
      }
    }
    std::array<double, 4> next;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        next[i * 2 + j] = q[i * 2 + j] + a[0 * 2 + i] * pabk[0 * 2 + j] +
                          a[1 * 2 + i] * pabk[1 * 2 + j];
      }
    }
    p = next;
  }
  sol.p0 = p;
  return sol;
}

}  // namespace m3pc
