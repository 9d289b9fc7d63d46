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

// Deterministic toy control tasks with analytically known structure.
//
//   pm-v1  2-D point mass: state (px, py, vx, vy), action = acceleration in
//          [-1, 1]^2, reward = -|p' - target|^2, 50 steps.
//   di-v1  1-D double integrator: state (x, v), action = force in [-5, 5],
//          reward = -(x^2 + 0.1 v^2 + 0.1 u^2); finite-horizon LQR optimum
//          is known in closed form.

#ifndef M3PC_ENVS_H_
#define M3PC_ENVS_H_

#include <array>
#include <atomic>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "m3pc/rng.h"

namespace m3pc {

struct EnvSpec {
  std::string id;
  int state_dim = 0;
  int action_dim = 0;
  std::vector<double> action_low;
  std::vector<double> action_high;
  std::vector<double> state_low;
  std::vector<double> state_high;
  int horizon = 0;  // H
  double dt = 0.1;
};

struct StepResult {
  std::vector<double> next_state;
  double reward = 0.0;
  bool done = false;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual std::vector<double> Reset(Rng& rng) const = 0;
  // Pure in (state, action, t) apart from the clamp counter. Out-of-bound
  // actions are clamped.
  virtual StepResult Step(std::span<const double> state,
                          std::span<const double> action, int t) const = 0;
  virtual std::unique_ptr<Env> Clone() const = 0;

  std::vector<double> ClampAction(std::span<const double> action) const;
  int64_t clamped_actions() const { return clamped_.load(); }

 protected:
  mutable std::atomic<int64_t> clamped_{0};
};

class PointMassEnv final : public Env {
 public:
  PointMassEnv();
  const EnvSpec& spec() const override { return spec_; }
  std::vector<double> Reset(Rng& rng) const override;
  StepResult Step(std::span<const double> state,
                  std::span<const double> action, int t) const override;
  std::unique_ptr<Env> Clone() const override;

  static constexpr double kWorkspace = 2.0;  // |p| <= 2 per axis
  static constexpr double kStartRange = 1.0;

 private:
  EnvSpec spec_;
};

class DoubleIntegratorEnv final : public Env {
 public:
  DoubleIntegratorEnv();
  const EnvSpec& spec() const override { return spec_; }
  std::vector<double> Reset(Rng& rng) const override;
  StepResult Step(std::span<const double> state,
                  std::span<const double> action, int t) const override;
  std::unique_ptr<Env> Clone() const override;

  static constexpr double kQx = 1.0;
  static constexpr double kQv = 0.1;
  static constexpr double kR = 0.1;

 private:
  EnvSpec spec_;
};

// throws std::invalid_argument for unknown ids
std::unique_ptr<Env> MakeEnv(std::string_view env_id);

// Finite-horizon discrete LQR for the double integrator (cost = -reward).
struct LqrSolution {
  std::vector<std::array<double, 2>> gains;  // u_t = -K_t x_t
  std::array<double, 4> p0;                  // cost-to-go matrix at t = 0
  double OptimalReturn(std::span<const double> x0) const;
};
LqrSolution SolveDoubleIntegratorLqr(const DoubleIntegratorEnv& env);

}  // namespace m3pc

#endif  // M3PC_ENVS_H_
