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

// Standalone transition-wise value estimator: Q(s, a) and V(s) MLPs trained
// with expectile regression, each with a slowly tracking target copy.

#ifndef M3PC_VALUE_H_
#define M3PC_VALUE_H_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "m3pc/optim.h"
#include "m3pc/rng.h"
#include "m3pc/tensor.h"
#include "m3pc/trajectory.h"

namespace m3pc {

struct ValueConfig {
  int hidden = 64;
  double gamma = 0.99;
  double expectile = 0.7;
  double lr = 3e-4;
  double target_rate = 0.005;  // EMA step toward live params
};

void to_json(nlohmann::json& j, const ValueConfig& c);
void from_json(const nlohmann::json& j, ValueConfig& c);

// Transitions in env units. Terminal transitions bootstrap with V = 0.
struct TransitionBatch {
  int size = 0;
  int state_dim = 0;
  int action_dim = 0;
  std::vector<double> states, actions, rewards, next_states;
  std::vector<unsigned char> terminal;
};

// Consecutive valid cells of each segment, plus the final step of an episode
// as a terminal transition.
TransitionBatch TransitionsFromSegments(
    std::span<const TrajectorySegment> segments);

// mean of |tau - 1(u < 0)| u^2 over u = q - v
Tensor ExpectileLoss(const Tensor& q, const Tensor& v, double tau);

class QvModel {
 public:
  QvModel(int state_dim, int action_dim, const ValueConfig& config,
          uint64_t seed);

  const ValueConfig& config() const { return config_; }
  ParameterList& params() { return params_; }
  const ParameterList& params() const { return params_; }
  // target copies, aligned with params()
  ParameterList& target_params() { return target_params_; }
  const ParameterList& target_params() const { return target_params_; }

  // Normalization applied to network inputs/outputs. Values are predicted in
  // units of value_scale so networks stay O(1).
  NormalizationStats stats = NormalizationStats::Identity(0);
  double value_scale = 1.0;
  // sets stats and value_scale from a dataset
  void FitScales(std::span<const Episode> episodes);

  // [N] in env units
  Tensor Q(std::span<const double> states, std::span<const double> actions,
           bool target) const;
  Tensor V(std::span<const double> states, bool target) const;

  // r + gamma * V_target(s'), with V = 0 after terminal transitions
  std::vector<double> QTargets(const TransitionBatch& batch) const;
  // squared TD error against the target V
  Tensor QLoss(const TransitionBatch& batch) const;
  // expectile regression of V toward the target Q
  Tensor VLoss(const TransitionBatch& batch) const;

  // one optimizer step on both losses; returns {q_loss, v_loss}
  std::pair<double, double> TrainStep(const TransitionBatch& batch);
  void UpdateTargets(double rate);

  // batched, no-grad, env units
  std::vector<double> QEval(std::span<const double> states,
                            std::span<const double> actions) const;

  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  Adam& optimizer() { return *optimizer_; }

 private:
  struct Mlp {
    Tensor w1, b1, w2, b2, w3, b3;
  };
  Mlp MakeMlp(int in, const std::string& prefix, Rng& rng);
  Tensor RunMlp(const Mlp& mlp, const Tensor& x) const;
  Tensor StateInput(std::span<const double> states) const;

  int state_dim_, action_dim_;
  ValueConfig config_;
  ParameterList params_, target_params_;
  Mlp q_, v_, q_target_, v_target_;
  std::unique_ptr<Adam> optimizer_;
};

}  // namespace m3pc

#endif  // M3PC_VALUE_H_
