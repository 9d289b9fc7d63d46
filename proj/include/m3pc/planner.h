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

// Forward planning for reward maximization: RCBC proposals, one batched
// forward-dynamics rollout, one batched reward/return prediction, a TD(lambda)
// utility per candidate and softmax selection.

#ifndef M3PC_PLANNER_H_
#define M3PC_PLANNER_H_

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "m3pc/btm.h"
#include "m3pc/envs.h"
#include "m3pc/rng.h"
#include "m3pc/trajectory.h"
#include "m3pc/value.h"

namespace m3pc {

enum class PlannerMode { kRcbcOnly, kM, kQ };
enum class Phase { kOffline, kOnline };
// How value guidance enters the utility in mode Q.
enum class QUtility {
  kFull,   // Eq. 3 with Q(s_{t+n}, a_{t+n}) in place of every g_{t+n}
  kQOnly,  // U = Q(s_t, a_t), intermediate rewards dropped
};

const char* PlannerModeName(PlannerMode mode);
PlannerMode ParsePlannerMode(std::string_view name);  // rcbc-only|m3pc-m|m3pc-q

struct PlannerConfig {
  double gamma = 0.99;
  double lambda = 0.6;
  int num_candidates = 625;
  double temperature = 1.0;  // xi
  PlannerMode mode = PlannerMode::kM;
  Phase phase = Phase::kOffline;
  QUtility q_utility = QUtility::kFull;
  bool decrement_rtg = true;
  double target_return_scale = 1.0;  // x max dataset return
  int max_batch = 1024;              // larger candidate sets are sub-batched

  void Validate() const;
};

void to_json(nlohmann::json& j, const PlannerConfig& c);
void from_json(const nlohmann::json& j, PlannerConfig& c);

// TD(lambda) utility. r holds r_t..r_{t+H-1}, g holds g_t..g_{t+H}; H = 0
// returns g_t.
double Utility(std::span<const double> r, std::span<const double> g,
               double gamma, double lambda);

// softmax(xi * U) with max subtraction; throws on NaN utilities
std::vector<double> SelectionProbabilities(std::span<const double> utilities,
                                           double temperature);

// Offline: P-weighted mean of the first-step actions. Online: the first-step
// action of a candidate drawn from P. first_actions is [N x action_dim].
std::vector<double> SelectAction(std::span<const double> probabilities,
                                 std::span<const double> first_actions,
                                 int action_dim, Phase phase, Rng& rng);

// What the agent has seen so far in the current episode, env units.
// states holds s_0..s_k (the last row is the current state); actions and
// rewards hold the k completed steps.
struct History {
  int state_dim = 0;
  int action_dim = 0;
  std::vector<double> states, actions, rewards;

  int steps() const { return static_cast<int>(rewards.size()); }
  std::span<const double> current_state() const {
    return {states.data() + states.size() - state_dim, size_t(state_dim)};
  }
  void Start(std::span<const double> s0, int state_dim, int action_dim);
  void Append(std::span<const double> action, double reward,
              std::span<const double> next_state);
};

// Evaluation segment: the last context_length observed steps, extended with
// future slots to the model length; slots past the env horizon are invalid.
struct DecisionContext {
  TrajectorySegment segment;
  int t_now = 1;    // 1-based position of the current step
  int horizon = 1;  // valid positions from t_now on (planned action steps)
};

// `target_return` seeds the RTG tokens; with `decrement` every token is the
// target minus the rewards collected before that step.
DecisionContext BuildDecisionContext(const History& history, int segment_length,
                                     int context_length, int env_horizon,
                                     double target_return, bool decrement);

struct CandidateSet {
  int n = 0;
  int horizon = 0;  // h action steps per candidate
  int state_dim = 0;
  int action_dim = 0;
  std::vector<double> actions;    // [N, h, action_dim]
  std::vector<double> states;     // [N, h, state_dim]; row 0 is the current
  std::vector<double> rewards;    // [N, h]
  std::vector<double> returns;    // [N, h], g or Q per mode
  std::vector<double> utilities;  // [N]
  std::vector<double> probabilities;  // [N]

  std::span<const double> action(int i, int step) const {
    return {actions.data() + (size_t(i) * horizon + step) * action_dim,
            size_t(action_dim)};
  }
};

class ForwardPlanner {
 public:
  // `value` is required in mode Q.
  ForwardPlanner(const Btm& model, const QvModel* value,
                 const PlannerConfig& config, const EnvSpec& env);

  const PlannerConfig& config() const { return config_; }
  void set_config(const PlannerConfig& config);
  void set_target_return(double target) { target_return_ = target; }
  double target_return() const { return target_return_; }

  // One decision: an executable action within the env bounds.
  std::vector<double> Act(const History& history, Rng& rng);

  // Algorithm steps, exposed for tests and benchmarks.
  DecisionContext Context(const History& history) const;
  CandidateSet Propose(const DecisionContext& ctx, int n, Rng& rng) const;
  void RolloutAndScore(const DecisionContext& ctx, CandidateSet& c) const;
  std::vector<double> Plan(const DecisionContext& ctx, Rng& rng,
                           CandidateSet* out = nullptr) const;

  // batched value evaluations made in mode Q
  int64_t value_batches() const { return value_batches_; }
  const CandidateSet& last_candidates() const { return last_; }

 private:
  std::vector<double> ClampToSpec(std::span<const double> a) const;

  const Btm& model_;
  const QvModel* value_;
  PlannerConfig config_;
  EnvSpec env_;
  double target_return_ = 0.0;
  mutable int64_t value_batches_ = 0;
  CandidateSet last_;
};

}  // namespace m3pc

#endif  // M3PC_PLANNER_H_
