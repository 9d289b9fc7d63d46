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

// Backward planning toward a goal state: path inference with the PI mask,
// then inverse dynamics with the ID mask; a subgoal scheduler over a rough
// guidance path; and the single-pass GR baseline.

#ifndef M3PC_BACKWARD_H_
#define M3PC_BACKWARD_H_

#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"
#include "m3pc/btm.h"
#include "m3pc/datagen.h"
#include "m3pc/envs.h"
#include "m3pc/planner.h"
#include "m3pc/rng.h"

namespace m3pc {

struct GoalSpec {
  std::vector<double> goal;               // env units, full state
  std::vector<unsigned char> relevance;   // dims that must match
  std::vector<double> tolerance;          // per dim, > 0 where relevant

  void Validate() const;
  // every relevant dim within its tolerance
  bool Reached(std::span<const double> state) const;
  double Distance(std::span<const double> state) const;
};

// Goal file: {"goal": [...], "relevance": [...], "tolerance": [...],
// optional "guidance": [[state], ...], optional "subgoal_interval": k}.
struct GoalFile {
  GoalSpec spec;
  std::vector<std::vector<double>> guidance;
  int subgoal_interval = 4;
};

void to_json(nlohmann::json& j, const GoalFile& g);
void from_json(const nlohmann::json& j, GoalFile& g);
GoalFile ReadGoalFile(const std::filesystem::path& path);
void WriteGoalFile(const std::filesystem::path& path, const GoalFile& g);

GoalFile GoalFileFromGuidance(const GuidanceTrajectory& g, int interval);

// Every interval-th state of a guidance path becomes a goal in turn. The
// last state is always included (end-inclusive): length 10, interval 5 gives
// indices {4, 9}. The active goal advances when reached or after `budget`
// env steps spent on it (default 3 x interval).
class SubgoalSchedule {
 public:
  SubgoalSchedule(std::vector<std::vector<double>> path, GoalSpec final_goal,
                  int interval, int budget = -1);

  const std::vector<int>& indices() const { return indices_; }
  int active_index() const { return pointer_; }  // into indices()
  bool finished() const { return pointer_ >= int(indices_.size()); }
  // goal for the active subgoal: the path state there, with the final
  // goal's relevance and tolerance; the final goal itself at the end
  GoalSpec Active() const;

  // Feed the state reached after one env step. Returns true if the active
  // subgoal advanced (reached or out of budget).
  bool Observe(std::span<const double> state);
  int advances_by_reach() const { return by_reach_; }
  int advances_by_budget() const { return by_budget_; }

 private:
  std::vector<std::vector<double>> path_;
  GoalSpec final_;
  std::vector<int> indices_;
  int budget_;
  int pointer_ = 0;
  int spent_ = 0;
  int by_reach_ = 0, by_budget_ = 0;
};

// Segment for a goal-directed decision: the last context_length observed
// steps (states and actions only), the current state at t_now and the goal
// in the final slot.
DecisionContext BuildGoalContext(const History& history, int segment_length,
                                 int context_length,
                                 std::span<const double> goal);

class BackwardPlanner {
 public:
  BackwardPlanner(const Btm& model, const EnvSpec& env);

  DecisionContext Context(const History& history,
                          std::span<const double> goal) const;
  // one PI pass: states for slots t_now+1 .. T-1, [T - t_now - 1][state_dim]
  std::vector<std::vector<double>> InferPath(const DecisionContext& ctx) const;
  // one ID pass over the context, current state, waypoints and goal; the
  // actions for every slot from t_now on, [T - t_now + 1][action_dim]
  std::vector<std::vector<double>> InferActions(
      const DecisionContext& ctx,
      const std::vector<std::vector<double>>& path) const;
  // both passes; executes the first inferred action (clamped)
  std::vector<double> Act(const History& history,
                          std::span<const double> goal);

  const std::vector<std::vector<double>>& last_path() const {
    return last_path_;
  }

 private:
  const Btm& model_;
  EnvSpec env_;
  std::vector<std::vector<double>> last_path_;
};

// Single GR-mask pass: current state and goal visible, a_{t_now} inpainted.
class GoalReachingBaseline {
 public:
  GoalReachingBaseline(const Btm& model, const EnvSpec& env);
  std::vector<double> Act(const History& history,
                          std::span<const double> goal) const;

 private:
  const Btm& model_;
  EnvSpec env_;
};

using GoalPolicy = std::function<std::vector<double>(
    const History&, std::span<const double> goal)>;

struct GoalEpisodeResult {
  bool success = false;  // final goal reached at any step
  int steps_to_goal = -1;
  double final_distance = 0.0;
  double min_distance = 0.0;
  int subgoals_reached = 0;
  int subgoals_timed_out = 0;
};

// Rolls one episode from `start`, steering through the schedule built from
// `guidance` until the final goal is reached or the env horizon ends.
GoalEpisodeResult RunGoalEpisode(const Env& env, const GoalPolicy& policy,
                                 std::span<const double> start,
                                 const std::vector<std::vector<double>>& guidance,
                                 const GoalSpec& goal, int interval);

}  // namespace m3pc

#endif  // M3PC_BACKWARD_H_
