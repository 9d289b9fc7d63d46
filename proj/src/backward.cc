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

#include "m3pc/backward.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "m3pc/masking.h"
#include "m3pc/tensor.h"

namespace m3pc {

void GoalSpec::Validate() const {
  if (goal.empty()) throw std::invalid_argument("goal: empty goal vector");
  if (relevance.size() != goal.size() || tolerance.size() != goal.size()) {
    throw std::invalid_argument(
        "goal: relevance and tolerance must match the goal dimension");
  }
  bool any = false;
  for (size_t i = 0; i < goal.size(); ++i) {
    if (!relevance[i]) continue;
    any = true;
    if (!(tolerance[i] > 0.0)) {
      throw std::invalid_argument("goal: tolerance must be > 0 on dim " +
                                  std::to_string(i));
    }
  }
  if (!any) throw std::invalid_argument("goal: no relevant dimension");
}

bool GoalSpec::Reached(std::span<const double> state) const {
  for (size_t i = 0; i < goal.size(); ++i) {
    if (relevance[i] && std::abs(state[i] - goal[i]) > tolerance[i]) {
      return false;
    }
  }
  return true;
}

double GoalSpec::Distance(std::span<const double> state) const {
  return RelevantDistance(state, goal, relevance);
}

void to_json(nlohmann::json& j, const GoalFile& g) {
  std::vector<int> rel(g.spec.relevance.begin(), g.spec.relevance.end());
  j = {{"goal", g.spec.goal},
       {"relevance", rel},
       {"tolerance", g.spec.tolerance},
       {"subgoal_interval", g.subgoal_interval}};
  if (!g.guidance.empty()) j["guidance"] = g.guidance;
}

void from_json(const nlohmann::json& j, GoalFile& g) {
  g.spec.goal = j.at("goal").get<std::vector<double>>();
  g.spec.relevance.clear();
  for (const auto& v : j.at("relevance")) {
    g.spec.relevance.push_back(v.is_boolean() ? v.get<bool>()
                                              : v.get<int>() != 0);
  }
  g.spec.tolerance = j.at("tolerance").get<std::vector<double>>();
  g.subgoal_interval = j.value("subgoal_interval", 4);
  g.guidance.clear();
  if (j.contains("guidance")) {
    g.guidance = j.at("guidance").get<std::vector<std::vector<double>>>();
  }
  g.spec.Validate();
  for (const auto& s : g.guidance) {
    if (s.size() != g.spec.goal.size()) {
      throw std::invalid_argument("goal: guidance state has wrong dimension");
    }
  }
  if (g.subgoal_interval < 1) {
    throw std::invalid_argument("goal: subgoal_interval must be >= 1");
  }
}

GoalFile ReadGoalFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open goal file " + path.string());
  try {
    return nlohmann::json::parse(in).get<GoalFile>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("goal file " + path.string() + ": " +
                                e.what());
  }
}

void WriteGoalFile(const std::filesystem::path& path, const GoalFile& g) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << nlohmann::json(g).dump(2) << '\n';
}

GoalFile GoalFileFromGuidance(const GuidanceTrajectory& g, int interval) {
  GoalFile f;
  f.spec.goal = g.goal;
  f.spec.relevance = g.relevance;
  f.spec.tolerance = g.tolerance;
  f.guidance = g.states;
  f.subgoal_interval = interval;
  return f;
}

SubgoalSchedule::SubgoalSchedule(std::vector<std::vector<double>> path,
                                 GoalSpec final_goal, int interval, int budget)
    : path_(std::move(path)), final_(std::move(final_goal)) {
  if (path_.empty()) throw std::invalid_argument("subgoals: empty path");
  if (interval < 1) throw std::invalid_argument("subgoals: interval < 1");
  final_.Validate();
  budget_ = budget > 0 ? budget : 3 * interval;
  const int n = static_cast<int>(path_.size());
  for (int i = interval - 1; i < n; i += interval) indices_.push_back(i);
  if (indices_.empty() || indices_.back() != n - 1) indices_.push_back(n - 1);
}

GoalSpec SubgoalSchedule::Active() const {
  if (finished() || pointer_ == int(indices_.size()) - 1) return final_;
  GoalSpec g = final_;
  g.goal = path_[indices_[pointer_]];
  return g;
}

bool SubgoalSchedule::Observe(std::span<const double> state) {
  if (finished()) return false;
  ++spent_;
  if (Active().Reached(state)) {
    ++by_reach_;
  } else if (spent_ >= budget_ && pointer_ + 1 < int(indices_.size())) {
    // the final goal never times out
    ++by_budget_;
  } else {
    return false;
  }
  ++pointer_;
  spent_ = 0;
  return true;
}

DecisionContext BuildGoalContext(const History& h, int T, int context_length,
                                 std::span<const double> goal) {
  const int k = h.steps();
  const int start = std::max(0, k - (context_length - 1));
  DecisionContext ctx;
  ctx.t_now = k - start + 1;
  if (ctx.t_now > T - 1) {
    throw std::invalid_argument("goal context needs a free slot for the goal");
  }
  ctx.horizon = T - ctx.t_now + 1;
  ctx.segment = TrajectorySegment::Empty(T, h.state_dim, h.action_dim);
  TrajectorySegment& seg = ctx.segment;
  for (int p = 0; p < T; ++p) {
    const int step = start + p;
    seg.timesteps[p] = step;
    seg.valid[p] = 1;
    if (step <= k) {
      std::copy_n(h.states.begin() + size_t(step) * h.state_dim, h.state_dim,
                  seg.state(p).begin());
    }
    if (step < k) {
      std::copy_n(h.actions.begin() + size_t(step) * h.action_dim,
                  h.action_dim, seg.action(p).begin());
    }
  }
  std::copy(goal.begin(), goal.end(), seg.state(T - 1).begin());
  return ctx;
}

namespace {

std::vector<double> Clamp(std::vector<double> a, const EnvSpec& env) {
  for (size_t k = 0; k < a.size(); ++k) {
    a[k] = std::clamp(a[k], env.action_low[k], env.action_high[k]);
  }
  return a;
}

BtmOutput RunMask(const Btm& model, MaskKind kind, const DecisionContext& ctx) {
  NoGradGuard no_grad;
  const std::vector<TrajectorySegment> one = {ctx.segment};
  const std::vector<MaskPattern> mask = {
      NamedMask(kind, ctx.t_now, ctx.segment.length)};
  return model.Forward(MakeBatch(one, mask, model.stats));
}

}  // namespace

BackwardPlanner::BackwardPlanner(const Btm& model, const EnvSpec& env)
    : model_(model), env_(env) {}

DecisionContext BackwardPlanner::Context(const History& history,
                                         std::span<const double> goal) const {
  return BuildGoalContext(history, model_.config().segment_length,
                          model_.config().context_length, goal);
}

std::vector<std::vector<double>> BackwardPlanner::InferPath(
    const DecisionContext& ctx) const {
  const BtmOutput out = RunMask(model_, MaskKind::kPi, ctx);
  const int T = ctx.segment.length, sd = ctx.segment.state_dim;
  std::vector<std::vector<double>> path;
  for (int p = ctx.t_now; p < T - 1; ++p) {
    std::vector<double> s(sd);
    for (int k = 0; k < sd; ++k) {
      s[k] = model_.stats.DenormalizeState(out.state.at(int64_t(p) * sd + k),
                                           k);
    }
    path.push_back(std::move(s));
  }
  return path;
}

std::vector<std::vector<double>> BackwardPlanner::InferActions(
    const DecisionContext& ctx,
    const std::vector<std::vector<double>>& path) const {
  DecisionContext filled = ctx;
  for (size_t i = 0; i < path.size(); ++i) {
    std::copy(path[i].begin(), path[i].end(),
              filled.segment.state(ctx.t_now + int(i)).begin());
  }
  const BtmOutput out = RunMask(model_, MaskKind::kId, filled);
  const int T = ctx.segment.length, ad = ctx.segment.action_dim;
  std::vector<std::vector<double>> actions;
  for (int p = ctx.t_now - 1; p < T; ++p) {
    std::vector<double> a(ad);
    for (int k = 0; k < ad; ++k) a[k] = out.action_mean.at(int64_t(p) * ad + k);
    actions.push_back(std::move(a));
  }
  return actions;
}

std::vector<double> BackwardPlanner::Act(const History& history,
                                         std::span<const double> goal) {
  const DecisionContext ctx = Context(history, goal);
  last_path_ = InferPath(ctx);
  return Clamp(InferActions(ctx, last_path_).front(), env_);
}

GoalReachingBaseline::GoalReachingBaseline(const Btm& model,
                                           const EnvSpec& env)
    : model_(model), env_(env) {}

std::vector<double> GoalReachingBaseline::Act(
    const History& history, std::span<const double> goal) const {
  const DecisionContext ctx =
      BuildGoalContext(history, model_.config().segment_length,
                       model_.config().context_length, goal);
  const BtmOutput out = RunMask(model_, MaskKind::kGr, ctx);
  const int ad = ctx.segment.action_dim;
  std::vector<double> a(ad);
  for (int k = 0; k < ad; ++k) {
    a[k] = out.action_mean.at(int64_t(ctx.t_now - 1) * ad + k);
  }
  return Clamp(std::move(a), env_);
}

GoalEpisodeResult RunGoalEpisode(
    const Env& env, const GoalPolicy& policy, std::span<const double> start,
    const std::vector<std::vector<double>>& guidance, const GoalSpec& goal,
    int interval) {
  const EnvSpec& spec = env.spec();
  std::vector<std::vector<double>> path = guidance;
  if (path.empty()) path.push_back(goal.goal);
  SubgoalSchedule schedule(std::move(path), goal, interval);
  History h;
  h.Start(start, spec.state_dim, spec.action_dim);
  GoalEpisodeResult r;
  r.min_distance = goal.Distance(start);
  for (int t = 0; t < spec.horizon; ++t) {
    const GoalSpec active = schedule.Active();
    const std::vector<double> a = policy(h, active.goal);
    StepResult step = env.Step(h.current_state(), a, t);
    h.Append(a, step.reward, step.next_state);
    schedule.Observe(step.next_state);
    r.min_distance = std::min(r.min_distance, goal.Distance(step.next_state));
    if (goal.Reached(step.next_state)) {
      r.success = true;
      r.steps_to_goal = t + 1;
      break;
    }
    if (step.done) break;
  }
  r.final_distance = goal.Distance(h.current_state());
  r.subgoals_reached = schedule.advances_by_reach();
  r.subgoals_timed_out = schedule.advances_by_budget();
  return r;
}

}  // namespace m3pc
