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

#include "m3pc/evaluation.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace m3pc {

Episode RunEpisode(const Env& env, const Policy& policy, Rng& env_rng,
                   Rng& policy_rng) {
  const EnvSpec& spec = env.spec();
  Episode ep;
  ep.state_dim = spec.state_dim;
  ep.action_dim = spec.action_dim;
  History history;
  std::vector<double> s = env.Reset(env_rng);
  history.Start(s, spec.state_dim, spec.action_dim);
  for (int t = 0; t < spec.horizon; ++t) {
    const std::vector<double> a = policy(history, policy_rng);
    StepResult r = env.Step(s, a, t);
    ep.states.insert(ep.states.end(), s.begin(), s.end());
    ep.actions.insert(ep.actions.end(), a.begin(), a.end());
    ep.rewards.push_back(r.reward);
    history.Append(a, r.reward, r.next_state);
    s = std::move(r.next_state);
    if (r.done) {
      ep.terminal = true;
      break;
    }
  }
  return ep;
}

ReturnStats SummarizeReturns(std::vector<double> returns) {
  ReturnStats s;
  s.returns = std::move(returns);
  if (s.returns.empty()) return s;
  s.mean = std::accumulate(s.returns.begin(), s.returns.end(), 0.0) /
           s.returns.size();
  double sq = 0.0;
  for (double r : s.returns) sq += (r - s.mean) * (r - s.mean);
  // sample statistic; a single episode has no spread to report
  s.stddev = s.returns.size() > 1 ? std::sqrt(sq / (s.returns.size() - 1)) : 0.0;
  return s;
}

ReturnStats EvaluatePlanner(const Env& env, ForwardPlanner& planner,
                            int episodes, uint64_t seed) {
  std::vector<double> returns;
  for (int e = 0; e < episodes; ++e) {
    Rng env_rng(SplitSeed(seed, SeedStream::kEnv, e));
    Rng policy_rng(SplitSeed(seed, SeedStream::kPlanner, e));
    Policy policy = [&](const History& h, Rng& rng) {
      return planner.Act(h, rng);
    };
    returns.push_back(RunEpisode(env, policy, env_rng, policy_rng).Return());
  }
  return SummarizeReturns(std::move(returns));
}

double MaxReturn(std::span<const Episode> episodes) {
  if (episodes.empty()) throw std::invalid_argument("MaxReturn: no episodes");
  double best = -std::numeric_limits<double>::infinity();
  for (const Episode& ep : episodes) best = std::max(best, ep.Return());
  return best;
}

}  // namespace m3pc
