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

// Episode rollouts and return statistics.

#ifndef M3PC_EVALUATION_H_
#define M3PC_EVALUATION_H_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "m3pc/envs.h"
#include "m3pc/planner.h"
#include "m3pc/rng.h"
#include "m3pc/trajectory.h"

namespace m3pc {

using Policy = std::function<std::vector<double>(const History&, Rng&)>;

// Rolls out one episode: env_rng draws the initial state, policy_rng is
// handed to the policy.
Episode RunEpisode(const Env& env, const Policy& policy, Rng& env_rng,
                   Rng& policy_rng);

struct ReturnStats {
  std::vector<double> returns;
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1)
};

ReturnStats SummarizeReturns(std::vector<double> returns);

// Evaluates `planner` greedily over `episodes` episodes. Episode e of seed s
// uses initial-state stream SplitSeed(s, kEnv, e), so different planners see
// identical start states.
ReturnStats EvaluatePlanner(const Env& env, ForwardPlanner& planner,
                            int episodes, uint64_t seed);

double MaxReturn(std::span<const Episode> episodes);

}  // namespace m3pc

#endif  // M3PC_EVALUATION_H_
