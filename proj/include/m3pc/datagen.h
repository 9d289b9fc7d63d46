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

// Scripted behavior policies, dataset generation and goal-trajectory
// crafting for the toy environments.

#ifndef M3PC_DATAGEN_H_
#define M3PC_DATAGEN_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "m3pc/dataset_io.h"
#include "m3pc/envs.h"
#include "m3pc/rng.h"
#include "m3pc/trajectory.h"

namespace m3pc {

enum class PolicyKind { kExpert, kMedium, kRandom };

const char* PolicyKindName(PolicyKind kind);

struct BehaviorPolicy {
  PolicyKind kind = PolicyKind::kMedium;
  double noise_scale = 0.0;  // Gaussian action noise, env units
  // per-episode log-uniform jitter of the two feedback gains, drawn by
  // RolloutEpisode; 0 keeps the nominal gains
  double gain_spread = 0.0;
  double gain_scale[2] = {1.0, 1.0};  // set per episode

  std::vector<double> Act(const Env& env, std::span<const double> state,
                          int t, Rng& rng) const;
};

struct PolicyMixEntry {
  BehaviorPolicy policy;
  double weight = 1.0;
};

struct PolicyMix {
  std::string name;
  std::vector<PolicyMixEntry> entries;
};

// "expert", "medium", "random", or "medium-replay"
// (random 30% / medium 50% / near-expert 20%).
PolicyMix NamedPolicyMix(std::string_view name);

Episode RolloutEpisode(const Env& env, const BehaviorPolicy& policy, Rng& rng);

Dataset GenerateDataset(const Env& env, const PolicyMix& mix, int n_episodes,
                        uint64_t seed);

// A rough state path toward a goal, in env units.
struct GuidanceTrajectory {
  std::vector<std::vector<double>> states;
  std::vector<double> goal;
  std::vector<unsigned char> relevance;  // dims the goal constrains
  std::vector<double> tolerance;         // per dim, > 0 where relevant
  bool out_of_distribution = false;
};

// Distance between states over relevant dims only.
double RelevantDistance(std::span<const double> a, std::span<const double> b,
                        std::span<const unsigned char> relevance);

// Median over a deterministic subsample of dataset states of the distance to
// the nearest other dataset state (relevant dims only).
double MedianNearestNeighborSpacing(std::span<const Episode> episodes,
                                    std::span<const unsigned char> relevance,
                                    int max_queries = 400);

// Smallest distance from `goal` to any dataset state (brute force).
double NearestDatasetDistance(std::span<const Episode> episodes,
                              std::span<const double> goal,
                              std::span<const unsigned char> relevance);

enum class GoalKind { kInDistribution, kOutOfDistribution };

// Point-mass guidance: a straight path from `start` to the goal position with
// a smoothstep speed profile. In-distribution goals are taken from a
// dataset state; the out-of-distribution goal is a workspace corner.
GuidanceTrajectory CraftGoalTrajectory(const Env& env,
                                       std::span<const Episode> dataset,
                                       GoalKind kind,
                                       std::span<const double> start,
                                       int steps);

}  // namespace m3pc

#endif  // M3PC_DATAGEN_H_
