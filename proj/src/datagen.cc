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

#include "m3pc/datagen.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace m3pc {
namespace {

// point-mass PD gains toward the origin
constexpr double kExpertKp = 4.0, kExpertKd = 4.0;
constexpr double kMediumKp = 1.0, kMediumKd = 1.2;
constexpr double kMediumNoise = 0.03;
constexpr double kMediumGainSpread = 0.7;  // gains vary x0.5..x2
constexpr double kNearExpertNoise = 0.1;
// double integrator: medium scales the LQR gains down
constexpr double kDiMediumGainScale = 0.5;

const LqrSolution& DiLqr() {
  static const LqrSolution sol = SolveDoubleIntegratorLqr(DoubleIntegratorEnv());
  return sol;
}

}  // namespace

const char* PolicyKindName(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kExpert:
      return "expert";
    case PolicyKind::kMedium:
      return "medium";
    case PolicyKind::kRandom:
      return "random";
  }
  return "?";
}

std::vector<double> BehaviorPolicy::Act(const Env& env,
                                        std::span<const double> state, int t,
                                        Rng& rng) const {
  const EnvSpec& spec = env.spec();
  std::vector<double> a(spec.action_dim, 0.0);
  if (kind == PolicyKind::kRandom) {
    for (int i = 0; i < spec.action_dim; ++i) {
      std::uniform_real_distribution<double> u(spec.action_low[i],
                                               spec.action_high[i]);
      a[i] = u(rng);
    }
    return a;
  }
  if (spec.id == "pm-v1") {
    const bool expert = kind == PolicyKind::kExpert;
    const double kp = expert ? kExpertKp : kMediumKp;
    const double kd = expert ? kExpertKd : kMediumKd;
    for (int i = 0; i < 2; ++i) {
      a[i] = -kp * gain_scale[0] * state[i] - kd * gain_scale[1] * state[2 + i];
    }
  } else {
    const auto& k = DiLqr().gains[std::min(t, int(DiLqr().gains.size()) - 1)];
    const double scale = kind == PolicyKind::kExpert ? 1.0 : kDiMediumGainScale;
    a[0] = -scale * (gain_scale[0] * k[0] * state[0] +
                     gain_scale[1] * k[1] * state[1]);
  }
  if (noise_scale > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_scale);
    for (double& v : a) v += noise(rng);
  }
  for (int i = 0; i < spec.action_dim; ++i) {
    a[i] = std::clamp(a[i], spec.action_low[i], spec.action_high[i]);
  }
  return a;
}

PolicyMix NamedPolicyMix(std::string_view name) {
  PolicyMix mix;
  mix.name = std::string(name);
  if (name == "expert") {
    mix.entries = {{{PolicyKind::kExpert, 0.0}, 1.0}};
  } else if (name == "medium") {
    mix.entries = {{{PolicyKind::kMedium, kMediumNoise, kMediumGainSpread}, 1.0}};
  } else if (name == "random") {
    mix.entries = {{{PolicyKind::kRandom, 0.0}, 1.0}};
  } else if (name == "medium-replay") {
    mix.entries = {{{PolicyKind::kRandom, 0.0}, 0.3},
                   {{PolicyKind::kMedium, kMediumNoise, kMediumGainSpread}, 0.5},
                   {{PolicyKind::kExpert, kNearExpertNoise}, 0.2}};
  } else {
    throw std::invalid_argument("unknown policy mix '" + std::string(name) +
                                "'");
  }
  return mix;
}

Episode RolloutEpisode(const Env& env, const BehaviorPolicy& policy,
                       Rng& rng) {
  const EnvSpec& spec = env.spec();
  Episode ep;
  ep.state_dim = spec.state_dim;
  ep.action_dim = spec.action_dim;
  std::vector<double> s = env.Reset(rng);
  BehaviorPolicy pi = policy;
  if (pi.gain_spread > 0.0) {
    std::uniform_real_distribution<double> u(-pi.gain_spread, pi.gain_spread);
    for (double& g : pi.gain_scale) g = std::exp(u(rng));
  }
  for (int t = 0; t < spec.horizon; ++t) {
    const std::vector<double> a = pi.Act(env, s, t, rng);
    StepResult step = env.Step(s, a, t);
    ep.states.insert(ep.states.end(), s.begin(), s.end());
    ep.actions.insert(ep.actions.end(), a.begin(), a.end());
    ep.rewards.push_back(step.reward);
    s = std::move(step.next_state);
    if (step.done) {
      ep.terminal = true;
      break;
    }
  }
  return ep;
}

Dataset GenerateDataset(const Env& env, const PolicyMix& mix, int n_episodes,
                        uint64_t seed) {
  Dataset ds;
  ds.header.state_dim = env.spec().state_dim;
  ds.header.action_dim = env.spec().action_dim;
  ds.header.env_id = env.spec().id;
  ds.header.version = 1;
  nlohmann::json entries = nlohmann::json::array();
  double total_weight = 0.0;
  for (const auto& e : mix.entries) {
    total_weight += e.weight;
    entries.push_back({{"policy", PolicyKindName(e.policy.kind)},
                       {"noise", e.policy.noise_scale},
                       {"gain_spread", e.policy.gain_spread},
                       {"weight", e.weight}});
  }
  ds.header.provenance = {{"generator", "m3pc gen-data"},
                          {"policy_mix", mix.name},
                          {"mix", entries},
                          {"n_episodes", n_episodes},
                          {"seed", seed}};
  for (int i = 0; i < n_episodes; ++i) {
    Rng rng(SplitSeed(seed, SeedStream::kData, i));
    std::uniform_real_distribution<double> u(0.0, total_weight);
    double pick = u(rng);
    const PolicyMixEntry* chosen = &mix.entries.back();
    for (const auto& e : mix.entries) {
      if (pick < e.weight) {
        chosen = &e;
        break;
      }
      pick -= e.weight;
    }
    ds.episodes.push_back(RolloutEpisode(env, chosen->policy, rng));
  }
  return ds;
}

double RelevantDistance(std::span<const double> a, std::span<const double> b,
                        std::span<const unsigned char> relevance) {
  double sq = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    if (!relevance.empty() && !relevance[i]) continue;
    sq += (a[i] - b[i]) * (a[i] - b[i]);
  }
  return std::sqrt(sq);
}

double NearestDatasetDistance(std::span<const Episode> episodes,
                              std::span<const double> goal,
                              std::span<const unsigned char> relevance) {
  double best = std::numeric_limits<double>::infinity();
  for (const Episode& ep : episodes) {
    for (int t = 0; t < ep.length(); ++t) {
      best = std::min(best, RelevantDistance(ep.state(t), goal, relevance));
    }
  }
  return best;
}

double MedianNearestNeighborSpacing(std::span<const Episode> episodes,
                                    std::span<const unsigned char> relevance,
                                    int max_queries) {
  std::vector<std::span<const double>> states;
  for (const Episode& ep : episodes) {
    for (int t = 0; t < ep.length(); ++t) states.push_back(ep.state(t));
  }
  if (states.size() < 2) return 0.0;
  const size_t stride = std::max<size_t>(1, states.size() / max_queries);
  std::vector<double> nearest;
  for (size_t q = 0; q < states.size(); q += stride) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < states.size(); ++j) {
      if (j == q) continue;
      best = std::min(best, RelevantDistance(states[q], states[j], relevance));
    }
    nearest.push_back(best);
  }
  std::nth_element(nearest.begin(), nearest.begin() + nearest.size() / 2,
                   nearest.end());
  return nearest[nearest.size() / 2];
}

GuidanceTrajectory CraftGoalTrajectory(const Env& env,
                                       std::span<const Episode> dataset,
                                       GoalKind kind,
                                       std::span<const double> start,
                                       int steps) {
  if (env.spec().id != "pm-v1") {
    throw std::invalid_argument("goal crafting is defined for pm-v1");
  }
  if (steps < 1) throw std::invalid_argument("guidance needs >= 1 step");
  GuidanceTrajectory g;
  g.relevance = {1, 1, 0, 0};
  g.tolerance = {0.15, 0.15, 0.0, 0.0};
  std::vector<double> goal_pos(2);
  if (kind == GoalKind::kOutOfDistribution) {
    goal_pos = {1.8, 1.8};
    g.out_of_distribution = true;
  } else {
    // dataset state nearest a nominal mid-workspace point
    const std::vector<double> nominal = {0.5, 0.4, 0.0, 0.0};
    double best = std::numeric_limits<double>::infinity();
    goal_pos = {nominal[0], nominal[1]};
    for (const Episode& ep : dataset) {
      for (int t = 0; t < ep.length(); ++t) {
        const double d = RelevantDistance(ep.state(t), nominal, g.relevance);
        if (d < best) {
          best = d;
          goal_pos = {ep.state(t)[0], ep.state(t)[1]};
        }
      }
    }
  }
  g.goal = {goal_pos[0], goal_pos[1], 0.0, 0.0};
  const double dt = env.spec().dt;
  const double duration = steps * dt;
  for (int k = 0; k <= steps; ++k) {
    const double u = double(k) / steps;
    const double shape = u * u * (3.0 - 2.0 * u);
    const double rate = 6.0 * u * (1.0 - u) / duration;
    std::vector<double> s(4);
    for (int i = 0; i < 2; ++i) {
      const double delta = goal_pos[i] - start[i];
      s[i] = std::clamp(start[i] + delta * shape, env.spec().state_low[i],
                        env.spec().state_high[i]);
      s[2 + i] = delta * rate;
    }
    g.states.push_back(std::move(s));
  }
  return g;
}

}  // namespace m3pc
