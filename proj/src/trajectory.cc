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

#include "m3pc/trajectory.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace m3pc {

double Episode::Return() const {
  return std::accumulate(rewards.begin(), rewards.end(), 0.0);
}

void Episode::Validate() const {
  const size_t n = rewards.size();
  if (states.size() != n * state_dim || actions.size() != n * action_dim) {
    throw std::invalid_argument(
        "episode arrays disagree: " + std::to_string(n) + " rewards, " +
        std::to_string(states.size()) + " state values (dim " +
        std::to_string(state_dim) + "), " + std::to_string(actions.size()) +
        " action values (dim " + std::to_string(action_dim) + ")");
  }
}

std::vector<double> ComputeRtg(std::span<const double> rewards) {
  std::vector<double> rtg(rewards.size());
  double running = 0.0;
  for (size_t i = rewards.size(); i-- > 0;) {
    running += rewards[i];
    rtg[i] = running;
  }
  return rtg;
}

TrajectorySegment TrajectorySegment::Empty(int length, int state_dim,
                                           int action_dim) {
  TrajectorySegment s;
  s.length = length;
  s.state_dim = state_dim;
  s.action_dim = action_dim;
  s.states.assign(size_t(length) * state_dim, 0.0);
  s.rtgs.assign(length, 0.0);
  s.actions.assign(size_t(length) * action_dim, 0.0);
  s.rewards.assign(length, 0.0);
  s.timesteps.resize(length);
  std::iota(s.timesteps.begin(), s.timesteps.end(), 0);
  s.valid.assign(length, 0);
  return s;
}

int TrajectorySegment::NumValid() const {
  return static_cast<int>(std::count(valid.begin(), valid.end(), 1));
}

TrajectorySegment SliceSegment(const Episode& episode, int start, int length) {
  TrajectorySegment seg =
      TrajectorySegment::Empty(length, episode.state_dim, episode.action_dim);
  const std::vector<double> rtg = ComputeRtg(episode.rewards);
  for (int t = 0; t < length; ++t) {
    const int step = start + t;
    seg.timesteps[t] = step;
    if (step >= episode.length()) continue;
    seg.valid[t] = 1;
    std::copy_n(episode.state(step).begin(), episode.state_dim,
                seg.state(t).begin());
    std::copy_n(episode.action(step).begin(), episode.action_dim,
                seg.action(t).begin());
    seg.rewards[t] = episode.rewards[step];
    seg.rtgs[t] = rtg[step];
    if (step == episode.length() - 1) seg.episode_end = t;
  }
  seg.episode_terminal = episode.terminal;
  return seg;
}

NormalizationStats NormalizationStats::Identity(int state_dim) {
  NormalizationStats s;
  s.state_mean.assign(state_dim, 0.0);
  s.state_std.assign(state_dim, 1.0);
  return s;
}

NormalizationStats NormalizationStats::Compute(
    std::span<const Episode> episodes) {
  const int sd = episodes.empty() ? 0 : episodes.front().state_dim;
  NormalizationStats s = Identity(sd);
  int64_t count = 0;
  std::vector<double> sum(sd, 0.0), sq(sd, 0.0);
  double g_sum = 0.0, g_sq = 0.0, r_sum = 0.0, r_sq = 0.0;
  for (const Episode& ep : episodes) {
    const auto rtg = ComputeRtg(ep.rewards);
    for (int t = 0; t < ep.length(); ++t) {
      for (int d = 0; d < sd; ++d) {
        const double x = ep.state(t)[d];
        sum[d] += x;
        sq[d] += x * x;
      }
      g_sum += rtg[t];
      g_sq += rtg[t] * rtg[t];
      r_sum += ep.rewards[t];
      r_sq += ep.rewards[t] * ep.rewards[t];
      ++count;
    }
  }
  if (count == 0) return s;
  auto finish = [count](double total, double squares, double& mean,
                        double& std) {
    mean = total / count;
    const double var = std::max(squares / count - mean * mean, 0.0);
    std = std::max(std::sqrt(var), kMinStd);
  };
  for (int d = 0; d < sd; ++d) {
    finish(sum[d], sq[d], s.state_mean[d], s.state_std[d]);
  }
  finish(g_sum, g_sq, s.rtg_mean, s.rtg_std);
  finish(r_sum, r_sq, s.reward_mean, s.reward_std);
  return s;
}

}  // namespace m3pc
