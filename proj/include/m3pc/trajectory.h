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

#ifndef M3PC_TRAJECTORY_H_
#define M3PC_TRAJECTORY_H_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace m3pc {

// One environment episode, stored row-major. Return-to-go is derived, never
// stored.
struct Episode {
  int state_dim = 0;
  int action_dim = 0;
  std::vector<double> states;   // length x state_dim
  std::vector<double> actions;  // length x action_dim
  std::vector<double> rewards;  // length
  bool terminal = false;

  int length() const { return static_cast<int>(rewards.size()); }
  std::span<const double> state(int t) const {
    return {states.data() + int64_t(t) * state_dim, size_t(state_dim)};
  }
  std::span<const double> action(int t) const {
    return {actions.data() + int64_t(t) * action_dim, size_t(action_dim)};
  }
  double Return() const;
  // throws std::invalid_argument when array lengths disagree
  void Validate() const;
  bool operator==(const Episode&) const = default;
};

// Undiscounted suffix sums: g_t = sum_{k >= t} r_k.
std::vector<double> ComputeRtg(std::span<const double> rewards);

// Fixed-length window over an episode. Positions past the episode end are
// padding: flagged invalid, payload zero.
struct TrajectorySegment {
  int length = 0;  // T
  int state_dim = 0;
  int action_dim = 0;
  std::vector<double> states;     // T x state_dim
  std::vector<double> rtgs;       // T
  std::vector<double> actions;    // T x action_dim
  std::vector<double> rewards;    // T
  std::vector<int> timesteps;     // absolute index within the episode
  std::vector<unsigned char> valid;
  // position of the source episode's final step, -1 when outside the window
  int episode_end = -1;
  bool episode_terminal = false;

  static TrajectorySegment Empty(int length, int state_dim, int action_dim);
  int NumValid() const;
  std::span<double> state(int t) {
    return {states.data() + int64_t(t) * state_dim, size_t(state_dim)};
  }
  std::span<const double> state(int t) const {
    return {states.data() + int64_t(t) * state_dim, size_t(state_dim)};
  }
  std::span<double> action(int t) {
    return {actions.data() + int64_t(t) * action_dim, size_t(action_dim)};
  }
  std::span<const double> action(int t) const {
    return {actions.data() + int64_t(t) * action_dim, size_t(action_dim)};
  }
};

// Copies steps [start, start + length) of `episode`; steps beyond the end are
// padding.
TrajectorySegment SliceSegment(const Episode& episode, int start, int length);

// Per-dimension z-normalization statistics gathered from a dataset.
struct NormalizationStats {
  static constexpr double kMinStd = 1e-6;

  std::vector<double> state_mean;
  std::vector<double> state_std;
  double rtg_mean = 0.0;
  double rtg_std = 1.0;
  double reward_mean = 0.0;
  double reward_std = 1.0;

  static NormalizationStats Compute(std::span<const Episode> episodes);
  static NormalizationStats Identity(int state_dim);

  double NormalizeState(double x, int dim) const {
    return (x - state_mean[dim]) / state_std[dim];
  }
  double DenormalizeState(double z, int dim) const {
    return z * state_std[dim] + state_mean[dim];
  }
  double NormalizeRtg(double g) const { return (g - rtg_mean) / rtg_std; }
  double DenormalizeRtg(double z) const { return z * rtg_std + rtg_mean; }
  double NormalizeReward(double r) const {
    return (r - reward_mean) / reward_std;
  }
  double DenormalizeReward(double z) const {
    return z * reward_std + reward_mean;
  }
};

}  // namespace m3pc

#endif  // M3PC_TRAJECTORY_H_
