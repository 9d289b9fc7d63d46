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

// Offline-to-online finetuning: explore with the online-phase planner, mix
// offline and online segments in every batch, evaluate greedily on a fixed
// cadence. Also the exploration-quality comparison against Gaussian noise of
// matched spread.

#ifndef M3PC_O2O_H_
#define M3PC_O2O_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "json.hpp"
#include "m3pc/btm.h"
#include "m3pc/envs.h"
#include "m3pc/planner.h"
#include "m3pc/replay_buffer.h"
#include "m3pc/training.h"
#include "m3pc/value.h"

namespace m3pc {

struct O2OConfig {
  int64_t env_steps = 20000;           // online budget
  double updates_per_env_step = 0.5;   // gradient steps per collected step
  int64_t eval_every = 2000;           // env steps between greedy evals
  int eval_episodes = 10;
  int buffer_capacity = 1000;          // online episodes kept
  double offline_fraction = 0.5;       // share of each batch from the dataset
  double lr = 1e-4;                    // constant, no schedule online

  void Validate() const;
};

void to_json(nlohmann::json& j, const O2OConfig& c);
void from_json(const nlohmann::json& j, O2OConfig& c);

// Draws each segment of a batch from the offline store with probability
// `offline_fraction`, else from the online store (offline while the online
// store is still empty).
class MixedSampler {
 public:
  MixedSampler(const ReplayBuffer& offline, const ReplayBuffer& online,
               double offline_fraction);
  TrajectorySegment Sample(int segment_length, Rng& rng,
                           bool* from_offline = nullptr) const;

 private:
  const ReplayBuffer& offline_;
  const ReplayBuffer& online_;
  double offline_fraction_;
};

struct O2ORow {
  int64_t env_steps = 0;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
  double explore_return_mean = 0.0;  // since the previous row
  double entropy = 0.0;              // last training step
  double sigma = 0.0;
};

// CSV with header env_steps,eval_return_mean,eval_return_std,
// explore_return_mean,entropy,sigma
class O2OMetricsWriter {
 public:
  explicit O2OMetricsWriter(std::ostream* out);
  void Write(const O2ORow& row);

 private:
  std::ostream* out_;
};

struct FinetuneOptions {
  std::ostream* metrics = nullptr;
  std::optional<std::filesystem::path> checkpoint_path;
  nlohmann::json checkpoint_extra;
  std::optional<double> initial_log_sigma;  // resume the dual variable
  std::function<void(const O2ORow&)> on_eval;
};

struct FinetuneResult {
  std::vector<O2ORow> rows;              // first row: before any update
  std::vector<double> explore_returns;   // one per collected episode
  int64_t env_steps = 0;
  int64_t grad_steps = 0;
  int dropped_episodes = 0;
  int64_t offline_draws = 0, online_draws = 0;
  double final_log_sigma = 0.0;
};

// `planner` carries the mode and candidate count; exploration runs it in the
// online phase, evaluation in the offline phase, both conditioned on
// `target_return`. `train` supplies batch size, beta and the dual settings.
// Evaluation episode e of every eval uses SplitSeed(seed, kEvaluation, e).
FinetuneResult Finetune(Btm& model, QvModel* value, const Env& env,
                        std::span<const Episode> offline,
                        const PlannerConfig& planner, double target_return,
                        const TrainConfig& train, const O2OConfig& config,
                        uint64_t seed, const FinetuneOptions& options = {});

struct RolloutStats {
  std::vector<double> returns;
  std::vector<double> bin_edges;  // bins + 1 entries
  std::vector<int> histogram;     // sums to returns.size()
  double median = 0.0, q25 = 0.0, q75 = 0.0;
};

// Empty input gives empty stats. Without explicit limits the histogram
// spans the observed range.
RolloutStats ComputeRolloutStats(std::span<const double> returns, int bins = 20,
                                 std::optional<double> lo = std::nullopt,
                                 std::optional<double> hi = std::nullopt);

struct ExplorationComparison {
  RolloutStats planner;
  RolloutStats gaussian;
  // mean over action dims and decisions of the executed action's variance
  // around the greedy action
  double planner_action_variance = 0.0;
  double gaussian_action_variance = 0.0;
  double gaussian_sigma = 0.0;
  int calibration_rounds = 0;
};

// Rolls `episodes` online-phase planner episodes per seed, measures the
// spread of what it executes, then calibrates a Gaussian-noise explorer
// around the RCBC mean action to the same spread (within 5%) and rolls the
// same start states with it.
ExplorationComparison CompareExploration(const Btm& model,
                                         const QvModel* value, const Env& env,
                                         const PlannerConfig& planner,
                                         double target_return, int episodes,
                                         std::span<const uint64_t> seeds);

}  // namespace m3pc

#endif  // M3PC_O2O_H_
