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

// Pretraining / finetuning loop: alternating theta and sigma steps, with the
// value estimator trained on the same batches by its own optimizer.

#ifndef M3PC_TRAINING_H_
#define M3PC_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "m3pc/btm.h"
#include "m3pc/masking.h"
#include "m3pc/objectives.h"
#include "m3pc/optim.h"
#include "m3pc/replay_buffer.h"
#include "m3pc/rng.h"
#include "m3pc/value.h"

namespace m3pc {

struct TrainConfig {
  int64_t steps = 20000;
  int batch_size = 16;
  double lr = 1e-3;
  double weight_decay = 0.005;
  int64_t warmup_steps = 500;
  bool cosine_schedule = true;
  double target_entropy = -3.0;  // beta
  double dual_lr = 1e-3;
  double initial_sigma = 0.1;
  TrainingMaskOptions mask;
  bool train_value = true;
  int64_t checkpoint_every = 0;  // 0: only at the end
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Raised when a step produces a non-finite loss or gradient. Parameters are
// left at their last good values.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int64_t step, const std::string& what)
      : std::runtime_error("training diverged at step " +
                           std::to_string(step) + ": " + what),
        step_(step) {}
  int64_t step() const { return step_; }

 private:
  int64_t step_;
};

class Trainer {
 public:
  // `value` may be null. Both models must outlive the trainer.
  Trainer(Btm& model, QvModel* value, const TrainConfig& config,
          uint64_t seed);

  // One theta step (masked NLL + reconstruction - sigma * entropy), then one
  // sigma step on the detached entropy, then one value step.
  LossReport Step(std::span<const TrajectorySegment> segments, double lr);
  // samples a batch from the buffer, lr from the schedule
  LossReport Step(const ReplayBuffer& buffer);

  double ScheduledLr() const;
  int64_t step() const { return step_; }
  void set_step(int64_t step) { step_ = step; }
  DualVariable& dual() { return dual_; }
  const TrainConfig& config() const { return config_; }
  Rng& rng() { return rng_; }
  double last_q_loss() const { return last_q_loss_; }
  double last_v_loss() const { return last_v_loss_; }

 private:
  Btm& model_;
  QvModel* value_;
  TrainConfig config_;
  Adam optimizer_;
  DualVariable dual_;
  Rng rng_;
  int64_t step_ = 0;
  double last_q_loss_ = 0.0, last_v_loss_ = 0.0;
};

// Writes `step,nll,recon,entropy,sigma,lr,total` rows; flushes every 100.
class MetricsWriter {
 public:
  explicit MetricsWriter(std::ostream* out);
  void Write(int64_t step, const LossReport& r, double lr);
  void Flush();

 private:
  std::ostream* out_;
  int64_t rows_ = 0;
};

struct PretrainOptions {
  std::ostream* metrics = nullptr;
  std::optional<std::filesystem::path> checkpoint_path;
  nlohmann::json checkpoint_extra;
  // called after every step; return false to stop early
  std::function<bool(int64_t step, const LossReport&)> on_step;
};

struct PretrainResult {
  std::vector<double> entropy;  // per step
  std::vector<double> sigma;    // per step, after the dual update
  std::vector<double> total;    // per step
  LossReport last;
  double final_log_sigma = 0.0;
  int64_t steps = 0;
};

// Fits normalization statistics on `episodes`, then trains for
// config.steps steps. On divergence the parameters are written to the
// checkpoint path (when given) if they are still finite -- otherwise the last
// periodic checkpoint is left alone -- and TrainingDiverged is rethrown.
PretrainResult Pretrain(Btm& model, QvModel* value,
                        std::span<const Episode> episodes,
                        const TrainConfig& config, uint64_t seed,
                        const PretrainOptions& options = {});

}  // namespace m3pc

#endif  // M3PC_TRAINING_H_
