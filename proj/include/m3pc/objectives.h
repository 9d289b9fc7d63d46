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

// Training objectives: Gaussian action NLL, squared-error reconstruction,
// trajectory-level action entropy and the dual variable that holds entropy
// at its target.

#ifndef M3PC_OBJECTIVES_H_
#define M3PC_OBJECTIVES_H_

#include <cstdint>
#include <span>
#include <vector>

#include "m3pc/btm.h"
#include "m3pc/masking.h"
#include "m3pc/tensor.h"
#include "m3pc/trajectory.h"

namespace m3pc {

// Times a loss was asked to average over an empty cell set (and returned 0).
int64_t EmptyPredictWarnings();

// Mean over weighted cells of -log N(target | mean, exp(log_std)^2), summed
// over action dims. mean/log_std: [..., action_dim]; cell_weight holds one
// entry per cell (numel / action_dim), usually 0/1.
Tensor ActionNll(const Tensor& mean, const Tensor& log_std,
                 std::span<const double> target,
                 std::span<const double> cell_weight);

// Mean over weighted cells of the Gaussian differential entropy
// sum_dims (0.5 ln(2 pi e) + log_std).
Tensor TrajectoryEntropy(const Tensor& log_std,
                         std::span<const double> cell_weight);

// Mean over weighted cells of the per-cell mean squared error.
Tensor ReconstructionMse(const Tensor& prediction,
                         std::span<const double> target,
                         std::span<const double> cell_weight);

// Full (unmasked) normalized values plus per-modality loss weights
// (predict AND valid).
struct LossTargets {
  int batch = 0;
  int length = 0;
  std::vector<double> states, rtgs, actions, rewards;
  std::vector<double> weight[kNumModalities];  // [B * T]
};

LossTargets MakeTargets(std::span<const TrajectorySegment> segments,
                        std::span<const MaskPattern> masks,
                        const NormalizationStats& stats);

struct LossReport {
  double nll_action = 0.0;
  double recon_state = 0.0;
  double recon_rtg = 0.0;
  double recon_reward = 0.0;
  double entropy = 0.0;
  double sigma = 0.0;
  double dual_loss = 0.0;
  double total = 0.0;  // nll + recon - sigma * entropy

  double recon() const { return recon_state + recon_rtg + recon_reward; }
};

struct ModelLoss {
  Tensor total;    // theta objective, sigma held constant
  Tensor entropy;  // still attached; callers detach before the dual step
  LossReport report;
};

ModelLoss ComputeModelLoss(const BtmOutput& out, const LossTargets& targets,
                           double sigma);

// Lagrange multiplier sigma = exp(log_sigma) with its own Adam state.
class DualVariable {
 public:
  static constexpr double kLogSigmaFloor = -20.0;

  explicit DualVariable(double initial_sigma = 0.1);

  double sigma() const;
  double log_sigma() const { return log_sigma_; }
  void set_log_sigma(double v) { log_sigma_ = v; }

  // One Adam step on sigma * (entropy - beta) w.r.t. log_sigma. `entropy`
  // must already be detached from the model graph. Returns the dual loss.
  double Update(double entropy, double beta, double lr);

  int64_t steps() const { return steps_; }
  double first_moment() const { return m_; }
  double second_moment() const { return v_; }
  void RestoreAdam(double m, double v, int64_t steps) {
    m_ = m;
    v_ = v;
    steps_ = steps;
  }

 private:
  double log_sigma_;
  double m_ = 0.0, v_ = 0.0;
  int64_t steps_ = 0;
};

}  // namespace m3pc

#endif  // M3PC_OBJECTIVES_H_
