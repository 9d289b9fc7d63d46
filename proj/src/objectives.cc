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

#include "m3pc/objectives.h"

#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "m3pc/ops.h"

namespace m3pc {
namespace {

std::atomic<int64_t> empty_predict_warnings{0};

const double kHalfLog2Pi = 0.5 * std::log(2.0 * M_PI);
const double kHalfLog2PiE = 0.5 * std::log(2.0 * M_PI * M_E);

// Per-element weights w_cell / (sum w * per_cell_divisor), tiled over the
// trailing payload dim. Returns an empty tensor when no cell carries weight.
Tensor ElementWeights(const Tensor& like, std::span<const double> cell_weight,
                      double per_cell_divisor) {
  const int dim = like.dim(-1);
  if (like.numel() != int64_t(cell_weight.size()) * dim) {
    throw ShapeError("loss weights",
                     "weights for " + std::to_string(cell_weight.size()) +
                         " cells vs prediction " + ShapeString(like.shape()));
  }
  const double total =
      std::accumulate(cell_weight.begin(), cell_weight.end(), 0.0);
  if (total <= 0.0) {
    empty_predict_warnings.fetch_add(1);
    return Tensor();
  }
  std::vector<double> w(like.numel());
  const double scale = 1.0 / (total * per_cell_divisor);
  for (size_t c = 0; c < cell_weight.size(); ++c) {
    for (int k = 0; k < dim; ++k) w[c * dim + k] = cell_weight[c] * scale;
  }
  return Tensor::FromData(like.shape(), std::move(w));
}

}  // namespace

int64_t EmptyPredictWarnings() { return empty_predict_warnings.load(); }

Tensor ActionNll(const Tensor& mean, const Tensor& log_std,
                 std::span<const double> target,
                 std::span<const double> cell_weight) {
  if (mean.shape() != log_std.shape() ||
      int64_t(target.size()) != mean.numel()) {
    throw ShapeError("action_nll", mean.shape(), log_std.shape());
  }
  Tensor w = ElementWeights(mean, cell_weight, 1.0);
  if (!w.defined()) return Tensor::Scalar(0.0);
  Tensor t = Tensor::FromData(mean.shape(),
                              std::vector<double>(target.begin(), target.end()));
  Tensor z = Mul(Sub(t, mean), Exp(Scale(log_std, -1.0)));
  Tensor per = AddScalar(Add(Scale(Square(z), 0.5), log_std), kHalfLog2Pi);
  return Sum(Mul(per, w));
}

Tensor TrajectoryEntropy(const Tensor& log_std,
                         std::span<const double> cell_weight) {
  Tensor w = ElementWeights(log_std, cell_weight, 1.0);
  if (!w.defined()) return Tensor::Scalar(0.0);
  return Sum(Mul(AddScalar(log_std, kHalfLog2PiE), w));
}

Tensor ReconstructionMse(const Tensor& prediction,
                         std::span<const double> target,
                         std::span<const double> cell_weight) {
  if (int64_t(target.size()) != prediction.numel()) {
    throw ShapeError("reconstruction_mse",
                     "target size " + std::to_string(target.size()) +
                         " vs " + ShapeString(prediction.shape()));
  }
  Tensor w = ElementWeights(prediction, cell_weight, prediction.dim(-1));
  if (!w.defined()) return Tensor::Scalar(0.0);
  Tensor t = Tensor::FromData(prediction.shape(),
                              std::vector<double>(target.begin(), target.end()));
  return Sum(Mul(Square(Sub(prediction, t)), w));
}

LossTargets MakeTargets(std::span<const TrajectorySegment> segments,
                        std::span<const MaskPattern> masks,
                        const NormalizationStats& stats) {
  if (masks.size() != 1 && masks.size() != segments.size()) {
    throw std::invalid_argument("MakeTargets: need 1 or B masks");
  }
  LossTargets tg;
  tg.batch = static_cast<int>(segments.size());
  tg.length = segments.empty() ? 0 : segments[0].length;
  const int T = tg.length;
  for (auto& w : tg.weight) w.assign(size_t(tg.batch) * T, 0.0);
  for (int b = 0; b < tg.batch; ++b) {
    const TrajectorySegment& s = segments[b];
    const MaskPattern& m = masks.size() == 1 ? masks[0] : masks[b];
    for (int t = 0; t < T; ++t) {
      for (int k = 0; k < s.state_dim; ++k) {
        tg.states.push_back(s.valid[t] ? stats.NormalizeState(s.state(t)[k], k)
                                       : 0.0);
      }
      for (int k = 0; k < s.action_dim; ++k) {
        tg.actions.push_back(s.action(t)[k]);
      }
      tg.rtgs.push_back(s.valid[t] ? stats.NormalizeRtg(s.rtgs[t]) : 0.0);
      tg.rewards.push_back(s.valid[t] ? stats.NormalizeReward(s.rewards[t])
                                      : 0.0);
      for (Modality mod : kModalities) {
        tg.weight[int(mod)][size_t(b) * T + t] =
            (s.valid[t] && m.IsPredicted(mod, t)) ? 1.0 : 0.0;
      }
    }
  }
  return tg;
}

ModelLoss ComputeModelLoss(const BtmOutput& out, const LossTargets& targets,
                           double sigma) {
  ModelLoss loss;
  Tensor nll = ActionNll(out.action_mean, out.action_log_std, targets.actions,
                         targets.weight[int(Modality::kAction)]);
  Tensor rs = ReconstructionMse(out.state, targets.states,
                                targets.weight[int(Modality::kState)]);
  Tensor rg = ReconstructionMse(out.rtg, targets.rtgs,
                                targets.weight[int(Modality::kRtg)]);
  Tensor rr = ReconstructionMse(out.reward, targets.rewards,
                                targets.weight[int(Modality::kReward)]);
  loss.entropy = TrajectoryEntropy(out.action_log_std,
                                   targets.weight[int(Modality::kAction)]);
  loss.total =
      Sub(Add(Add(nll, rs), Add(rg, rr)), Scale(loss.entropy, sigma));
  LossReport& r = loss.report;
  r.nll_action = nll.item();
  r.recon_state = rs.item();
  r.recon_rtg = rg.item();
  r.recon_reward = rr.item();
  r.entropy = loss.entropy.item();
  r.sigma = sigma;
  r.total = loss.total.item();
  return loss;
}

DualVariable::DualVariable(double initial_sigma) {
  if (!(initial_sigma > 0.0)) {
    throw std::invalid_argument("initial sigma must be positive");
  }
  log_sigma_ = std::log(initial_sigma);
}

double DualVariable::sigma() const { return std::exp(log_sigma_); }

double DualVariable::Update(double entropy, double beta, double lr) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  const double sigma = this->sigma();
  const double gap = entropy - beta;
  // d/d(log_sigma) of sigma * gap
  const double grad = sigma * gap;
  ++steps_;
  m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
  v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad * grad;
  const double m_hat = m_ / (1.0 - std::pow(kBeta1, double(steps_)));
  const double v_hat = v_ / (1.0 - std::pow(kBeta2, double(steps_)));
  log_sigma_ -= lr * m_hat / (std::sqrt(v_hat) + kEps);
  log_sigma_ = std::max(log_sigma_, kLogSigmaFloor);
  return sigma * gap;
}

}  // namespace m3pc
