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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>

#include <gtest/gtest.h>

#include "m3pc/checkpoint.h"
#include "m3pc/datagen.h"
#include "m3pc/training.h"
#include "test_util.h"

namespace m3pc {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
const double kGaussEntropy = 0.5 * std::log(2.0 * std::numbers::pi * std::exp(1.0));

TEST(ActionNllTest, UnitGaussianAtItsMean) {
  Tensor mean = Tensor::FromData({3, 1}, {0.2, -1.0, 4.0});
  Tensor log_std = Tensor::Zeros({3, 1});
  const std::vector<double> target = {0.2, -1.0, 4.0}, w = {1, 1, 1};
  EXPECT_NEAR(ActionNll(mean, log_std, target, w).item(), kHalfLog2Pi, 1e-15);
}

TEST(ActionNllTest, ShrinkingStdAtCorrectMeanLowersLoss) {
  Tensor mean = Tensor::FromData({1, 2}, {0.5, 0.5});
  const std::vector<double> target = {0.5, 0.5}, w = {1};
  double prev = INFINITY;
  for (double ls = 1.0; ls >= kLogStdMin; ls -= 0.5) {
    const double v =
        ActionNll(mean, Tensor::Full({1, 2}, ls), target, w).item();
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(ActionNllTest, MatchesClosedFormDensity) {
  std::mt19937_64 rng(3);
  Tensor mean = testing::RandomTensor({4, 3}, rng, false);
  Tensor log_std = testing::RandomTensor({4, 3}, rng, false, 0.5);
  std::normal_distribution<double> n;
  std::vector<double> target(12);
  for (double& t : target) t = n(rng);
  const std::vector<double> w = {1, 0, 1, 1};
  double expected = 0.0;
  for (int c : {0, 2, 3}) {
    for (int k = 0; k < 3; ++k) {
      const int i = c * 3 + k;
      const double sd = std::exp(log_std.at(i));
      const double z = (target[i] - mean.at(i)) / sd;
      expected -= std::log(std::exp(-0.5 * z * z) /
                           (sd * std::sqrt(2.0 * std::numbers::pi)));
    }
  }
  EXPECT_NEAR(ActionNll(mean, log_std, target, w).item(), expected / 3, 1e-12);
}

TEST(ActionNllTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  Tensor mean = testing::RandomTensor({5, 2}, rng);
  Tensor log_std = testing::RandomTensor({5, 2}, rng, true, 0.5);
  std::vector<double> target(10);
  std::normal_distribution<double> n;
  for (double& t : target) t = n(rng);
  const std::vector<double> w(5, 1.0);
  EXPECT_LT(testing::GradCheck(
                [&] { return ActionNll(mean, log_std, target, w); },
                {mean, log_std}),
            1e-4);
}

TEST(ActionNllTest, EmptyPredictSetIsZeroAndCounted) {
  const int64_t before = EmptyPredictWarnings();
  const std::vector<double> target = {1.0, 2.0}, w = {0, 0};
  Tensor v = ActionNll(Tensor::Zeros({2, 1}), Tensor::Zeros({2, 1}), target, w);
  EXPECT_EQ(v.item(), 0.0);
  EXPECT_EQ(EmptyPredictWarnings(), before + 1);
}

TEST(EntropyTest, UnitGaussian) {
  const std::vector<double> w = {1, 1};
  EXPECT_NEAR(TrajectoryEntropy(Tensor::Zeros({2, 1}), w).item(), 1.4189385,
              1e-7);
  EXPECT_NEAR(TrajectoryEntropy(Tensor::Zeros({2, 1}), w).item(),
              kGaussEntropy, 1e-15);
}

TEST(EntropyTest, DoublingStdAddsLog2PerDim) {
  std::mt19937_64 rng(5);
  Tensor ls = testing::RandomTensor({3, 4}, rng, false, 0.3);
  std::vector<double> doubled(ls.data().begin(), ls.data().end());
  for (double& v : doubled) v += std::log(2.0);
  const std::vector<double> w = {1, 1, 1};
  const double a = TrajectoryEntropy(ls, w).item();
  const double b = TrajectoryEntropy(Tensor::FromData({3, 4}, doubled), w).item();
  EXPECT_NEAR(b - a, 4 * std::log(2.0), 1e-12);
}

TEST(EntropyTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  Tensor ls = testing::RandomTensor({4, 2}, rng);
  const std::vector<double> w = {1, 0, 1, 1};
  EXPECT_LT(testing::GradCheck([&] { return TrajectoryEntropy(ls, w); }, {ls}),
            1e-4);
}

TEST(ReconstructionTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  Tensor pred = testing::RandomTensor({3, 4, 2}, rng);
  std::vector<double> target(24);
  std::normal_distribution<double> n;
  for (double& t : target) t = n(rng);
  std::vector<double> w(12, 1.0);
  w[3] = w[7] = 0.0;
  EXPECT_LT(testing::GradCheck(
                [&] { return ReconstructionMse(pred, target, w); }, {pred}),
            1e-4);
}

TEST(DualTest, StationaryAtTarget) {
  DualVariable dual(0.1);
  const double start = dual.sigma();
  for (int i = 0; i < 50; ++i) dual.Update(-3.0, -3.0, 1e-3);
  EXPECT_EQ(dual.sigma(), start);
}

TEST(DualTest, RisesWhileEntropyBelowTarget) {
  DualVariable dual(0.1);
  double prev = dual.sigma();
  for (int i = 0; i < 100; ++i) {
    dual.Update(-4.0, -3.0, 1e-3);
    EXPECT_GT(dual.sigma(), prev);
    prev = dual.sigma();
  }
}

TEST(DualTest, DecaysButStaysPositiveAboveTarget) {
  DualVariable dual(0.1);
  double prev = dual.sigma();
  for (int i = 0; i < 100; ++i) {
    dual.Update(-2.0, -3.0, 1e-3);
    EXPECT_LT(dual.sigma(), prev);
    prev = dual.sigma();
  }
  for (int i = 0; i < 100000; ++i) dual.Update(-2.0, -3.0, 0.05);
  EXPECT_GT(dual.sigma(), 0.0);
  EXPECT_GE(dual.log_sigma(), DualVariable::kLogSigmaFloor);
}

// Toy segments with a stretch of padding at the end.
struct ToyBatch {
  std::vector<TrajectorySegment> segments;
  std::vector<MaskPattern> masks;
  NormalizationStats stats = NormalizationStats::Identity(4);
};

ToyBatch MakeToyBatch(const BtmConfig& c, int n, uint64_t seed) {
  PointMassEnv env;
  Dataset ds = GenerateDataset(env, NamedPolicyMix("medium-replay"), 4, seed);
  ToyBatch b;
  b.stats = NormalizationStats::Compute(ds.episodes);
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    const Episode& ep = ds.episodes[i % 4];
    // every third segment runs off the end of its episode
    const int start = i % 3 == 0 ? ep.length() - 3 : (7 * i) % 40;
    b.segments.push_back(SliceSegment(ep, start, c.segment_length));
    b.masks.push_back(TrainingMask(c.segment_length, rng, {},
                                   b.segments.back().valid));
  }
  return b;
}

BtmConfig TinyConfig() {
  BtmConfig c;
  c.state_dim = 4;
  c.action_dim = 2;
  c.embed_dim = 8;
  c.n_heads = 2;
  c.dropout = 0.0;
  return c;
}

TEST(ModelLossTest, TotalMatchesReportFields) {
  const BtmConfig c = TinyConfig();
  Btm model(c, 1);
  ToyBatch b = MakeToyBatch(c, 6, 2);
  model.stats = b.stats;
  for (double sigma : {0.0, 0.1, 2.5}) {
    ModelLoss loss = ComputeModelLoss(
        model.Forward(MakeBatch(b.segments, b.masks, model.stats)),
        MakeTargets(b.segments, b.masks, model.stats), sigma);
    const LossReport& r = loss.report;
    EXPECT_NEAR(loss.total.item(),
                r.nll_action + r.recon_state + r.recon_rtg + r.recon_reward -
                    sigma * r.entropy,
                1e-9);
    EXPECT_EQ(r.total, loss.total.item());
    EXPECT_EQ(r.entropy, loss.entropy.item());
  }
}

TEST(ModelLossTest, EntropyIgnoresActionMeans) {
  const BtmConfig c = TinyConfig();
  Btm model(c, 4);
  ToyBatch b = MakeToyBatch(c, 4, 5);
  const LossTargets tg = MakeTargets(b.segments, b.masks, b.stats);
  const BtmOutput out = model.Forward(MakeBatch(b.segments, b.masks, b.stats));
  BtmOutput shifted = out;
  shifted.action_mean = out.action_mean.Detach();
  for (double& v : shifted.action_mean.mutable_data()) v = 3.0 * v - 1.0;
  EXPECT_EQ(ComputeModelLoss(shifted, tg, 0.2).report.entropy,
            ComputeModelLoss(out, tg, 0.2).report.entropy);
}

TEST(ModelLossTest, PaddingAndVisibleCellsDoNotContribute) {
  const BtmConfig c = TinyConfig();
  Btm model(c, 2);
  ToyBatch b = MakeToyBatch(c, 6, 3);
  model.stats = b.stats;
  const BtmOutput out = model.Forward(MakeBatch(b.segments, b.masks, b.stats));
  const LossReport base =
      ComputeModelLoss(out, MakeTargets(b.segments, b.masks, b.stats), 0.3)
          .report;

  // scribble over everything outside predict AND valid, in both the targets
  // and the model outputs
  Rng rng(11);
  std::normal_distribution<double> n(0.0, 100.0);
  std::vector<TrajectorySegment> fuzzed = b.segments;
  auto scored = [&](int i, Modality m, int t) {
    return fuzzed[i].valid[t] && b.masks[i].IsPredicted(m, t);
  };
  for (size_t i = 0; i < fuzzed.size(); ++i) {
    auto& s = fuzzed[i];
    for (int t = 0; t < s.length; ++t) {
      if (!scored(i, Modality::kState, t)) {
        for (double& v : s.state(t)) v = n(rng);
      }
      if (!scored(i, Modality::kAction, t)) {
        for (double& v : s.action(t)) v = n(rng);
      }
      if (!scored(i, Modality::kRtg, t)) s.rtgs[t] = n(rng);
      if (!scored(i, Modality::kReward, t)) s.rewards[t] = n(rng);
    }
  }
  BtmOutput poked = out;
  poked.state = out.state.Detach();
  poked.action_mean = out.action_mean.Detach();
  for (size_t i = 0; i < fuzzed.size(); ++i) {
    for (int t = 0; t < c.segment_length; ++t) {
      const int64_t cell = int64_t(i) * c.segment_length + t;
      if (!scored(i, Modality::kState, t)) {
        for (int k = 0; k < 4; ++k) {
          poked.state.mutable_data()[cell * 4 + k] = n(rng);
        }
      }
      if (!scored(i, Modality::kAction, t)) {
        for (int k = 0; k < 2; ++k) {
          poked.action_mean.mutable_data()[cell * 2 + k] = n(rng);
        }
      }
    }
  }
  const LossReport fuzzed_report =
      ComputeModelLoss(poked, MakeTargets(fuzzed, b.masks, b.stats), 0.3)
          .report;
  EXPECT_NEAR(fuzzed_report.nll_action, base.nll_action, 1e-12);
  EXPECT_NEAR(fuzzed_report.recon_state, base.recon_state, 1e-12);
  EXPECT_NEAR(fuzzed_report.recon_rtg, base.recon_rtg, 1e-12);
  EXPECT_NEAR(fuzzed_report.recon_reward, base.recon_reward, 1e-12);
  EXPECT_NEAR(fuzzed_report.total, base.total, 1e-12);
}

TEST(PretrainTest, SmokeRunCutsLoss) {
  PointMassEnv env;
  Dataset ds = GenerateDataset(env, NamedPolicyMix("medium"), 20, 9);
  BtmConfig c = TinyConfig();
  c.embed_dim = 16;
  Btm model(c, 5);
  TrainConfig tc;
  tc.steps = 500;
  tc.warmup_steps = 50;
  tc.train_value = false;
  const PretrainResult r = Pretrain(model, nullptr, ds.episodes, tc, 1);
  ASSERT_EQ(r.total.size(), 500u);
  auto window = [&](int end) {
    double s = 0.0;
    for (int i = end - 10; i < end; ++i) s += r.total[i];
    return s / 10;
  };
  const double early = window(10), late = window(500);
  // total can go negative once the NLL does; measure the drop in absolute
  // terms against the early magnitude
  EXPECT_LE(late, early - 0.3 * std::abs(early));
  for (double s : r.sigma) EXPECT_GT(s, 0.0);
}

TEST(PretrainTest, IdenticalSeedsGiveIdenticalCheckpoints) {
  PointMassEnv env;
  Dataset ds = GenerateDataset(env, NamedPolicyMix("medium"), 6, 4);
  const auto dir = std::filesystem::temp_directory_path();
  std::vector<std::string> bytes;
  for (int run = 0; run < 2; ++run) {
    Btm model(TinyConfig(), 3);
    QvModel value(4, 2, ValueConfig{}, 4);
    TrainConfig tc;
    tc.steps = 20;
    PretrainOptions opt;
    opt.checkpoint_path = dir / ("m3pc_det_" + std::to_string(run) + ".ckpt");
    Pretrain(model, &value, ds.episodes, tc, 77, opt);
    std::ifstream in(*opt.checkpoint_path, std::ios::binary);
    bytes.emplace_back(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
    std::filesystem::remove(*opt.checkpoint_path);
  }
  EXPECT_FALSE(bytes[0].empty());
  EXPECT_EQ(bytes[0], bytes[1]);
}

TEST(PretrainTest, NonFiniteLossAbortsAndKeepsLastGoodCheckpoint) {
  PointMassEnv env;
  Dataset ds = GenerateDataset(env, NamedPolicyMix("medium"), 6, 4);
  Btm model(TinyConfig(), 3);
  TrainConfig tc;
  tc.steps = 50;
  tc.checkpoint_every = 2;
  tc.train_value = false;
  PretrainOptions opt;
  opt.checkpoint_path =
      std::filesystem::temp_directory_path() / "m3pc_diverge.ckpt";
  opt.on_step = [&](int64_t step, const LossReport&) {
    if (step == 5) {
      model.params()[0].tensor.mutable_data()[0] = std::nan("");
    }
    return true;
  };
  try {
    Pretrain(model, nullptr, ds.episodes, tc, 1, opt);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.step(), 5);
  }
  const CheckpointHeader h = ReadCheckpointHeader(*opt.checkpoint_path);
  EXPECT_EQ(h.step, 4);
  Btm restored(TinyConfig(), 0);
  ReadCheckpointInto(*opt.checkpoint_path, h.fingerprint, restored, nullptr);
  for (const auto& p : restored.params()) {
    for (double v : p.tensor.data()) ASSERT_TRUE(std::isfinite(v)) << p.name;
  }
  std::filesystem::remove(*opt.checkpoint_path);
}

}  // namespace
}  // namespace m3pc
