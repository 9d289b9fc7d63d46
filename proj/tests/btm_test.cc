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

#include "m3pc/btm.h"

#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "m3pc/datagen.h"
#include "m3pc/objectives.h"
#include "m3pc/ops.h"
#include "m3pc/training.h"
#include "test_util.h"

namespace m3pc {
namespace {

constexpr int kT = 4;

BtmConfig SmallConfig() {
  BtmConfig c;
  c.state_dim = 3;
  c.action_dim = 2;
  c.embed_dim = 8;
  c.n_heads = 2;
  c.encoder_layers = 2;
  c.decoder_layers = 1;
  c.segment_length = kT;
  c.context_length = 2;
  c.dropout = 0.0;
  c.time_buckets = 16;
  return c;
}

TrajectorySegment RandomSegment(const BtmConfig& c, Rng& rng, int start = 0) {
  std::normal_distribution<double> n(0.0, 1.0);
  TrajectorySegment s =
      TrajectorySegment::Empty(c.segment_length, c.state_dim, c.action_dim);
  for (double& x : s.states) x = n(rng);
  for (double& x : s.actions) x = n(rng);
  for (double& x : s.rtgs) x = n(rng);
  for (double& x : s.rewards) x = n(rng);
  for (int t = 0; t < s.length; ++t) {
    s.timesteps[t] = start + t;
    s.valid[t] = 1;
  }
  return s;
}

const Tensor& Param(const Btm& model, const std::string& name) {
  for (const auto& p : model.params()) {
    if (p.name == name) return p.tensor;
  }
  throw std::out_of_range(name);
}

std::vector<double> Values(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

TEST(BtmConfigTest, RejectsIndivisibleHeads) {
  BtmConfig c = SmallConfig();
  c.embed_dim = 10;
  c.n_heads = 4;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
}

TEST(BtmConfigTest, ParameterCountIsPureFunctionOfConfig) {
  Btm a(SmallConfig(), 1), b(SmallConfig(), 99);
  EXPECT_EQ(CountParameters(a.params()), CountParameters(b.params()));
  BtmConfig bigger = SmallConfig();
  bigger.embed_dim = 16;
  EXPECT_GT(CountParameters(Btm(bigger, 1).params()),
            CountParameters(a.params()));
}

TEST(BtmTest, OutputGridShapes) {
  const BtmConfig c = SmallConfig();
  Btm model(c, 3);
  Rng rng(1);
  std::vector<TrajectorySegment> segs = {RandomSegment(c, rng),
                                         RandomSegment(c, rng)};
  std::vector<MaskPattern> masks = {NamedMask(MaskKind::kRcbc, 2, kT)};
  BtmOutput out = model.Forward(MakeBatch(segs, masks, model.stats));
  EXPECT_EQ(out.state.shape(), (Shape{2, kT, 3}));
  EXPECT_EQ(out.rtg.shape(), (Shape{2, kT, 1}));
  EXPECT_EQ(out.reward.shape(), (Shape{2, kT, 1}));
  EXPECT_EQ(out.action_mean.shape(), (Shape{2, kT, 2}));
  EXPECT_EQ(out.action_log_std.shape(), (Shape{2, kT, 2}));
  for (double v : out.action_log_std.data()) {
    EXPECT_GE(v, kLogStdMin);
    EXPECT_LE(v, kLogStdMax);
  }
}

TEST(BtmTest, HiddenPayloadDoesNotLeak) {
  const BtmConfig c = SmallConfig();
  Btm model(c, 5);
  Rng rng(2);
  std::vector<TrajectorySegment> segs = {RandomSegment(c, rng)};
  std::vector<MaskPattern> masks = {TrainingMaskWith(kT, 0.5, kT, rng, {})};
  ASSERT_GT(masks[0].CountVisible(Modality::kState), 0);
  BtmBatch batch = MakeBatch(segs, masks, model.stats);
  ForwardOptions opts;
  opts.allow_gather = false;
  const BtmOutput base = model.Forward(batch, opts);
  const Tensor base_latent = model.Encode(batch, opts);

  // write garbage straight into every hidden cell, bypassing MakeBatch
  BtmBatch poked = batch;
  const MaskPattern& m = masks[0];
  for (int t = 0; t < kT; ++t) {
    if (!m.IsVisible(Modality::kState, t)) {
      for (int k = 0; k < c.state_dim; ++k) {
        poked.states[t * c.state_dim + k] = 1e3 + k;
      }
    }
    if (!m.IsVisible(Modality::kAction, t)) {
      for (int k = 0; k < c.action_dim; ++k) {
        poked.actions[t * c.action_dim + k] = -7e2;
      }
    }
    if (!m.IsVisible(Modality::kRtg, t)) poked.rtgs[t] = 55.0;
    if (!m.IsVisible(Modality::kReward, t)) poked.rewards[t] = -9.0;
  }
  const Tensor latent = model.Encode(poked, opts);
  for (int i = 0; i < kNumModalities * kT; ++i) {
    if (!m.visible[i]) continue;
    for (int k = 0; k < c.embed_dim; ++k) {
      EXPECT_EQ(latent.at(i * c.embed_dim + k),
                base_latent.at(i * c.embed_dim + k));
    }
  }
  const BtmOutput out = model.Forward(poked, opts);
  EXPECT_EQ(Values(out.state), Values(base.state));
  EXPECT_EQ(Values(out.action_mean), Values(base.action_mean));
  EXPECT_EQ(Values(out.action_log_std), Values(base.action_log_std));
  EXPECT_EQ(Values(out.rtg), Values(base.rtg));
  EXPECT_EQ(Values(out.reward), Values(base.reward));
}

TEST(BtmTest, EncoderIsPermutationEquivariant) {
  // swapping every token at two timesteps together with their position and
  // episode-time embeddings permutes the encoder rows the same way
  const BtmConfig c = SmallConfig();
  Btm model(c, 8);
  Btm swapped(c, 8);
  Rng rng(4);
  TrajectorySegment seg = RandomSegment(c, rng, 3);
  const int t1 = 0, t2 = 2;
  TrajectorySegment other = seg;
  std::swap(other.timesteps[t1], other.timesteps[t2]);
  for (int k = 0; k < c.state_dim; ++k) {
    std::swap(other.state(t1)[k], other.state(t2)[k]);
  }
  for (int k = 0; k < c.action_dim; ++k) {
    std::swap(other.action(t1)[k], other.action(t2)[k]);
  }
  std::swap(other.rtgs[t1], other.rtgs[t2]);
  std::swap(other.rewards[t1], other.rewards[t2]);
  Tensor pos_param = Param(swapped, "embed.position");
  auto pos = pos_param.mutable_data();
  for (int k = 0; k < c.embed_dim; ++k) {
    std::swap(pos[t1 * c.embed_dim + k], pos[t2 * c.embed_dim + k]);
  }
  const MaskPattern all = [] {
    MaskPattern m = MaskPattern::Empty(kT);
    std::fill(m.visible.begin(), m.visible.end(), 1);
    return m;
  }();
  ForwardOptions opts;
  opts.allow_gather = false;
  const std::vector<MaskPattern> masks = {all};
  const std::vector<TrajectorySegment> a = {seg}, b = {other};
  const Tensor ea = model.Encode(MakeBatch(a, masks, model.stats), opts);
  const Tensor eb = swapped.Encode(MakeBatch(b, masks, model.stats), opts);
  auto row = [&](int m, int t) { return m * kT + t; };
  for (int m = 0; m < kNumModalities; ++m) {
    for (int t = 0; t < kT; ++t) {
      const int mapped = t == t1 ? t2 : (t == t2 ? t1 : t);
      for (int k = 0; k < c.embed_dim; ++k) {
        EXPECT_NEAR(ea.at(row(m, t) * c.embed_dim + k),
                    eb.at(row(m, mapped) * c.embed_dim + k), 1e-12);
      }
    }
  }
}

// straight-line evaluation of the encoder for a lone visible token
std::vector<double> LoneTokenReference(const Btm& model, Modality m, int t,
                                       std::span<const double> payload,
                                       int timestep) {
  const BtmConfig& c = model.config();
  const int d = c.embed_dim;
  auto P = [&](const std::string& n) { return Param(model, n).data(); };
  auto linear = [&](std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, int in, int out, int col0,
                    int width) {
    std::vector<double> y(width);
    for (int j = 0; j < width; ++j) {
      double s = b[col0 + j];
      for (int i = 0; i < in; ++i) s += x[i] * w[i * out + col0 + j];
      y[j] = s;
    }
    return y;
  };
  auto layer_norm = [&](std::vector<double> x, std::span<const double> g,
                        std::span<const double> b) {
    double mu = 0, var = 0;
    for (double v : x) mu += v;
    mu /= x.size();
    for (double v : x) var += (v - mu) * (v - mu);
    var /= x.size();
    for (size_t i = 0; i < x.size(); ++i) {
      x[i] = (x[i] - mu) / std::sqrt(var + 1e-5) * g[i] + b[i];
    }
    return x;
  };
  const std::string name = ModalityName(m);
  const int in = static_cast<int>(payload.size());
  std::vector<double> x = linear(payload, P("lift." + name + ".weight"),
                                 P("lift." + name + ".bias"), in, d, 0, d);
  for (int k = 0; k < d; ++k) {
    x[k] += P("embed.modality")[int(m) * d + k] +
            P("embed.position")[t * d + k] + P("embed.time")[timestep * d + k];
  }
  for (int l = 0; l < c.encoder_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    auto h = layer_norm(x, P(p + ".ln1.gamma"), P(p + ".ln1.beta"));
    // one key: attention returns the value projection unchanged
    auto v = linear(h, P(p + ".attn.qkv.weight"), P(p + ".attn.qkv.bias"), d,
                    3 * d, 2 * d, d);
    auto o = linear(v, P(p + ".attn.proj.weight"), P(p + ".attn.proj.bias"),
                    d, d, 0, d);
    for (int k = 0; k < d; ++k) x[k] += o[k];
    h = layer_norm(x, P(p + ".ln2.gamma"), P(p + ".ln2.beta"));
    auto f = linear(h, P(p + ".mlp.fc1.weight"), P(p + ".mlp.fc1.bias"), d,
                    4 * d, 0, 4 * d);
    for (double& z : f) z = 0.5 * z * (1.0 + std::erf(z / std::sqrt(2.0)));
    auto g = linear(f, P(p + ".mlp.fc2.weight"), P(p + ".mlp.fc2.bias"),
                    4 * d, d, 0, d);
    for (int k = 0; k < d; ++k) x[k] += g[k];
  }
  return layer_norm(x, P("encoder.ln.gamma"), P("encoder.ln.beta"));
}

TEST(BtmTest, LoneVisibleTokenMatchesReferenceTrace) {
  const BtmConfig c = SmallConfig();
  Btm model(c, 12);
  Rng rng(6);
  TrajectorySegment seg = RandomSegment(c, rng, 5);
  const int t = 1;
  MaskPattern mask = MaskPattern::Empty(kT);
  mask.SetVisible(Modality::kState, t);
  const std::vector<TrajectorySegment> segs = {seg};
  const std::vector<MaskPattern> masks = {mask};
  for (bool gather : {false, true}) {
    NoGradGuard no_grad;
    ForwardOptions opts;
    opts.allow_gather = gather;
    const Tensor enc = model.Encode(MakeBatch(segs, masks, model.stats), opts);
    const auto ref = LoneTokenReference(model, Modality::kState, t,
                                        seg.state(t), seg.timesteps[t]);
    const int row = int(Modality::kState) * kT + t;
    for (int k = 0; k < c.embed_dim; ++k) {
      EXPECT_NEAR(enc.at(row * c.embed_dim + k), ref[k], 1e-12)
          << "gather=" << gather;
    }
  }
}

TEST(BtmTest, AllHiddenInputIsValid) {
  const BtmConfig c = SmallConfig();
  Btm model(c, 2);
  Rng rng(3);
  const std::vector<TrajectorySegment> segs = {RandomSegment(c, rng)};
  const std::vector<MaskPattern> masks = {MaskPattern::Empty(kT)};
  for (bool grad : {true, false}) {
    std::optional<NoGradGuard> guard;
    if (!grad) guard.emplace();
    BtmOutput out = model.Forward(MakeBatch(segs, masks, model.stats));
    for (double v : out.state.data()) EXPECT_TRUE(std::isfinite(v));
    for (double v : out.action_mean.data()) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(BtmTest, MaskTokenSubstitutionDependsOnVisibleSetOnly) {
  const BtmConfig c = SmallConfig();
  Btm model(c, 4);
  Rng rng(9);
  const std::vector<TrajectorySegment> segs = {RandomSegment(c, rng)};
  MaskPattern a = NamedMask(MaskKind::kRcbc, 2, kT);
  MaskPattern b = a;
  std::fill(b.predict.begin(), b.predict.end(), 0);
  b.SetPredict(Modality::kReward, 3);
  ASSERT_FALSE(a == b);
  const std::vector<MaskPattern> ma = {a}, mb = {b};
  BtmBatch ba = MakeBatch(segs, ma, model.stats);
  BtmBatch bb = MakeBatch(segs, mb, model.stats);
  ForwardOptions opts;
  const Tensor za = model.DecoderInput(ba, model.Encode(ba, opts));
  const Tensor zb = model.DecoderInput(bb, model.Encode(bb, opts));
  EXPECT_EQ(Values(za), Values(zb));
}

TEST(BtmTest, GatherPathEqualsMaskedPath) {
  const BtmConfig c = SmallConfig();
  Btm model(c, 21);
  Rng rng(10);
  std::vector<TrajectorySegment> segs;
  for (int i = 0; i < 5; ++i) segs.push_back(RandomSegment(c, rng, i));
  for (MaskKind kind : {MaskKind::kRcbc, MaskKind::kFd, MaskKind::kRp,
                        MaskKind::kId, MaskKind::kPi, MaskKind::kGr}) {
    for (int t_now = 1; t_now <= kT; ++t_now) {
      const std::vector<MaskPattern> masks = {NamedMask(kind, t_now, kT)};
      const BtmBatch batch = MakeBatch(segs, masks, model.stats);
      NoGradGuard no_grad;
      ForwardOptions masked, gathered;
      masked.allow_gather = false;
      const BtmOutput a = model.Forward(batch, masked);
      const BtmOutput b = model.Forward(batch, gathered);
      for (int64_t i = 0; i < a.state.numel(); ++i) {
        ASSERT_NEAR(a.state.at(i), b.state.at(i), 1e-10);
      }
      for (int64_t i = 0; i < a.action_mean.numel(); ++i) {
        ASSERT_NEAR(a.action_mean.at(i), b.action_mean.at(i), 1e-10);
        ASSERT_NEAR(a.action_log_std.at(i), b.action_log_std.at(i), 1e-10);
      }
      for (int64_t i = 0; i < a.reward.numel(); ++i) {
        ASSERT_NEAR(a.reward.at(i), b.reward.at(i), 1e-10);
        ASSERT_NEAR(a.rtg.at(i), b.rtg.at(i), 1e-10);
      }
    }
  }
}

TEST(BtmTest, BatchInvariance) {
  const BtmConfig c = SmallConfig();
  Btm model(c, 31);
  Rng rng(11);
  std::vector<TrajectorySegment> segs;
  std::vector<MaskPattern> masks;
  for (int i = 0; i < 6; ++i) {
    segs.push_back(RandomSegment(c, rng, i));
    masks.push_back(TrainingMaskWith(kT, 0.4, kT, rng, {}));
  }
  NoGradGuard no_grad;
  const BtmOutput all = model.Forward(MakeBatch(segs, masks, model.stats));
  const int per_row = kT * c.state_dim;
  for (int i = 0; i < 6; ++i) {
    const std::vector<TrajectorySegment> one = {segs[i]};
    const std::vector<MaskPattern> m = {masks[i]};
    const BtmOutput alone = model.Forward(MakeBatch(one, m, model.stats));
    for (int k = 0; k < per_row; ++k) {
      EXPECT_NEAR(alone.state.at(k), all.state.at(i * per_row + k), 1e-6);
    }
    for (int k = 0; k < kT * c.action_dim; ++k) {
      EXPECT_NEAR(alone.action_mean.at(k),
                  all.action_mean.at(i * kT * c.action_dim + k), 1e-6);
    }
  }
}

TEST(BtmTest, EveryParameterReceivesGradient) {
  BtmConfig c = SmallConfig();
  Btm model(c, 41);
  Rng rng(12);
  std::vector<TrajectorySegment> segs;
  std::vector<MaskPattern> masks;
  for (int i = 0; i < 8; ++i) {
    segs.push_back(RandomSegment(c, rng, i));
    masks.push_back(TrainingMask(kT, rng, {}, segs.back().valid));
  }
  const LossTargets tg = MakeTargets(segs, masks, model.stats);
  ModelLoss loss = ComputeModelLoss(
      model.Forward(MakeBatch(segs, masks, model.stats)), tg, 0.1);
  Backward(loss.total);
  for (const auto& p : model.params()) {
    double mag = 0.0;
    for (double g : p.tensor.grad()) mag += std::abs(g);
    EXPECT_GT(mag, 0.0) << p.name;
  }
}

TEST(BtmTest, FullLossMatchesFiniteDifferences) {
  BtmConfig c = SmallConfig();
  c.embed_dim = 4;
  c.encoder_layers = 1;
  Btm model(c, 51);
  Rng rng(13);
  std::vector<TrajectorySegment> segs;
  std::vector<MaskPattern> masks;
  for (int i = 0; i < 3; ++i) {
    segs.push_back(RandomSegment(c, rng, i));
    masks.push_back(TrainingMaskWith(kT, 0.5, kT, rng, {}));
  }
  const BtmBatch batch = MakeBatch(segs, masks, model.stats);
  const LossTargets tg = MakeTargets(segs, masks, model.stats);
  auto loss_fn = [&] {
    ForwardOptions opts;
    opts.allow_gather = false;
    return ComputeModelLoss(model.Forward(batch, opts), tg, 0.3).total;
  };
  std::vector<Tensor> probes;
  for (const char* name :
       {"lift.state.weight", "embed.time", "mask_token",
        "encoder.0.attn.qkv.weight", "encoder.0.mlp.fc1.weight",
        "decoder.0.attn.proj.weight", "decoder.0.ln2.gamma",
        "head.action.fc2.weight", "head.rtg.fc1.weight", "encoder.ln.beta"}) {
    probes.push_back(Param(model, name));
  }
  // 10 tensors, first two entries of each
  EXPECT_LT(testing::GradCheck(loss_fn, probes, 1e-6, 2), 1e-4);
}

TEST(PredictTest, RcbcReturnsOneDistributionPerRemainingStep) {
  const BtmConfig c = SmallConfig();
  Btm model(c, 61);
  Rng rng(14);
  const TrajectorySegment seg = RandomSegment(c, rng);
  for (int t_now = 1; t_now <= kT; ++t_now) {
    const auto preds = Predict(model, MaskKind::kRcbc, seg, t_now);
    ASSERT_EQ(static_cast<int>(preds.size()), kT - t_now + 1);
    for (const auto& p : preds) {
      EXPECT_EQ(p.modality, Modality::kAction);
      EXPECT_EQ(p.value.size(), 2u);
      EXPECT_EQ(p.log_std.size(), 2u);
      EXPECT_GE(p.t, t_now - 1);
    }
  }
}

TEST(PredictTest, RpReturnsRewardAndReturnFromNowOn) {
  const BtmConfig c = SmallConfig();
  Btm model(c, 62);
  Rng rng(15);
  const TrajectorySegment seg = RandomSegment(c, rng);
  const int t_now = 2;
  const auto preds = Predict(model, MaskKind::kRp, seg, t_now);
  int rewards = 0, rtgs = 0;
  for (const auto& p : preds) {
    EXPECT_GE(p.t, t_now - 1);
    rewards += p.modality == Modality::kReward;
    rtgs += p.modality == Modality::kRtg;
  }
  EXPECT_EQ(rewards, kT - t_now + 1);
  EXPECT_EQ(rtgs, kT - t_now + 1);
}

TEST(BtmTrainingTest, ReconstructionImprovesOnToyData) {
  PointMassEnv env;
  Dataset ds = GenerateDataset(env, NamedPolicyMix("medium"), 3, 4);
  BtmConfig c;
  c.state_dim = 4;
  c.action_dim = 2;
  c.embed_dim = 16;
  c.n_heads = 2;
  c.dropout = 0.0;
  Btm model(c, 71);
  model.stats = NormalizationStats::Compute(ds.episodes);
  std::vector<TrajectorySegment> segs;
  for (int start = 0; start + 8 <= 50; start += 6) {
    segs.push_back(SliceSegment(ds.episodes[start % 3], start, 8));
  }
  MaskPattern all = MaskPattern::Empty(8);
  std::fill(all.visible.begin(), all.visible.end(), 1);
  // reconstruct every cell, visible ones included
  MaskPattern score = all;
  std::fill(score.predict.begin(), score.predict.end(), 1);
  const std::vector<MaskPattern> vis = {all};
  auto recon = [&] {
    NoGradGuard no_grad;
    LossTargets tg = MakeTargets(segs, std::vector<MaskPattern>{score},
                                 model.stats);
    BtmOutput out = model.Forward(MakeBatch(segs, vis, model.stats));
    return ReconstructionMse(out.state, tg.states,
                             tg.weight[int(Modality::kState)])
               .item() +
           ReconstructionMse(out.rtg, tg.rtgs, tg.weight[int(Modality::kRtg)])
               .item();
  };
  const double before = recon();
  TrainConfig tc;
  tc.steps = 150;
  tc.batch_size = 8;
  tc.warmup_steps = 10;
  tc.train_value = false;
  Pretrain(model, nullptr, ds.episodes, tc, 3);
  EXPECT_LT(recon(), before);
}

}  // namespace
}  // namespace m3pc
