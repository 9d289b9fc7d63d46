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

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "m3pc/ops.h"

namespace m3pc {
namespace {

constexpr int kM = kNumModalities;

Tensor UniformInit(const Shape& shape, double bound, Rng& rng,
                   bool requires_grad = true) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = u(rng);
  return Tensor::FromData(shape, std::move(v), requires_grad);
}

Tensor NormalInit(const Shape& shape, double stddev, Rng& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = n(rng);
  return Tensor::FromData(shape, std::move(v), true);
}

int PayloadDim(Modality m, int state_dim, int action_dim) {
  switch (m) {
    case Modality::kState:
      return state_dim;
    case Modality::kAction:
      return action_dim;
    default:
      return 1;
  }
}

Tensor MaybeDropout(const Tensor& x, const ForwardOptions& options, double p) {
  if (!options.training || p <= 0.0 || options.dropout_rng == nullptr) {
    return x;
  }
  return Dropout(x, p, *options.dropout_rng);
}

}  // namespace

void BtmConfig::Validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("BtmConfig: " + msg);
  };
  if (state_dim < 1 || action_dim < 1) fail("state/action dims must be >= 1");
  if (embed_dim < 1 || n_heads < 1) fail("embed_dim and n_heads must be >= 1");
  if (embed_dim % n_heads != 0) {
    fail("embed_dim " + std::to_string(embed_dim) +
         " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (encoder_layers < 0 || decoder_layers < 0) fail("negative layer count");
  if (segment_length < 1) fail("segment_length must be >= 1");
  if (context_length < 1 || context_length > segment_length) {
    fail("context_length must lie in [1, segment_length]");
  }
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must lie in [0, 1)");
  if (time_buckets < 1) fail("time_buckets must be >= 1");
}

void to_json(nlohmann::json& j, const BtmConfig& c) {
  j = {{"state_dim", c.state_dim},         {"action_dim", c.action_dim},
       {"embed_dim", c.embed_dim},         {"n_heads", c.n_heads},
       {"encoder_layers", c.encoder_layers},
       {"decoder_layers", c.decoder_layers},
       {"segment_length", c.segment_length},
       {"context_length", c.context_length},
       {"dropout", c.dropout},             {"time_buckets", c.time_buckets}};
}

void from_json(const nlohmann::json& j, BtmConfig& c) {
  BtmConfig d;
  c.state_dim = j.value("state_dim", d.state_dim);
  c.action_dim = j.value("action_dim", d.action_dim);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.encoder_layers = j.value("encoder_layers", d.encoder_layers);
  c.decoder_layers = j.value("decoder_layers", d.decoder_layers);
  c.segment_length = j.value("segment_length", d.segment_length);
  c.context_length = j.value("context_length", d.context_length);
  c.dropout = j.value("dropout", d.dropout);
  c.time_buckets = j.value("time_buckets", d.time_buckets);
}

bool BtmBatch::SharedMask() const {
  if (masks.size() == 1) return true;
  for (size_t i = 1; i < masks.size(); ++i) {
    if (!(masks[i].visible == masks[0].visible)) return false;
  }
  return true;
}

BtmBatch MakeBatch(std::span<const TrajectorySegment> segments,
                   std::span<const MaskPattern> masks,
                   const NormalizationStats& stats) {
  if (segments.empty()) throw std::invalid_argument("MakeBatch: no segments");
  if (masks.size() != 1 && masks.size() != segments.size()) {
    throw std::invalid_argument("MakeBatch: need 1 or B masks");
  }
  BtmBatch b;
  b.batch = static_cast<int>(segments.size());
  b.length = segments[0].length;
  b.state_dim = segments[0].state_dim;
  b.action_dim = segments[0].action_dim;
  b.masks.assign(masks.begin(), masks.end());
  const int T = b.length, sd = b.state_dim, ad = b.action_dim;
  b.states.assign(size_t(b.batch) * T * sd, 0.0);
  b.actions.assign(size_t(b.batch) * T * ad, 0.0);
  b.rtgs.assign(size_t(b.batch) * T, 0.0);
  b.rewards.assign(size_t(b.batch) * T, 0.0);
  b.timesteps.assign(size_t(b.batch) * T, 0);
  b.valid.assign(size_t(b.batch) * T, 0);
  for (int i = 0; i < b.batch; ++i) {
    const TrajectorySegment& s = segments[i];
    if (s.length != T || s.state_dim != sd || s.action_dim != ad) {
      throw std::invalid_argument("MakeBatch: segment shapes disagree");
    }
    const MaskPattern& m = b.mask(i);
    if (m.length != T) throw std::invalid_argument("MakeBatch: mask length");
    for (int t = 0; t < T; ++t) {
      const size_t cell = size_t(i) * T + t;
      b.timesteps[cell] = s.timesteps[t];
      b.valid[cell] = s.valid[t];
      if (m.IsVisible(Modality::kState, t)) {
        for (int k = 0; k < sd; ++k) {
          b.states[cell * sd + k] = stats.NormalizeState(s.state(t)[k], k);
        }
      }
      if (m.IsVisible(Modality::kAction, t)) {
        for (int k = 0; k < ad; ++k) b.actions[cell * ad + k] = s.action(t)[k];
      }
      if (m.IsVisible(Modality::kRtg, t)) {
        b.rtgs[cell] = stats.NormalizeRtg(s.rtgs[t]);
      }
      if (m.IsVisible(Modality::kReward, t)) {
        b.rewards[cell] = stats.NormalizeReward(s.rewards[t]);
      }
    }
  }
  return b;
}

Btm::Btm(const BtmConfig& config, uint64_t seed) : config_(config) {
  config_.Validate();
  stats = NormalizationStats::Identity(config_.state_dim);
  Rng rng(seed);
  const int d = config_.embed_dim;
  const double lin = 1.0 / std::sqrt(double(d));
  auto add = [&](const std::string& name, const Tensor& t) {
    params_.push_back({name, t});
  };
  for (Modality m : kModalities) {
    const int i = static_cast<int>(m);
    const int in = PayloadDim(m, config_.state_dim, config_.action_dim);
    lift_w_[i] = UniformInit({in, d}, 1.0 / std::sqrt(double(in)), rng);
    lift_b_[i] = UniformInit({d}, 1.0 / std::sqrt(double(in)), rng);
    add(std::string("lift.") + ModalityName(m) + ".weight", lift_w_[i]);
    add(std::string("lift.") + ModalityName(m) + ".bias", lift_b_[i]);
  }
  modality_table_ = NormalInit({kM, d}, 0.02, rng);
  position_table_ = NormalInit({config_.segment_length, d}, 0.02, rng);
  time_table_ = NormalInit({config_.time_buckets, d}, 0.02, rng);
  mask_token_ = NormalInit({d}, 0.02, rng);
  add("embed.modality", modality_table_);
  add("embed.position", position_table_);
  add("embed.time", time_table_);
  add("mask_token", mask_token_);

  auto make_block = [&](const std::string& prefix) {
    Block b;
    const double hid = 1.0 / std::sqrt(4.0 * d);
    b.ln1_g = Tensor::Full({d}, 1.0, true);
    b.ln1_b = Tensor::Zeros({d}, true);
    b.qkv_w = UniformInit({d, 3 * d}, lin, rng);
    b.qkv_b = Tensor::Zeros({3 * d}, true);
    b.proj_w = UniformInit({d, d}, lin, rng);
    b.proj_b = Tensor::Zeros({d}, true);
    b.ln2_g = Tensor::Full({d}, 1.0, true);
    b.ln2_b = Tensor::Zeros({d}, true);
    b.fc1_w = UniformInit({d, 4 * d}, lin, rng);
    b.fc1_b = Tensor::Zeros({4 * d}, true);
    b.fc2_w = UniformInit({4 * d, d}, hid, rng);
    b.fc2_b = Tensor::Zeros({d}, true);
    add(prefix + ".ln1.gamma", b.ln1_g);
    add(prefix + ".ln1.beta", b.ln1_b);
    add(prefix + ".attn.qkv.weight", b.qkv_w);
    add(prefix + ".attn.qkv.bias", b.qkv_b);
    add(prefix + ".attn.proj.weight", b.proj_w);
    add(prefix + ".attn.proj.bias", b.proj_b);
    add(prefix + ".ln2.gamma", b.ln2_g);
    add(prefix + ".ln2.beta", b.ln2_b);
    add(prefix + ".mlp.fc1.weight", b.fc1_w);
    add(prefix + ".mlp.fc1.bias", b.fc1_b);
    add(prefix + ".mlp.fc2.weight", b.fc2_w);
    add(prefix + ".mlp.fc2.bias", b.fc2_b);
    return b;
  };
  for (int l = 0; l < config_.encoder_layers; ++l) {
    encoder_.push_back(make_block("encoder." + std::to_string(l)));
  }
  enc_ln_g_ = Tensor::Full({d}, 1.0, true);
  enc_ln_b_ = Tensor::Zeros({d}, true);
  add("encoder.ln.gamma", enc_ln_g_);
  add("encoder.ln.beta", enc_ln_b_);
  for (int l = 0; l < config_.decoder_layers; ++l) {
    decoder_.push_back(make_block("decoder." + std::to_string(l)));
  }
  dec_ln_g_ = Tensor::Full({d}, 1.0, true);
  dec_ln_b_ = Tensor::Zeros({d}, true);
  add("decoder.ln.gamma", dec_ln_g_);
  add("decoder.ln.beta", dec_ln_b_);
  for (Modality m : kModalities) {
    const int i = static_cast<int>(m);
    int out = PayloadDim(m, config_.state_dim, config_.action_dim);
    if (m == Modality::kAction) out *= 2;  // mean, log-std
    Head& h = heads_[i];
    h.w1 = UniformInit({d, d}, lin, rng);
    h.b1 = Tensor::Zeros({d}, true);
    h.w2 = UniformInit({d, out}, lin, rng);
    h.b2 = Tensor::Zeros({out}, true);
    const std::string p = std::string("head.") + ModalityName(m);
    add(p + ".fc1.weight", h.w1);
    add(p + ".fc1.bias", h.b1);
    add(p + ".fc2.weight", h.w2);
    add(p + ".fc2.bias", h.b2);
  }
}

void Btm::CopyFrom(const Btm& other) {
  if (other.params_.size() != params_.size()) {
    throw std::invalid_argument("CopyFrom: parameter layout differs");
  }
  for (size_t i = 0; i < params_.size(); ++i) {
    auto src = other.params_[i].tensor.data();
    auto dst = params_[i].tensor.mutable_data();
    if (src.size() != dst.size()) {
      throw std::invalid_argument("CopyFrom: size mismatch in " +
                                  params_[i].name);
    }
    std::copy(src.begin(), src.end(), dst.begin());
  }
  stats = other.stats;
}

Tensor Btm::Embeddings(const BtmBatch& batch) const {
  const int T = batch.length, L = kM * T;
  std::vector<int> mod_idx(L), pos_idx(L);
  for (int m = 0; m < kM; ++m) {
    for (int t = 0; t < T; ++t) {
      mod_idx[m * T + t] = m;
      pos_idx[m * T + t] = t;
    }
  }
  std::vector<int> time_idx(size_t(batch.batch) * L);
  for (int b = 0; b < batch.batch; ++b) {
    for (int m = 0; m < kM; ++m) {
      for (int t = 0; t < T; ++t) {
        const int step = batch.timesteps[size_t(b) * T + t];
        time_idx[size_t(b) * L + m * T + t] =
            std::clamp(step, 0, config_.time_buckets - 1);
      }
    }
  }
  Tensor shared = Add(EmbeddingLookup(modality_table_, mod_idx, {L}),
                      EmbeddingLookup(position_table_, pos_idx, {L}));
  return Add(EmbeddingLookup(time_table_, time_idx, {batch.batch, L}), shared);
}

Tensor Btm::Lift(const BtmBatch& batch) const {
  const int B = batch.batch, T = batch.length;
  std::vector<Tensor> parts;
  for (Modality m : kModalities) {
    const int i = static_cast<int>(m);
    Tensor payload;
    switch (m) {
      case Modality::kState:
        payload = Tensor::FromData({B, T, batch.state_dim}, batch.states);
        break;
      case Modality::kRtg:
        payload = Tensor::FromData({B, T, 1}, batch.rtgs);
        break;
      case Modality::kAction:
        payload = Tensor::FromData({B, T, batch.action_dim}, batch.actions);
        break;
      case Modality::kReward:
        payload = Tensor::FromData({B, T, 1}, batch.rewards);
        break;
    }
    parts.push_back(Linear(payload, lift_w_[i], lift_b_[i]));
  }
  return Concat(parts, 1);
}

Tensor Btm::RunBlock(const Block& blk, const Tensor& x,
                     std::span<const unsigned char> key_visible,
                     const ForwardOptions& options) const {
  const int B = x.dim(0), L = x.dim(1), d = config_.embed_dim;
  const int H = config_.n_heads, dh = d / H;
  Tensor h = LayerNorm(x, blk.ln1_g, blk.ln1_b);
  Tensor qkv = Linear(h, blk.qkv_w, blk.qkv_b);
  qkv = Permute(Reshape(qkv, {B, L, 3, H, dh}), {2, 0, 3, 1, 4});
  qkv = Reshape(qkv, {3, B * H, L, dh});
  auto part = [&](int i) {
    return Reshape(Slice(qkv, 0, i, 1), {B * H, L, dh});
  };
  Tensor q = part(0), k = part(1), v = part(2);
  Tensor scores = Scale(BatchMatMul(q, k, true), 1.0 / std::sqrt(double(dh)));
  Tensor probs = MaskedSoftmax(scores, key_visible, H);
  Tensor attn = BatchMatMul(probs, v, false);
  attn = Reshape(Permute(Reshape(attn, {B, H, L, dh}), {0, 2, 1, 3}),
                 {B, L, d});
  attn = Linear(attn, blk.proj_w, blk.proj_b);
  Tensor y = Add(x, MaybeDropout(attn, options, config_.dropout));
  Tensor m = LayerNorm(y, blk.ln2_g, blk.ln2_b);
  m = Linear(Gelu(Linear(m, blk.fc1_w, blk.fc1_b)), blk.fc2_w, blk.fc2_b);
  return Add(y, MaybeDropout(m, options, config_.dropout));
}

Tensor Btm::RunHead(const Head& head, const Tensor& x) const {
  return Linear(Gelu(Linear(x, head.w1, head.b1)), head.w2, head.b2);
}

Tensor Btm::Encode(const BtmBatch& batch, const ForwardOptions& options) const {
  const int B = batch.batch, T = batch.length, L = kM * T;
  const int d = config_.embed_dim;
  if (T != config_.segment_length || batch.state_dim != config_.state_dim ||
      batch.action_dim != config_.action_dim) {
    throw std::invalid_argument("Btm: batch does not match model config");
  }
  Tensor x = MaybeDropout(Add(Lift(batch), Embeddings(batch)), options,
                          config_.dropout);

  const bool gather = options.allow_gather && !options.training &&
                      !GradEnabled() && batch.SharedMask();
  if (gather) {
    const auto& vis = batch.mask(0).visible;
    std::vector<int> rows;
    for (int i = 0; i < L; ++i) {
      if (vis[i]) rows.push_back(i);
    }
    const int nv = static_cast<int>(rows.size());
    std::vector<double> out(size_t(B) * L * d, 0.0);
    if (nv > 0) {
      std::vector<double> packed(size_t(B) * nv * d);
      auto xs = x.data();
      for (int b = 0; b < B; ++b) {
        for (int r = 0; r < nv; ++r) {
          std::copy_n(xs.begin() + (size_t(b) * L + rows[r]) * d, d,
                      packed.begin() + (size_t(b) * nv + r) * d);
        }
      }
      Tensor h = Tensor::FromData({B, nv, d}, std::move(packed));
      const std::vector<unsigned char> all(size_t(B) * nv, 1);
      for (const Block& blk : encoder_) h = RunBlock(blk, h, all, options);
      h = LayerNorm(h, enc_ln_g_, enc_ln_b_);
      auto hs = h.data();
      for (int b = 0; b < B; ++b) {
        for (int r = 0; r < nv; ++r) {
          std::copy_n(hs.begin() + (size_t(b) * nv + r) * d, d,
                      out.begin() + (size_t(b) * L + rows[r]) * d);
        }
      }
    }
    return Tensor::FromData({B, L, d}, std::move(out));
  }

  std::vector<unsigned char> key_visible(size_t(B) * L);
  for (int b = 0; b < B; ++b) {
    const auto& vis = batch.mask(b).visible;
    std::copy(vis.begin(), vis.end(), key_visible.begin() + size_t(b) * L);
  }
  for (const Block& blk : encoder_) x = RunBlock(blk, x, key_visible, options);
  return LayerNorm(x, enc_ln_g_, enc_ln_b_);
}

Tensor Btm::DecoderInput(const BtmBatch& batch, const Tensor& latents) const {
  const int B = batch.batch, L = kM * batch.length, d = config_.embed_dim;
  std::vector<double> keep(size_t(B) * L * d), fill(size_t(B) * L * d);
  for (int b = 0; b < B; ++b) {
    const auto& vis = batch.mask(b).visible;
    for (int i = 0; i < L; ++i) {
      const double on = vis[i] ? 1.0 : 0.0;
      std::fill_n(keep.begin() + (size_t(b) * L + i) * d, d, on);
      std::fill_n(fill.begin() + (size_t(b) * L + i) * d, d, 1.0 - on);
    }
  }
  Tensor keep_t = Tensor::FromData({B, L, d}, std::move(keep));
  Tensor fill_t = Tensor::FromData({B, L, d}, std::move(fill));
  Tensor z = Add(Mul(latents, keep_t), Mul(fill_t, mask_token_));
  return Add(z, Embeddings(batch));
}

BtmOutput Btm::Forward(const BtmBatch& batch,
                       const ForwardOptions& options) const {
  passes_.fetch_add(1);
  const int B = batch.batch, T = batch.length;
  Tensor latents = Encode(batch, options);
  Tensor z = DecoderInput(batch, latents);
  const std::vector<unsigned char> all(size_t(B) * kM * T, 1);
  for (const Block& blk : decoder_) z = RunBlock(blk, z, all, options);
  z = LayerNorm(z, dec_ln_g_, dec_ln_b_);

  BtmOutput out;
  auto head_out = [&](Modality m) {
    const int i = static_cast<int>(m);
    return RunHead(heads_[i], Slice(z, 1, i * T, T));
  };
  out.state = head_out(Modality::kState);
  out.rtg = head_out(Modality::kRtg);
  out.reward = head_out(Modality::kReward);
  Tensor act = head_out(Modality::kAction);
  const int ad = config_.action_dim;
  out.action_mean = Slice(act, 2, 0, ad);
  const double half_span = 0.5 * (kLogStdMax - kLogStdMin);
  out.action_log_std = AddScalar(
      Scale(AddScalar(Tanh(Slice(act, 2, ad, ad)), 1.0), half_span),
      kLogStdMin);
  return out;
}

std::vector<CellPrediction> Predict(const Btm& model, MaskKind kind,
                                    const TrajectorySegment& segment,
                                    int t_now) {
  NoGradGuard no_grad;
  MaskPattern mask = NamedMask(kind, t_now, segment.length);
  mask.RestrictToValid(segment.valid);
  const std::vector<TrajectorySegment> segs = {segment};
  const std::vector<MaskPattern> masks = {mask};
  BtmBatch batch = MakeBatch(segs, masks, model.stats);
  BtmOutput out = model.Forward(batch);
  const int T = segment.length, sd = segment.state_dim,
            ad = segment.action_dim;
  const NormalizationStats& st = model.stats;
  std::vector<CellPrediction> preds;
  for (Modality m : kModalities) {
    for (int t = 0; t < T; ++t) {
      if (!mask.IsPredicted(m, t)) continue;
      CellPrediction p;
      p.modality = m;
      p.t = t;
      switch (m) {
        case Modality::kState:
          for (int k = 0; k < sd; ++k) {
            p.value.push_back(
                st.DenormalizeState(out.state.at(int64_t(t) * sd + k), k));
          }
          break;
        case Modality::kRtg:
          p.value.push_back(st.DenormalizeRtg(out.rtg.at(t)));
          break;
        case Modality::kReward:
          p.value.push_back(st.DenormalizeReward(out.reward.at(t)));
          break;
        case Modality::kAction:
          for (int k = 0; k < ad; ++k) {
            p.value.push_back(out.action_mean.at(int64_t(t) * ad + k));
            p.log_std.push_back(out.action_log_std.at(int64_t(t) * ad + k));
          }
          break;
      }
      preds.push_back(std::move(p));
    }
  }
  return preds;
}

}  // namespace m3pc
