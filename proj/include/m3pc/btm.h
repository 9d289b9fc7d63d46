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

// Bidirectional trajectory model: per-modality lifts, an encoder over the
// visible tokens, a decoder over every cell (mask token where hidden) and
// per-modality heads. Actions are decoded as diagonal Gaussians.

#ifndef M3PC_BTM_H_
#define M3PC_BTM_H_

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "m3pc/masking.h"
#include "m3pc/optim.h"
#include "m3pc/rng.h"
#include "m3pc/tensor.h"
#include "m3pc/trajectory.h"

namespace m3pc {

struct BtmConfig {
  int state_dim = 0;
  int action_dim = 0;
  int embed_dim = 64;
  int n_heads = 4;
  int encoder_layers = 2;
  int decoder_layers = 1;
  int segment_length = 8;  // T
  int context_length = 4;
  double dropout = 0.1;
  int time_buckets = 64;  // episode-time embedding rows; later steps share
                          // the last row

  void Validate() const;  // throws std::invalid_argument
};

void to_json(nlohmann::json& j, const BtmConfig& c);
void from_json(const nlohmann::json& j, BtmConfig& c);

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

// Model inputs, already normalized. Hidden cells are zeroed by MakeBatch.
struct BtmBatch {
  int batch = 0;
  int length = 0;
  int state_dim = 0;
  int action_dim = 0;
  std::vector<double> states;   // [B, T, state_dim]
  std::vector<double> rtgs;     // [B, T]
  std::vector<double> actions;  // [B, T, action_dim]
  std::vector<double> rewards;  // [B, T]
  std::vector<int> timesteps;   // [B, T]
  std::vector<unsigned char> valid;  // [B, T]
  // one mask per row, or a single mask shared by every row
  std::vector<MaskPattern> masks;

  const MaskPattern& mask(int row) const {
    return masks.size() == 1 ? masks[0] : masks[row];
  }
  bool SharedMask() const;
};

// Normalizes segments (env units) and drops hidden payloads. `masks` holds
// either one pattern per segment or a single shared pattern.
BtmBatch MakeBatch(std::span<const TrajectorySegment> segments,
                   std::span<const MaskPattern> masks,
                   const NormalizationStats& stats);

// Per-cell predictions in normalized units.
struct BtmOutput {
  Tensor state;           // [B, T, state_dim]
  Tensor rtg;             // [B, T, 1]
  Tensor action_mean;     // [B, T, action_dim], env units
  Tensor action_log_std;  // [B, T, action_dim], within [kLogStdMin, kLogStdMax]
  Tensor reward;          // [B, T, 1]
};

struct ForwardOptions {
  bool training = false;   // enables dropout
  Rng* dropout_rng = nullptr;
  // run the encoder on the visible tokens only when every row shares a mask
  // and gradients are off
  bool allow_gather = true;
};

class Btm {
 public:
  Btm(const BtmConfig& config, uint64_t seed);

  const BtmConfig& config() const { return config_; }
  ParameterList& params() { return params_; }
  const ParameterList& params() const { return params_; }

  BtmOutput Forward(const BtmBatch& batch,
                    const ForwardOptions& options = {}) const;

  // Encoder output for every token, [B, 4T, d] (hidden rows are whatever the
  // masked encoder leaves there; only visible rows are meaningful).
  Tensor Encode(const BtmBatch& batch, const ForwardOptions& options) const;
  // Decoder input: encoder latents at visible cells, mask token elsewhere,
  // plus embeddings. Exposed for tests.
  Tensor DecoderInput(const BtmBatch& batch, const Tensor& latents) const;

  // Every Forward call is one model pass regardless of batch size.
  int64_t forward_passes() const { return passes_.load(); }
  void ResetPassCounter() { passes_ = 0; }

  // copies parameter values from another model with the same config
  void CopyFrom(const Btm& other);

  NormalizationStats stats = NormalizationStats::Identity(0);

 private:
  struct Block {
    Tensor ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b;
    Tensor ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };
  struct Head {
    Tensor w1, b1, w2, b2;
  };

  Tensor Embeddings(const BtmBatch& batch) const;
  Tensor Lift(const BtmBatch& batch) const;
  Tensor RunBlock(const Block& block, const Tensor& x,
                  std::span<const unsigned char> key_visible,
                  const ForwardOptions& options) const;
  Tensor RunHead(const Head& head, const Tensor& x) const;

  BtmConfig config_;
  ParameterList params_;
  Tensor lift_w_[4], lift_b_[4];
  Tensor modality_table_, position_table_, time_table_;
  Tensor mask_token_;
  std::vector<Block> encoder_, decoder_;
  Tensor enc_ln_g_, enc_ln_b_, dec_ln_g_, dec_ln_b_;
  Head heads_[4];
  mutable std::atomic<int64_t> passes_{0};
};

// One modality's prediction at one cell, denormalized to env units.
struct CellPrediction {
  Modality modality = Modality::kState;
  int t = 0;  // 0-based segment position
  std::vector<double> value;    // mean for actions
  std::vector<double> log_std;  // actions only
};

// named mask -> encode -> decode -> the mask's predict cells, in order of
// (modality, t).
std::vector<CellPrediction> Predict(const Btm& model, MaskKind kind,
                                    const TrajectorySegment& segment,
                                    int t_now);

}  // namespace m3pc

#endif  // M3PC_BTM_H_
