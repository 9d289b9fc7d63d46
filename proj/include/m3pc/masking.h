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

// Visibility patterns over the (modality x timestep) token grid. The grid is
// stored modality-major: cell (m, t) lives at m * T + t with t 0-based.
// Public entry points that take a "current" step use 1-based t_now.

#ifndef M3PC_MASKING_H_
#define M3PC_MASKING_H_

#include <array>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "m3pc/rng.h"

namespace m3pc {

enum class Modality : int { kState = 0, kRtg = 1, kAction = 2, kReward = 3 };
inline constexpr int kNumModalities = 4;
inline constexpr std::array<Modality, kNumModalities> kModalities = {
    Modality::kState, Modality::kRtg, Modality::kAction, Modality::kReward};

const char* ModalityName(Modality m);

struct MaskPattern {
  int length = 0;  // T
  std::vector<unsigned char> visible;  // fed to the encoder
  std::vector<unsigned char> predict;  // scored / read out

  static MaskPattern Empty(int length);

  static int Cell(Modality m, int t, int length) {
    return static_cast<int>(m) * length + t;
  }
  bool IsVisible(Modality m, int t) const {
    return visible[Cell(m, t, length)] != 0;
  }
  bool IsPredicted(Modality m, int t) const {
    return predict[Cell(m, t, length)] != 0;
  }
  void SetVisible(Modality m, int t, bool on = true) {
    visible[Cell(m, t, length)] = on;
  }
  void SetPredict(Modality m, int t, bool on = true) {
    predict[Cell(m, t, length)] = on;
  }
  int CountVisible(Modality m) const;
  int CountPredicted(Modality m) const;
  int CountPredicted() const;

  // clears every cell at timesteps flagged invalid
  void RestrictToValid(std::span<const unsigned char> valid);
  // true when no cell is both visible and predicted
  bool Disjoint() const;

  bool operator==(const MaskPattern&) const = default;
};

enum class MaskKind { kRcbc, kFd, kRp, kId, kPi, kGr };

const char* MaskKindName(MaskKind kind);
// throws std::invalid_argument for unknown names
MaskKind ParseMaskKind(std::string_view name);

// Test-time capability masks. t_now is 1-based, 1 <= t_now <= T; the goal
// state for PI and GR occupies the state cell at timestep T.
MaskPattern NamedMask(MaskKind kind, int t_now, int length);
MaskPattern NamedMask(std::string_view kind, int t_now, int length);

struct TrainingMaskOptions {
  double min_ratio = 0.0;
  double max_ratio = 0.6;
};

// Two-stage pretraining mask: hide each cell with probability
// p ~ U[min_ratio, max_ratio], then hide every cell right of a cut
// c ~ U{1..T}. Cells at invalid timesteps are neither visible nor predicted;
// predict is the complement of visible over valid cells.
MaskPattern TrainingMask(int length, Rng& rng,
                         const TrainingMaskOptions& options = {},
                         std::span<const unsigned char> valid = {});

// Same construction with the stage parameters fixed (cut is 1-based).
MaskPattern TrainingMaskWith(int length, double ratio, int cut, Rng& rng,
                             std::span<const unsigned char> valid = {});

}  // namespace m3pc

#endif  // M3PC_MASKING_H_
