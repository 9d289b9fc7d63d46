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

#include "m3pc/masking.h"

#include <algorithm>

namespace m3pc {

const char* ModalityName(Modality m) {
  switch (m) {
    case Modality::kState:
      return "state";
    case Modality::kRtg:
      return "rtg";
    case Modality::kAction:
      return "action";
    case Modality::kReward:
      return "reward";
  }
  return "?";
}

MaskPattern MaskPattern::Empty(int length) {
  MaskPattern m;
  m.length = length;
  m.visible.assign(size_t(kNumModalities) * length, 0);
  m.predict.assign(size_t(kNumModalities) * length, 0);
  return m;
}

int MaskPattern::CountVisible(Modality m) const {
  int n = 0;
  for (int t = 0; t < length; ++t) n += IsVisible(m, t);
  return n;
}

int MaskPattern::CountPredicted(Modality m) const {
  int n = 0;
  for (int t = 0; t < length; ++t) n += IsPredicted(m, t);
  return n;
}

int MaskPattern::CountPredicted() const {
  return static_cast<int>(std::count(predict.begin(), predict.end(), 1));
}

void MaskPattern::RestrictToValid(std::span<const unsigned char> valid) {
  if (valid.empty()) return;
  for (Modality m : kModalities) {
    for (int t = 0; t < length; ++t) {
      if (!valid[t]) {
        SetVisible(m, t, false);
        SetPredict(m, t, false);
      }
    }
  }
}

bool MaskPattern::Disjoint() const {
  for (size_t i = 0; i < visible.size(); ++i) {
    if (visible[i] && predict[i]) return false;
  }
  return true;
}

const char* MaskKindName(MaskKind kind) {
  switch (kind) {
    case MaskKind::kRcbc:
      return "RCBC";
    case MaskKind::kFd:
      return "FD";
    case MaskKind::kRp:
      return "RP";
    case MaskKind::kId:
      return "ID";
    case MaskKind::kPi:
      return "PI";
    case MaskKind::kGr:
      return "GR";
  }
  return "?";
}

MaskKind ParseMaskKind(std::string_view name) {
  for (MaskKind k : {MaskKind::kRcbc, MaskKind::kFd, MaskKind::kRp,
                     MaskKind::kId, MaskKind::kPi, MaskKind::kGr}) {
    if (name == MaskKindName(k)) return k;
  }
  throw std::invalid_argument("unknown mask kind '" + std::string(name) + "'");
}

MaskPattern NamedMask(MaskKind kind, int t_now, int length) {
  if (length < 1 || t_now < 1 || t_now > length) {
    throw std::invalid_argument("mask requires 1 <= t_now <= T, got t_now=" +
                                std::to_string(t_now) +
                                " T=" + std::to_string(length));
  }
  MaskPattern m = MaskPattern::Empty(length);
  const int now = t_now - 1;  // 0-based current step
  const int goal = length - 1;
  for (int t = 0; t < length; ++t) {
    const bool past = t < now;
    switch (kind) {
      case MaskKind::kRcbc:
        // future states are unobserved at decision time
        m.SetVisible(Modality::kState, t, t <= now);
        m.SetVisible(Modality::kRtg, t);
        m.SetVisible(Modality::kAction, t, past);
        m.SetVisible(Modality::kReward, t, past);
        m.SetPredict(Modality::kAction, t, !past);
        break;
      case MaskKind::kFd:
        m.SetVisible(Modality::kState, t, t <= now);
        m.SetVisible(Modality::kAction, t);
        m.SetVisible(Modality::kRtg, t, past);
        m.SetVisible(Modality::kReward, t, past);
        m.SetPredict(Modality::kState, t, t > now);
        break;
      case MaskKind::kRp:
        m.SetVisible(Modality::kState, t);
        m.SetVisible(Modality::kAction, t);
        m.SetPredict(Modality::kReward, t, !past);
        m.SetPredict(Modality::kRtg, t, !past);
        break;
      case MaskKind::kId:
        m.SetVisible(Modality::kState, t);
        m.SetPredict(Modality::kAction, t);
        break;
      case MaskKind::kPi:
        m.SetVisible(Modality::kState, t, t <= now || t == goal);
        m.SetVisible(Modality::kAction, t, past);
        m.SetPredict(Modality::kState, t, t > now && t < goal);
        break;
      case MaskKind::kGr:
        m.SetVisible(Modality::kState, t, t == now || t == goal);
        m.SetPredict(Modality::kAction, t, t == now);
        break;
    }
  }
  return m;
}

MaskPattern NamedMask(std::string_view kind, int t_now, int length) {
  return NamedMask(ParseMaskKind(kind), t_now, length);
}

MaskPattern TrainingMaskWith(int length, double ratio, int cut, Rng& rng,
                             std::span<const unsigned char> valid) {
  MaskPattern m = MaskPattern::Empty(length);
  std::bernoulli_distribution hide(std::clamp(ratio, 0.0, 1.0));
  for (Modality mod : kModalities) {
    for (int t = 0; t < length; ++t) {
      const bool hidden_random = hide(rng);
      const bool hidden_future = t + 1 > cut;
      const bool is_valid = valid.empty() || valid[t];
      const bool vis = is_valid && !hidden_random && !hidden_future;
      m.SetVisible(mod, t, vis);
      m.SetPredict(mod, t, is_valid && !vis);
    }
  }
  return m;
}

MaskPattern TrainingMask(int length, Rng& rng,
                         const TrainingMaskOptions& options,
                         std::span<const unsigned char> valid) {
  std::uniform_real_distribution<double> ratio_dist(options.min_ratio,
                                                    options.max_ratio);
  const double ratio = options.max_ratio > options.min_ratio
                           ? ratio_dist(rng)
                           : options.min_ratio;
  std::uniform_int_distribution<int> cut_dist(1, length);
  const int cut = cut_dist(rng);
  return TrainingMaskWith(length, ratio, cut, rng, valid);
}

}  // namespace m3pc
