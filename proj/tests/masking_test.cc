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

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "gtest/gtest.h"
#include "m3pc/masking.h"

#ifndef M3PC_GOLDEN_DIR
#error "M3PC_GOLDEN_DIR must point at tests/golden"
#endif

namespace m3pc {
namespace {

constexpr MaskKind kAllKinds[] = {MaskKind::kRcbc, MaskKind::kFd,
                                  MaskKind::kRp,   MaskKind::kId,
                                  MaskKind::kPi,   MaskKind::kGr};

std::string Row(const std::vector<unsigned char>& cells, Modality m, int T) {
  std::string s;
  for (int t = 0; t < T; ++t) {
    s += cells[MaskPattern::Cell(m, t, T)] ? '1' : '0';
  }
  return s;
}

std::string Render(const std::vector<unsigned char>& cells, int T) {
  std::string s;
  for (Modality m : kModalities) s += (s.empty() ? "" : " ") + Row(cells, m, T);
  return s;
}

TEST(NamedMask, MatchesGoldenMatrices) {
  std::ifstream in(std::string(M3PC_GOLDEN_DIR) + "/named_masks.txt");
  ASSERT_TRUE(in) << "golden file missing";
  std::string line;
  int blocks = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream head(line);
    std::string kind, t_field, now_field;
    head >> kind >> t_field >> now_field;
    const int T = std::stoi(t_field.substr(2));
    const int now = std::stoi(now_field.substr(6));
    std::string visible_line, predict_line;
    std::getline(in, visible_line);
    std::getline(in, predict_line);
    const MaskPattern m = NamedMask(kind, now, T);
    EXPECT_EQ("visible " + Render(m.visible, T), visible_line) << line;
    EXPECT_EQ("predict " + Render(m.predict, T), predict_line) << line;
    ++blocks;
  }
  // 6 kinds x (2 + 4 + 8) current steps
  EXPECT_EQ(blocks, 6 * 14);
}

TEST(NamedMask, RcbcAtFirstStepPredictsAllActionsNoRewards) {
  const MaskPattern m = NamedMask(MaskKind::kRcbc, 1, 4);
  EXPECT_EQ(m.CountPredicted(Modality::kAction), 4);
  EXPECT_EQ(m.CountPredicted(Modality::kReward), 0);
  EXPECT_EQ(m.CountPredicted(), 4);
}

TEST(NamedMask, ForwardDynamicsAtLastStepPredictsNothing) {
  EXPECT_EQ(NamedMask(MaskKind::kFd, 4, 4).CountPredicted(), 0);
}

TEST(NamedMask, InverseDynamicsPredictsEveryAction) {
  const MaskPattern m = NamedMask(MaskKind::kId, 1, 3);
  EXPECT_EQ(m.CountPredicted(Modality::kAction), 3);
  EXPECT_EQ(m.CountPredicted(), 3);
}

TEST(NamedMask, UnknownKindRejected) {
  EXPECT_THROW(NamedMask("XYZ", 1, 4), std::invalid_argument);
  EXPECT_THROW(NamedMask(MaskKind::kFd, 0, 4), std::invalid_argument);
  EXPECT_THROW(NamedMask(MaskKind::kFd, 5, 4), std::invalid_argument);
}

TEST(NamedMask, VisibleAndPredictDisjointEverywhere) {
  for (int T = 1; T <= 12; ++T) {
    for (int now = 1; now <= T; ++now) {
      for (MaskKind k : kAllKinds) {
        EXPECT_TRUE(NamedMask(k, now, T).Disjoint())
            << MaskKindName(k) << " T=" << T << " t_now=" << now;
      }
    }
  }
}

TEST(NamedMask, GoalMasksNeverTouchRewardsOrReturns) {
  for (int T = 2; T <= 8; ++T) {
    for (int now = 1; now <= T; ++now) {
      for (MaskKind k : {MaskKind::kPi, MaskKind::kId, MaskKind::kGr}) {
        const MaskPattern m = NamedMask(k, now, T);
        for (Modality mod : {Modality::kReward, Modality::kRtg}) {
          EXPECT_EQ(m.CountVisible(mod), 0);
          EXPECT_EQ(m.CountPredicted(mod), 0);
        }
      }
    }
  }
}

TEST(NamedMask, RestrictToValidKeepsPredictInsideValidCells) {
  const std::vector<unsigned char> valid = {1, 1, 1, 0, 0};
  for (MaskKind k : kAllKinds) {
    MaskPattern m = NamedMask(k, 2, 5);
    m.RestrictToValid(valid);
    for (Modality mod : kModalities) {
      for (int t = 3; t < 5; ++t) {
        EXPECT_FALSE(m.IsPredicted(mod, t));
        EXPECT_FALSE(m.IsVisible(mod, t));
      }
    }
  }
}

TEST(TrainingMask, FullRatioHidesEverything) {
  Rng rng(3);
  const std::vector<unsigned char> valid = {1, 1, 1, 1, 1, 0, 0, 0};
  const MaskPattern m = TrainingMask(8, rng, {1.0, 1.0}, valid);
  for (Modality mod : kModalities) {
    EXPECT_EQ(m.CountVisible(mod), 0);
    EXPECT_EQ(m.CountPredicted(mod), 5);
  }
}

TEST(TrainingMask, ZeroRatioFullCutLeavesEverythingVisible) {
  Rng rng(4);
  const MaskPattern m = TrainingMaskWith(8, 0.0, 8, rng);
  for (Modality mod : kModalities) EXPECT_EQ(m.CountVisible(mod), 8);
  EXPECT_EQ(m.CountPredicted(), 0);
}

TEST(TrainingMask, NothingVisibleRightOfCut) {
  Rng rng(5);
  for (int cut = 1; cut <= 8; ++cut) {
    for (int rep = 0; rep < 20; ++rep) {
      const MaskPattern m = TrainingMaskWith(8, 0.3, cut, rng);
      for (Modality mod : kModalities) {
        for (int t = cut; t < 8; ++t) EXPECT_FALSE(m.IsVisible(mod, t));
      }
      EXPECT_TRUE(m.Disjoint());
    }
  }
}

TEST(TrainingMask, FirstColumnHideRateMatchesExpectedRatio) {
  // column 1 is never cut, so its hide rate is E[p] = 0.3 for p ~ U[0, 0.6]
  Rng rng(6);
  const int samples = 10000;
  int hidden = 0;
  for (int i = 0; i < samples; ++i) {
    const MaskPattern m = TrainingMask(8, rng, {0.0, 0.6});
    hidden += !m.IsVisible(Modality::kState, 0);
  }
  const double rate = double(hidden) / samples;
  const double sigma = std::sqrt(0.3 * 0.7 / samples);
  EXPECT_NEAR(rate, 0.3, 3.0 * sigma);
}

}  // namespace
}  // namespace m3pc
