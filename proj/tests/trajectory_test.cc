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
#include <random>
#include <vector>

#include "gtest/gtest.h"
#include "m3pc/replay_buffer.h"
#include "m3pc/trajectory.h"

namespace m3pc {
namespace {

Episode MakeEpisode(int length, int sd, int ad, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Episode ep;
  ep.state_dim = sd;
  ep.action_dim = ad;
  for (int t = 0; t < length; ++t) {
    for (int d = 0; d < sd; ++d) ep.states.push_back(normal(rng));
    for (int d = 0; d < ad; ++d) ep.actions.push_back(normal(rng));
    ep.rewards.push_back(normal(rng));
  }
  return ep;
}

TEST(ComputeRtg, Examples) {
  EXPECT_EQ(ComputeRtg(std::vector<double>{0, 0, 0}),
            (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(ComputeRtg(std::vector<double>{1, 2, 3}),
            (std::vector<double>{6, 5, 3}));
  EXPECT_EQ(ComputeRtg(std::vector<double>{-2.5}),
            (std::vector<double>{-2.5}));
}

TEST(ComputeRtg, TelescopesToRewards) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const Episode ep = MakeEpisode(30, 2, 1, seed);
    const auto g = ComputeRtg(ep.rewards);
    for (int t = 0; t + 1 < ep.length(); ++t) {
      EXPECT_NEAR(g[t] - g[t + 1], ep.rewards[t], 1e-12);
    }
  }
}

TEST(SliceSegment, ShortEpisodeIsRightPadded) {
  const Episode ep = MakeEpisode(3, 4, 2, 1);
  const TrajectorySegment seg = SliceSegment(ep, 0, 8);
  EXPECT_EQ(seg.NumValid(), 3);
  for (int t = 0; t < 8; ++t) EXPECT_EQ(seg.valid[t], t < 3);
  EXPECT_EQ(seg.timesteps[5], 5);
  EXPECT_EQ(seg.rtgs[0], ComputeRtg(ep.rewards)[0]);
  for (int t = 3; t < 8; ++t) EXPECT_EQ(seg.rewards[t], 0.0);
}

TEST(ReplayBuffer, LongEpisodesGiveFullyValidSegments) {
  ReplayBuffer buffer(10);
  buffer.Add(MakeEpisode(20, 4, 2, 2));
  buffer.Add(MakeEpisode(8, 4, 2, 3));
  Rng rng(0);
  for (int i = 0; i < 200; ++i) {
    EXPECT_EQ(buffer.SampleSegment(8, rng).NumValid(), 8);
  }
}

TEST(ReplayBuffer, ShortEpisodeSegmentHasPadding) {
  ReplayBuffer buffer(10);
  buffer.Add(MakeEpisode(3, 4, 2, 2));
  Rng rng(0);
  const auto seg = buffer.SampleSegment(8, rng);
  EXPECT_EQ(seg.NumValid(), 3);
}

TEST(ReplayBuffer, EmptyBufferThrows) {
  ReplayBuffer buffer(3);
  Rng rng(0);
  EXPECT_THROW(buffer.SampleSegment(8, rng), std::out_of_range);
}

TEST(ReplayBuffer, FifoEviction) {
  ReplayBuffer buffer(2);
  buffer.Add(MakeEpisode(5, 1, 1, 10));
  buffer.Add(MakeEpisode(6, 1, 1, 11));
  buffer.Add(MakeEpisode(7, 1, 1, 12));
  const auto eps = buffer.Snapshot();
  ASSERT_EQ(eps.size(), 2u);
  EXPECT_EQ(eps[0].length(), 6);
  EXPECT_EQ(eps[1].length(), 7);
}

TEST(ReplayBuffer, EpisodeSelectionIsUniform) {
  ReplayBuffer buffer(4);
  buffer.Add(MakeEpisode(10, 2, 1, 1));
  buffer.Add(MakeEpisode(10, 2, 1, 2));
  Rng rng(99);
  const int draws = 10000;
  int first = 0;
  for (int i = 0; i < draws; ++i) first += buffer.SampleEpisodeIndex(rng) == 0;
  const double sigma = std::sqrt(draws * 0.25);
  EXPECT_NEAR(first, draws / 2.0, 3.0 * sigma);
}

TEST(NormalizationStats, RoundTripAndFloor) {
  std::vector<Episode> eps = {MakeEpisode(40, 3, 1, 5),
                              MakeEpisode(40, 3, 1, 6)};
  // constant dimension exercises the std floor
  for (auto& ep : eps) {
    for (int t = 0; t < ep.length(); ++t) ep.states[t * 3 + 2] = 4.0;
  }
  const auto stats = NormalizationStats::Compute(eps);
  EXPECT_EQ(stats.state_std[2], NormalizationStats::kMinStd);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    for (int d = 0; d < 3; ++d) {
      EXPECT_NEAR(stats.DenormalizeState(stats.NormalizeState(x, d), d), x,
                  1e-9);
    }
    EXPECT_NEAR(stats.DenormalizeRtg(stats.NormalizeRtg(x)), x, 1e-9);
    EXPECT_NEAR(stats.DenormalizeReward(stats.NormalizeReward(x)), x, 1e-9);
  }
}

}  // namespace
}  // namespace m3pc
