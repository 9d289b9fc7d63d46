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

#ifndef M3PC_REPLAY_BUFFER_H_
#define M3PC_REPLAY_BUFFER_H_

#include <cstdint>
#include <deque>
#include <memory>
#include <shared_mutex>
#include <vector>

#include "m3pc/rng.h"
#include "m3pc/trajectory.h"

namespace m3pc {

// Bounded episode store with FIFO eviction. One writer, many readers: each
// sample call works on a consistent snapshot of the stored episodes.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity);

  void Add(Episode episode);
  void AddAll(std::span<const Episode> episodes);

  int size() const;
  int capacity() const { return capacity_; }
  bool empty() const { return size() == 0; }
  int64_t total_steps() const;

  // Uniform episode, then a uniform start in [0, max(0, length - T)]; short
  // episodes are right-padded. Throws std::out_of_range when empty.
  TrajectorySegment SampleSegment(int segment_length, Rng& rng) const;

  // index of the episode SampleSegment would draw; exposed for tests
  int SampleEpisodeIndex(Rng& rng) const;

  std::vector<Episode> Snapshot() const;

 private:
  int capacity_;
  mutable std::shared_mutex mutex_;
  std::deque<std::shared_ptr<const Episode>> episodes_;
};

}  // namespace m3pc

#endif  // M3PC_REPLAY_BUFFER_H_
