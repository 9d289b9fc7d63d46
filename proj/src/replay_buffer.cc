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

#include "m3pc/replay_buffer.h"

#include <algorithm>
#include <mutex>
#include <stdexcept>

namespace m3pc {

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
  if (capacity <= 0) throw std::invalid_argument("replay capacity must be > 0");
}

void ReplayBuffer::Add(Episode episode) {
  episode.Validate();
  auto stored = std::make_shared<const Episode>(std::move(episode));
  std::unique_lock lock(mutex_);
  episodes_.push_back(std::move(stored));
  while (static_cast<int>(episodes_.size()) > capacity_) episodes_.pop_front();
}

void ReplayBuffer::AddAll(std::span<const Episode> episodes) {
  for (const Episode& ep : episodes) Add(ep);
}

int ReplayBuffer::size() const {
  std::shared_lock lock(mutex_);
  return static_cast<int>(episodes_.size());
}

int64_t ReplayBuffer::total_steps() const {
  std::shared_lock lock(mutex_);
  int64_t n = 0;
  for (const auto& ep : episodes_) n += ep->length();
  return n;
}

int ReplayBuffer::SampleEpisodeIndex(Rng& rng) const {
  std::shared_lock lock(mutex_);
  if (episodes_.empty()) throw std::out_of_range("replay buffer is empty");
  std::uniform_int_distribution<int> pick(0,
                                          static_cast<int>(episodes_.size()) - 1);
  return pick(rng);
}

TrajectorySegment ReplayBuffer::SampleSegment(int segment_length,
                                              Rng& rng) const {
  std::shared_ptr<const Episode> episode;
  {
    std::shared_lock lock(mutex_);
    if (episodes_.empty()) throw std::out_of_range("replay buffer is empty");
    std::uniform_int_distribution<int> pick(
        0, static_cast<int>(episodes_.size()) - 1);
    episode = episodes_[pick(rng)];
  }
  const int last_start = std::max(0, episode->length() - segment_length);
  std::uniform_int_distribution<int> start(0, last_start);
  return SliceSegment(*episode, start(rng), segment_length);
}

std::vector<Episode> ReplayBuffer::Snapshot() const {
  std::shared_lock lock(mutex_);
  std::vector<Episode> out;
  out.reserve(episodes_.size());
  for (const auto& ep : episodes_) out.push_back(*ep);
  return out;
}

}  // namespace m3pc
