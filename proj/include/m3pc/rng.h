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

#ifndef M3PC_RNG_H_
#define M3PC_RNG_H_

#include <cstdint>
#include <random>

namespace m3pc {

// Independent RNG streams derived from one root seed.
enum class SeedStream : uint64_t {
  kEnv = 1,
  kModelInit = 2,
  kTraining = 3,
  kPlanner = 4,
  kEvaluation = 5,
  kData = 6,
  kExploration = 7,
};

// SplitMix64 finalizer over (root, stream, index). Pure; the documented
// split function behind every derived seed.
inline uint64_t SplitSeed(uint64_t root, uint64_t stream, uint64_t index = 0) {
  uint64_t z = root + 0x9E3779B97F4A7C15ULL * (stream + 1) +
               0xBF58476D1CE4E5B9ULL * index;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline uint64_t SplitSeed(uint64_t root, SeedStream stream,
                          uint64_t index = 0) {
  return SplitSeed(root, static_cast<uint64_t>(stream), index);
}

using Rng = std::mt19937_64;

}  // namespace m3pc

#endif  // M3PC_RNG_H_
