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

// Checkpoint file: one JSON header line followed by the raw little-endian
// float64 payload of every parameter, section by section in declaration
// order.

#ifndef M3PC_CHECKPOINT_H_
#define M3PC_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "m3pc/btm.h"
#include "m3pc/trajectory.h"
#include "m3pc/value.h"

namespace m3pc {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// FNV-1a 64 over the compact dump of `config`, as 16 hex digits.
std::string ConfigFingerprint(const nlohmann::json& config);

// The parts of a run configuration that fix the parameter layout.
nlohmann::json ModelConfigJson(const BtmConfig& model,
                               const ValueConfig* value);

struct CheckpointHeader {
  std::string fingerprint;
  nlohmann::json config;  // ModelConfigJson
  int64_t step = 0;
  double log_sigma = 0.0;
  nlohmann::json extra;  // free-form (run name, env id, ...)
};

void WriteCheckpoint(const std::filesystem::path& path,
                     const CheckpointHeader& header, const Btm& model,
                     const QvModel* value);

CheckpointHeader ReadCheckpointHeader(const std::filesystem::path& path);

// Loads parameters, normalization statistics and value scales into existing
// models. Throws CheckpointError when the stored fingerprint differs from
// `expected_fingerprint` or the payload does not match the models.
CheckpointHeader ReadCheckpointInto(const std::filesystem::path& path,
                                    const std::string& expected_fingerprint,
                                    Btm& model, QvModel* value);

nlohmann::json StatsToJson(const NormalizationStats& stats);
NormalizationStats StatsFromJson(const nlohmann::json& j);

}  // namespace m3pc

#endif  // M3PC_CHECKPOINT_H_
