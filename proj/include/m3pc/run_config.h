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

#ifndef M3PC_RUN_CONFIG_H_
#define M3PC_RUN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "m3pc/btm.h"
#include "m3pc/o2o.h"
#include "m3pc/planner.h"
#include "m3pc/training.h"
#include "m3pc/value.h"

namespace m3pc {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataSection {
  std::string env = "pm-v1";
  std::string mix = "medium";  // random|medium|medium-replay|expert
  int episodes = 200;
  uint64_t seed = 1;
};

struct EvalSection {
  int episodes = 10;
  int seeds = 5;
  // conditioning return; unset means the dataset's best episode return
  std::optional<double> target_return;
};

struct GoalSection {
  int steps = 30;      // guidance length
  int interval = 4;    // subgoal spacing
  int trials = 50;
};

// Everything a run needs, as one tree. Dotted keys ("planner.lambda") name
// the leaves for command-line overrides.
struct RunConfig {
  std::string name = "run";
  uint64_t seed = 0;
  std::string output_dir = "runs";
  DataSection data;
  BtmConfig model;
  ValueConfig value;
  TrainConfig train;
  PlannerConfig planner;
  O2OConfig o2o;
  EvalSection eval;
  GoalSection goal;

  // throws ConfigError
  void Validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Fingerprint of the whole tree (not just the model layout).
std::string RunFingerprint(const RunConfig& c);

// Sets `dotted_key` in `tree` to `value`. The value is read as JSON when it
// parses, as a bare string otherwise; integers widen to floats but the leaf
// must already exist and keep its type. Throws ConfigError.
void ApplyOverride(nlohmann::json& tree, std::string_view dotted_key,
                   std::string_view value);

// Defaults, then `path` (if any), then the overrides in order. The model's
// state/action dims follow data.env.
RunConfig LoadRunConfig(
    const std::optional<std::filesystem::path>& path,
    const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace m3pc

#endif  // M3PC_RUN_CONFIG_H_
