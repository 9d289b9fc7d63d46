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

#include "m3pc/run_config.h"

#include <fstream>
#include <memory>

#include "m3pc/checkpoint.h"
#include "m3pc/envs.h"

namespace m3pc {
namespace {

using nlohmann::json;

void Require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

// every key of `given` must exist in `known`, recursively
void CheckKnownKeys(const json& known, const json& given,
                    const std::string& prefix) {
  if (!given.is_object()) return;
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    auto k = known.find(it.key());
    if (k == known.end()) throw ConfigError("unknown config key '" + key + "'");
    if (k->is_object()) {
      if (!it->is_object()) throw ConfigError("'" + key + "' must be a section");
      CheckKnownKeys(*k, *it, key);
    }
  }
}

}  // namespace

void RunConfig::Validate() const {
  Require(data.episodes > 0, "data.episodes must be positive");
  Require(eval.episodes > 0 && eval.seeds > 0,
          "eval.episodes and eval.seeds must be positive");
  Require(goal.steps >= 2 && goal.interval >= 1 && goal.trials > 0,
          "goal.steps >= 2, goal.interval >= 1, goal.trials > 0");
  Require(train.steps >= 0 && train.batch_size > 0 && train.lr > 0.0,
          "train.steps >= 0, train.batch_size > 0, train.lr > 0");
  Require(value.gamma > 0.0 && value.gamma < 1.0, "value.gamma in (0, 1)");
  Require(value.expectile > 0.0 && value.expectile < 1.0,
          "value.expectile in (0, 1)");
  try {
    model.Validate();
    planner.Validate();
    o2o.Validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"name", c.name},
           {"seed", c.seed},
           {"output_dir", c.output_dir},
           {"data",
            {{"env", c.data.env},
             {"mix", c.data.mix},
             {"episodes", c.data.episodes},
             {"seed", c.data.seed}}},
           {"model", c.model},
           {"value", c.value},
           {"train", c.train},
           {"planner", c.planner},
           {"o2o", c.o2o},
           {"eval",
            {{"episodes", c.eval.episodes},
             {"seeds", c.eval.seeds},
             {"target_return", c.eval.target_return
                                   ? json(*c.eval.target_return)
                                   : json(nullptr)}}},
           {"goal",
            {{"steps", c.goal.steps},
             {"interval", c.goal.interval},
             {"trials", c.goal.trials}}}};
}

void from_json(const json& j, RunConfig& c) {
  RunConfig d;
  c.name = j.value("name", d.name);
  c.seed = j.value("seed", d.seed);
  c.output_dir = j.value("output_dir", d.output_dir);
  const json empty = json::object();
  const json& data = j.contains("data") ? j.at("data") : empty;
  c.data.env = data.value("env", d.data.env);
  c.data.mix = data.value("mix", d.data.mix);
  c.data.episodes = data.value("episodes", d.data.episodes);
  c.data.seed = data.value("seed", d.data.seed);
  c.model = j.contains("model") ? j.at("model").get<BtmConfig>() : d.model;
  c.value = j.contains("value") ? j.at("value").get<ValueConfig>() : d.value;
  c.train = j.contains("train") ? j.at("train").get<TrainConfig>() : d.train;
  c.planner =
      j.contains("planner") ? j.at("planner").get<PlannerConfig>() : d.planner;
  c.o2o = j.contains("o2o") ? j.at("o2o").get<O2OConfig>() : d.o2o;
  const json& eval = j.contains("eval") ? j.at("eval") : empty;
  c.eval.episodes = eval.value("episodes", d.eval.episodes);
  c.eval.seeds = eval.value("seeds", d.eval.seeds);
  c.eval.target_return.reset();
  if (auto it = eval.find("target_return");
      it != eval.end() && !it->is_null()) {
    c.eval.target_return = it->get<double>();
  }
  const json& goal = j.contains("goal") ? j.at("goal") : empty;
  c.goal.steps = goal.value("steps", d.goal.steps);
  c.goal.interval = goal.value("interval", d.goal.interval);
  c.goal.trials = goal.value("trials", d.goal.trials);
}

std::string RunFingerprint(const RunConfig& c) {
  return ConfigFingerprint(json(c));
}

void ApplyOverride(json& tree, std::string_view dotted_key,
                   std::string_view value) {
  const std::string key(dotted_key);
  json* node = &tree;
  size_t start = 0;
  while (true) {
    const size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty() || !node->is_object() || !node->contains(part)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) {
    throw ConfigError("'" + key + "' is a section, not a value");
  }
  json parsed = json::parse(value, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) parsed = std::string(value);

  const bool ok =
      node->is_null() ||
      (node->is_number_float() && parsed.is_number()) ||
      (node->is_number_integer() && parsed.is_number_integer() &&
       !(node->is_number_unsigned() && parsed.get<int64_t>() < 0)) ||
      (node->is_boolean() && parsed.is_boolean()) ||
      (node->is_string() && parsed.is_string());
  if (!ok) {
    throw ConfigError("'" + key + "' expects a " + node->type_name() +
                      ", got '" + std::string(value) + "'");
  }
  if (node->is_number_float()) {
    *node = parsed.get<double>();
  } else {
    *node = std::move(parsed);
  }
}

RunConfig LoadRunConfig(
    const std::optional<std::filesystem::path>& path,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  const json defaults = RunConfig{};
  json tree = defaults;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot open config " + path->string());
    json file = json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (file.is_discarded() || !file.is_object()) {
      throw ConfigError("config " + path->string() + " is not a JSON object");
    }
    CheckKnownKeys(defaults, file, "");
    tree.merge_patch(file);
  }
  for (const auto& [k, v] : overrides) ApplyOverride(tree, k, v);

  RunConfig c;
  try {
    c = tree.get<RunConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  std::unique_ptr<Env> env;
  try {
    env = MakeEnv(c.data.env);
  } catch (const std::exception&) {
    throw ConfigError("unknown env '" + c.data.env + "'");
  }
  c.model.state_dim = env->spec().state_dim;
  c.model.action_dim = env->spec().action_dim;
  c.Validate();
  return c;
}

}  // namespace m3pc
