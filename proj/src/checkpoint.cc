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

#include "m3pc/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace m3pc {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "m3pc-checkpoint";
constexpr int kVersion = 1;

void PutDoubles(std::ostream& out, std::span<const double> values) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint payload assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(values.data()),
            std::streamsize(values.size() * sizeof(double)));
}

void GetDoubles(std::istream& in, std::span<double> values,
                const std::string& name) {
  in.read(reinterpret_cast<char*>(values.data()),
          std::streamsize(values.size() * sizeof(double)));
  if (!in) throw CheckpointError("checkpoint payload truncated at " + name);
}

json Layout(const ParameterList& params) {
  json arr = json::array();
  for (const auto& p : params) {
    arr.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  }
  return arr;
}

void CheckLayout(const json& stored, const ParameterList& params,
                 const std::string& section) {
  if (!stored.is_array() || stored.size() != params.size()) {
    throw CheckpointError("checkpoint section '" + section +
                          "' has a different parameter count");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (stored[i].at("name") != params[i].name ||
        stored[i].at("shape").get<Shape>() != params[i].tensor.shape()) {
      throw CheckpointError("checkpoint parameter mismatch at " +
                            params[i].name);
    }
  }
}

}  // namespace

std::string ConfigFingerprint(const json& config) {
  const std::string text = config.dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

json ModelConfigJson(const BtmConfig& model, const ValueConfig* value) {
  json j = {{"model", model}};
  if (value != nullptr) j["value"] = {{"hidden", value->hidden}};
  return j;
}

json StatsToJson(const NormalizationStats& s) {
  return {{"state_mean", s.state_mean}, {"state_std", s.state_std},
          {"rtg_mean", s.rtg_mean},     {"rtg_std", s.rtg_std},
          {"reward_mean", s.reward_mean}, {"reward_std", s.reward_std}};
}

NormalizationStats StatsFromJson(const json& j) {
  NormalizationStats s;
  s.state_mean = j.at("state_mean").get<std::vector<double>>();
  s.state_std = j.at("state_std").get<std::vector<double>>();
  s.rtg_mean = j.at("rtg_mean");
  s.rtg_std = j.at("rtg_std");
  s.reward_mean = j.at("reward_mean");
  s.reward_std = j.at("reward_std");
  return s;
}

void WriteCheckpoint(const std::filesystem::path& path,
                     const CheckpointHeader& header, const Btm& model,
                     const QvModel* value) {
  json h = {{"format", kFormat},
            {"version", kVersion},
            {"config_fingerprint", ConfigFingerprint(header.config)},
            {"config", header.config},
            {"step", header.step},
            {"log_sigma", header.log_sigma},
            {"stats", StatsToJson(model.stats)},
            {"extra", header.extra}};
  json sections = json::array();
  sections.push_back({{"name", "btm"}, {"params", Layout(model.params())}});
  if (value != nullptr) {
    const QvModel& v = *value;
    sections.push_back({{"name", "value"}, {"params", Layout(v.params())}});
    sections.push_back(
        {{"name", "value_target"}, {"params", Layout(v.target_params())}});
    h["value_stats"] = StatsToJson(value->stats);
    h["value_scale"] = value->value_scale;
  }
  h["sections"] = sections;

  // write to a sibling then rename, so a crash never leaves a torn file
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out << h.dump() << '\n';
    for (const auto& p : model.params()) PutDoubles(out, p.tensor.data());
    if (value != nullptr) {
      const QvModel& v = *value;
      for (const auto& p : v.params()) PutDoubles(out, p.tensor.data());
      for (const auto& p : v.target_params()) PutDoubles(out, p.tensor.data());
    }
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

json ReadHeaderJson(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line)) {
    throw CheckpointError("empty checkpoint " + path.string());
  }
  json h;
  try {
    h = json::parse(line);
  } catch (const json::parse_error& e) {
    throw CheckpointError("bad checkpoint header in " + path.string() + ": " +
                          e.what());
  }
  if (h.value("format", "") != kFormat || h.value("version", 0) != kVersion) {
    throw CheckpointError(path.string() + " is not a version " +
                          std::to_string(kVersion) + " checkpoint");
  }
  return h;
}

CheckpointHeader ToHeader(const json& h) {
  CheckpointHeader c;
  c.fingerprint = h.at("config_fingerprint");
  c.config = h.at("config");
  c.step = h.at("step");
  c.log_sigma = h.at("log_sigma");
  c.extra = h.value("extra", json::object());
  return c;
}

}  // namespace

CheckpointHeader ReadCheckpointHeader(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return ToHeader(ReadHeaderJson(in, path));
}

CheckpointHeader ReadCheckpointInto(const std::filesystem::path& path,
                                    const std::string& expected_fingerprint,
                                    Btm& model, QvModel* value) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  const json h = ReadHeaderJson(in, path);
  CheckpointHeader header = ToHeader(h);
  if (header.fingerprint != expected_fingerprint) {
    throw CheckpointError("config fingerprint mismatch: checkpoint " +
                          header.fingerprint + ", expected " +
                          expected_fingerprint);
  }
  const json& sections = h.at("sections");
  CheckLayout(sections.at(0).at("params"), model.params(), "btm");
  const bool has_value = sections.size() > 1;
  if (value != nullptr) {
    if (!has_value) throw CheckpointError("checkpoint has no value section");
    CheckLayout(sections.at(1).at("params"), value->params(), "value");
    CheckLayout(sections.at(2).at("params"), value->target_params(),
                "value_target");
  }
  for (auto& p : model.params()) GetDoubles(in, p.tensor.mutable_data(), p.name);
  model.stats = StatsFromJson(h.at("stats"));
  if (value != nullptr) {
    for (auto& p : value->params()) {
      GetDoubles(in, p.tensor.mutable_data(), p.name);
    }
    for (auto& p : value->target_params()) {
      GetDoubles(in, p.tensor.mutable_data(), p.name);
    }
    value->stats = StatsFromJson(h.at("value_stats"));
    value->value_scale = h.at("value_scale");
  }
  return header;
}

}  // namespace m3pc
