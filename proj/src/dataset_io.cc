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

#include "m3pc/dataset_io.h"

#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>

namespace m3pc {
namespace {

using nlohmann::json;

json EpisodeToJson(const Episode& ep) {
  json states = json::array();
  json actions = json::array();
  for (int t = 0; t < ep.length(); ++t) {
    states.push_back(std::vector<double>(ep.state(t).begin(), ep.state(t).end()));
    actions.push_back(
        std::vector<double>(ep.action(t).begin(), ep.action(t).end()));
  }
  return {{"states", states},
          {"actions", actions},
          {"rewards", ep.rewards},
          {"terminal", ep.terminal}};
}

void ReadRows(const json& rows, int dim, const char* field, int line,
              std::vector<double>& out) {
  if (!rows.is_array()) throw DatasetError(line, std::string(field) + " is not an array");
  for (size_t t = 0; t < rows.size(); ++t) {
    const json& row = rows[t];
    if (!row.is_array() || static_cast<int>(row.size()) != dim) {
      throw DatasetError(line, std::string(field) + "[" + std::to_string(t) +
                                   "] has " +
                                   std::to_string(row.is_array() ? row.size() : 0) +
                                   " values, header says " +
                                   std::to_string(dim));
    }
    for (const json& v : row) out.push_back(v.get<double>());
  }
}

Episode EpisodeFromJson(const json& j, const DatasetHeader& header, int line) {
  Episode ep;
  ep.state_dim = header.state_dim;
  ep.action_dim = header.action_dim;
  try {
    ReadRows(j.at("states"), header.state_dim, "states", line, ep.states);
    ReadRows(j.at("actions"), header.action_dim, "actions", line, ep.actions);
    ep.rewards = j.at("rewards").get<std::vector<double>>();
    ep.terminal = j.value("terminal", false);
  } catch (const json::exception& e) {
    throw DatasetError(line, e.what());
  }
  try {
    ep.Validate();
  } catch (const std::invalid_argument& e) {
    throw DatasetError(line, e.what());
  }
  return ep;
}

}  // namespace

void WriteDataset(std::ostream& out, const Dataset& dataset) {
  json header = {{"state_dim", dataset.header.state_dim},
                 {"action_dim", dataset.header.action_dim},
                 {"env_id", dataset.header.env_id},
                 {"version", dataset.header.version}};
  if (!dataset.header.provenance.is_null()) {
    header["provenance"] = dataset.header.provenance;
  }
  out << header.dump() << "\n";
  for (const Episode& ep : dataset.episodes) {
    out << EpisodeToJson(ep).dump() << "\n";
  }
}

void WriteDataset(const std::filesystem::path& path, const Dataset& dataset) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError(0, "cannot open " + path.string());
  WriteDataset(out, dataset);
}

Dataset ReadDataset(std::istream& in) {
  Dataset dataset;
  std::string text;
  int line = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DatasetError(line, std::string("malformed JSON: ") + e.what());
    }
    if (!have_header) {
      try {
        dataset.header.state_dim = j.at("state_dim").get<int>();
        dataset.header.action_dim = j.at("action_dim").get<int>();
        dataset.header.env_id = j.at("env_id").get<std::string>();
        dataset.header.version = j.at("version").get<int>();
        if (j.contains("provenance")) dataset.header.provenance = j["provenance"];
      } catch (const json::exception& e) {
        throw DatasetError(line, std::string("bad header: ") + e.what());
      }
      if (dataset.header.version != 1) {
        throw DatasetError(line, "unsupported version " +
                                     std::to_string(dataset.header.version));
      }
      have_header = true;
      continue;
    }
    dataset.episodes.push_back(EpisodeFromJson(j, dataset.header, line));
  }
  if (!have_header) throw DatasetError(0, "missing header line");
  return dataset;
}

Dataset ReadDataset(const std::filesystem::path& path) {
  std::ifstream in(ResolveDataPath(path), std::ios::binary);
  if (!in) throw DatasetError(0, "cannot open " + path.string());
  return ReadDataset(in);
}

std::filesystem::path ResolveDataPath(const std::filesystem::path& path) {
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv("M3PC_DATA_DIR"); root && *root) {
    return std::filesystem::path(root) / path;
  }
  return path;
}

}  // namespace m3pc
