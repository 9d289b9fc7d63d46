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

// JSON-lines dataset files: one header object, then one object per episode.
//
//   {"state_dim":4,"action_dim":2,"env_id":"pm-v1","version":1,...}
//   {"states":[[...],...],"actions":[[...],...],"rewards":[...],
//    "terminal":false}

#ifndef M3PC_DATASET_IO_H_
#define M3PC_DATASET_IO_H_

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "m3pc/trajectory.h"

namespace m3pc {

struct DatasetHeader {
  int state_dim = 0;
  int action_dim = 0;
  std::string env_id;
  int version = 1;
  nlohmann::json provenance;  // optional free-form generation record
};

struct Dataset {
  DatasetHeader header;
  std::vector<Episode> episodes;
};

// Error with the 1-based line number of the offending record (0 for
// file-level problems).
class DatasetError : public std::runtime_error {
 public:
  DatasetError(int line, const std::string& message)
      : std::runtime_error("dataset line " + std::to_string(line) + ": " +
                           message),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

void WriteDataset(std::ostream& out, const Dataset& dataset);
void WriteDataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset ReadDataset(std::istream& in);
Dataset ReadDataset(const std::filesystem::path& path);

// Relative paths resolve against $M3PC_DATA_DIR when it is set.
std::filesystem::path ResolveDataPath(const std::filesystem::path& path);

}  // namespace m3pc

#endif  // M3PC_DATASET_IO_H_
