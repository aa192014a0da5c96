/*
 *  Copyright 2026 The radseg Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

#pragma once

#include "radseg/experiment.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace radseg {

/// Everything a run needs: dataset simulation, reconstruction, fitting,
/// preprocessing, augmentation and training parameters.
struct RunConfig {
  experiment::DatasetConfig data;
  experiment::TrainConfig train;

  nlohmann::json to_json() const;
  /// `j` may be partial; missing keys keep their defaults. Unknown keys and
  /// invalid values raise ConfigError naming every offending key.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

/// Dotted paths of keys in `j` that do not exist in `reference` (objects are
/// compared recursively, arrays and scalars are leaves).
std::vector<std::string> unknown_keys(const nlohmann::json& j, const nlohmann::json& reference);

}  // namespace radseg
