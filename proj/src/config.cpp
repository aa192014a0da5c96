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

#include "radseg/config.hpp"

#include "radseg/errors.hpp"

#include <fstream>

namespace radseg {

using nlohmann::json;

namespace {

void collect_unknown(const json& j, const json& ref, const std::string& prefix, std::vector<std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!ref.contains(it.key())) {
      out.push_back(path);
      continue;
    }
    const auto& r = ref.at(it.key());
    if (r.is_object()) {
      if (!it->is_object())
        out.push_back(path + " (expected an object)");
      else
        collect_unknown(*it, r, path, out);
    }
  }
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}

}  // namespace

std::vector<std::string> unknown_keys(const json& j, const json& reference) {
  std::vector<std::string> out;
  if (!j.is_object()) {
    out.push_back("<root> (expected an object)");
    return out;
  }
  collect_unknown(j, reference, "", out);
  return out;
}

json RunConfig::to_json() const {
  json j = data.to_json();
  j["train"] = train.to_json();
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  const json defaults = RunConfig{}.to_json();
  const auto bad = unknown_keys(j, defaults);
  if (!bad.empty()) throw ConfigError("unknown config keys: " + join(bad));
  json merged = defaults;
  merged.merge_patch(j);
  try {
    RunConfig c;
    c.data = experiment::DatasetConfig::from_json(merged);
    c.train = experiment::TrainConfig::from_json(merged.at("train"));
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace radseg
