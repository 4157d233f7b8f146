// Copyright 2026 The Mono2Binaural Authors. All Rights Reserved.
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

// Sectioned key-value run configuration. "[section]" headers and
// "key = value" lines; '#' and ';' start comments. Keys are validated
// against the known schema; unknown sections or keys are rejected with
// the offending line number.

#ifndef M2B_CONFIG_HPP_
#define M2B_CONFIG_HPP_

#include <array>
#include <map>
#include <set>
#include <string>

#include "m2b/error.hpp"
#include "m2b/pipeline.hpp"
#include "m2b/scene.hpp"

namespace m2b {

class RunConfig {
 public:
  static RunConfig parse_file(const std::string& path);
  static RunConfig parse_text(const std::string& text,
                              const std::string& origin = "<config>");

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  int64_t get_int(const std::string& section, const std::string& key,
                  int64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;

  // Command-line overrides (flags win over file values).
  void set(const std::string& section, const std::string& key,
           const std::string& value);

  uint64_t hash() const;
  const std::string& raw_text() const { return raw_; }

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::map<std::string, std::map<std::string, Entry>> sections_;
  std::string raw_;
  std::string origin_;
};

// The full key schema, section -> keys.
const std::map<std::string, std::set<std::string>>& config_schema();

// Bridges to module configs.
GenerationConfig generation_config_from(const RunConfig& cfg);
TrainConfig train_config_from(const RunConfig& cfg);
InferConfig infer_config_from(const RunConfig& cfg);
std::array<int, 5> unet_widths_from(const RunConfig& cfg);

}  // namespace m2b

#endif  // M2B_CONFIG_HPP_
