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

#include "m2b/config.hpp"

#include <algorithm>

#include "m2b/util.hpp"

namespace m2b {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> schema = {
      {"dataset",
       {"out_dir", "train", "val", "test", "duration_s", "classes",
        "min_sources", "max_sources", "azimuth_min_deg", "azimuth_max_deg",
        "frame_height", "frame_width", "seed", "head_radius_m",
        "speed_of_sound_mps", "ild_max_db", "shadow_cutoff_hz",
        "shadow_enabled"}},
      {"train",
       {"lr", "visual_lr_multiplier", "weight_decay", "batch_size", "lr_decay",
        "lr_decay_epochs", "epochs", "segment_len_s", "target_rms", "seed",
        "save_adam_state"}},
      {"net", {"unet_widths"}},
      {"infer", {"window_s", "hop_s", "batch_windows"}},
      {"eval", {"split", "max_mixtures"}},
      {"separation", {"audio_mode"}},
      {"paths", {"data_dir", "out_dir"}},
  };
  return schema;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  return parse_text(read_text_file(path), path);
}

RunConfig RunConfig::parse_text(const std::string& text,
                                const std::string& origin) {
  RunConfig cfg;
  cfg.raw_ = text;
  cfg.origin_ = origin;
  const auto& schema = config_schema();

  std::string section;
  int line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line[0] == '#' || line[0] == ';') {
      if (pos > text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": malformed section header \"" + line + "\"");
      section = trim(line.substr(1, line.size() - 2));
      if (schema.find(section) == schema.end())
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": unknown section [" + section + "]");
    } else {
      size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": expected key = value, got \"" + line + "\"");
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (section.empty())
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": key \"" + key + "\" outside any section");
      auto sec_it = schema.find(section);
      if (sec_it->second.find(key) == sec_it->second.end())
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": unknown key \"" + key + "\" in section [" +
                          section + "]");
      auto& sec = cfg.sections_[section];
      if (sec.count(key))
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": duplicate key \"" + key + "\" in section [" +
                          section + "]");
      sec[key] = {value, line_no};
    }
    if (pos > text.size()) break;
  }
  return cfg;
}

bool RunConfig::has(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

std::string RunConfig::get(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
  auto s = sections_.find(section);
  if (s == sections_.end()) return fallback;
  auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second.value;
}

double RunConfig::get_double(const std::string& section, const std::string& key,
                             double fallback) const {
  if (!has(section, key)) return fallback;
  try {
    return parse_double(get(section, key, ""));
  } catch (const ConfigError&) {
    throw ConfigError("[" + section + "] " + key + ": expected a number, got \"" +
                      get(section, key, "") + "\"");
  }
}

int64_t RunConfig::get_int(const std::string& section, const std::string& key,
                           int64_t fallback) const {
  if (!has(section, key)) return fallback;
  try {
    return parse_int(get(section, key, ""));
  } catch (const ConfigError&) {
    throw ConfigError("[" + section + "] " + key +
                      ": expected an integer, got \"" + get(section, key, "") +
                      "\"");
  }
}

bool RunConfig::get_bool(const std::string& section, const std::string& key,
                         bool fallback) const {
  if (!has(section, key)) return fallback;
  std::string v = get(section, key, "");
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("[" + section + "] " + key + ": expected a boolean, got \"" +
                    v + "\"");
}

void RunConfig::set(const std::string& section, const std::string& key,
                    const std::string& value) {
  const auto& schema = config_schema();
  auto sec_it = schema.find(section);
  if (sec_it == schema.end() || sec_it->second.find(key) == sec_it->second.end())
    throw ConfigError("unknown config override [" + section + "] " + key);
  sections_[section][key] = {value, 0};
}

uint64_t RunConfig::hash() const {
  // Hash the effective key/value view so overrides participate.
  std::string canon;
  for (const auto& [section, entries] : sections_) {
    canon += "[" + section + "]\n";
    for (const auto& [key, entry] : entries) {
      canon += key + "=" + entry.value + "\n";
    }
  }
  return fnv1a64(canon.data(), canon.size());
}

GenerationConfig generation_config_from(const RunConfig& cfg) {
  GenerationConfig out;
  out.out_dir = cfg.get("dataset", "out_dir", "");
  out.counts.train = static_cast<int>(cfg.get_int("dataset", "train", 0));
  out.counts.val = static_cast<int>(cfg.get_int("dataset", "val", 0));
  out.counts.test = static_cast<int>(cfg.get_int("dataset", "test", 0));
  out.duration_s = cfg.get_double("dataset", "duration_s", 3.0);
  out.num_classes = static_cast<int>(cfg.get_int("dataset", "classes", 4));
  out.min_sources = static_cast<int>(cfg.get_int("dataset", "min_sources", 1));
  out.max_sources = static_cast<int>(cfg.get_int("dataset", "max_sources", 1));
  out.azimuth_min_deg = cfg.get_double("dataset", "azimuth_min_deg", -90.0);
  out.azimuth_max_deg = cfg.get_double("dataset", "azimuth_max_deg", 90.0);
  out.frame_height = static_cast<int>(cfg.get_int("dataset", "frame_height", 64));
  out.frame_width = static_cast<int>(cfg.get_int("dataset", "frame_width", 128));
  out.seed = static_cast<uint64_t>(cfg.get_int("dataset", "seed", 0));
  out.head.head_radius_m = cfg.get_double("dataset", "head_radius_m", 0.0875);
  out.head.speed_of_sound_mps =
      cfg.get_double("dataset", "speed_of_sound_mps", 343.0);
  out.head.ild_max_db = cfg.get_double("dataset", "ild_max_db", 10.0);
  out.head.shadow_cutoff_hz =
      cfg.get_double("dataset", "shadow_cutoff_hz", 800.0);
  out.head.shadow_enabled = cfg.get_bool("dataset", "shadow_enabled", true);
  return out;
}

TrainConfig train_config_from(const RunConfig& cfg) {
  TrainConfig out;
  out.lr = cfg.get_double("train", "lr", out.lr);
  out.visual_lr_multiplier =
      cfg.get_double("train", "visual_lr_multiplier", out.visual_lr_multiplier);
  out.weight_decay = cfg.get_double("train", "weight_decay", out.weight_decay);
  out.batch_size =
      static_cast<int>(cfg.get_int("train", "batch_size", out.batch_size));
  out.lr_decay = cfg.get_double("train", "lr_decay", out.lr_decay);
  out.lr_decay_epochs = static_cast<int>(
      cfg.get_int("train", "lr_decay_epochs", out.lr_decay_epochs));
  out.epochs = static_cast<int>(cfg.get_int("train", "epochs", out.epochs));
  out.segment_len_s =
      cfg.get_double("train", "segment_len_s", out.segment_len_s);
  out.target_rms = cfg.get_double("train", "target_rms", out.target_rms);
  out.seed = static_cast<uint64_t>(cfg.get_int("train", "seed", 0));
  out.save_adam_state = cfg.get_bool("train", "save_adam_state", false);
  return out;
}

InferConfig infer_config_from(const RunConfig& cfg) {
  InferConfig out;
  out.window_s = cfg.get_double("infer", "window_s", out.window_s);
  out.hop_s = cfg.get_double("infer", "hop_s", out.hop_s);
  out.batch_windows =
      static_cast<int>(cfg.get_int("infer", "batch_windows", out.batch_windows));
  return out;
}

std::array<int, 5> unet_widths_from(const RunConfig& cfg) {
  std::array<int, 5> widths = nn::UNetConfig{}.widths;
  if (!cfg.has("net", "unet_widths")) return widths;
  std::string s = cfg.get("net", "unet_widths", "");
  size_t pos = 0;
  for (int i = 0; i < 5; ++i) {
    size_t comma = s.find(',', pos);
    std::string tok = trim(
        comma == std::string::npos ? s.substr(pos) : s.substr(pos, comma - pos));
    if (tok.empty())
      throw ConfigError("[net] unet_widths: expected 5 comma-separated widths");
    widths[static_cast<size_t>(i)] = static_cast<int>(parse_int(tok));
    if (comma == std::string::npos) {
      if (i != 4)
        throw ConfigError("[net] unet_widths: expected 5 comma-separated widths");
      pos = s.size();
    } else {
      pos = comma + 1;
    }
  }
  return widths;
}

}  // namespace m2b
