/* Copyright 2026 The ct2ctpa Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/


#pragma once

// Command-line front end. run() is what the ct2ctpa binary calls; it is
// exposed so the tests can drive commands in-process.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace ct2ctpa::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kUsageError = 2;

// args[0] is the program name.
int run(const std::vector<std::string>& args);

// Every key a config file may set, with its default: the training keys of
// TrainConfig plus data.* (preprocessing) and pretrain.* (classifier).
nlohmann::json default_config();

// A named bundle of settings. `pinned` keys may not be changed by flags or a
// config file; `defaults` behave like ordinary defaults.
struct Preset {
  std::string name;
  nlohmann::json pinned = nlohmann::json::object();
  nlohmann::json defaults = nlohmann::json::object();
};

// One run of a preset matrix (table presets expand to several).
struct RunSpec {
  std::string label;  // table column header
  std::string slug;   // sub-directory name
  nlohmann::json config;
};

struct Resolution {
  std::string preset;  // empty when none
  std::string table;   // metrics table preset for matrix presets
  std::vector<RunSpec> runs;
};

std::vector<std::string> preset_names();
// Column runs of a table preset carry their own pinned keys.
std::optional<Preset> preset(const std::string& name);

// Precedence: flag > config file > preset > default. An explicit flag or
// config key that contradicts a pinned preset value raises ConfigError
// naming both. `flag_names` maps keys to the spelling the user typed.
Resolution resolve(const std::string& preset_name, const nlohmann::json& file,
                   const nlohmann::json& flags,
                   const std::vector<std::pair<std::string, std::string>>& flag_names = {});

// Canonical spelling of a config value ("pe-cyclegan" -> "pe_cyclegan").
nlohmann::json canonical(const std::string& key, const nlohmann::json& value);

}  // namespace ct2ctpa::cli
