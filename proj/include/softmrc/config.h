/* Copyright 2026 The softmrc Authors. All Rights Reserved.

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

// Plain-text `key = value` configuration with typed accessors, and the
// mapping between keys and the model/strategy/training structs.

#ifndef SOFTMRC_CONFIG_H_
#define SOFTMRC_CONFIG_H_

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "softmrc/pipeline.h"

namespace softmrc {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class KeyValueConfig {
 public:
  // `#` starts a comment; blank lines are skipped.
  static KeyValueConfig parse(const std::string& contents);
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  // Applies "key=value" overrides; the later source wins.
  void apply_overrides(const std::vector<std::string>& assignments);
  void merge(const KeyValueConfig& other);
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& key,
                                          const std::vector<std::uint64_t>& fallback) const;

  // Sorted by key.
  std::string serialize() const;
  const std::map<std::string, std::string>& values() const { return values_; }

  // Rejects keys outside `known`.
  void check_known(const std::vector<std::string>& known) const;

 private:
  std::map<std::string, std::string> values_;
};

ModelConfig model_config_from(const KeyValueConfig& kv);
StrategyConfig strategy_config_from(const KeyValueConfig& kv);
TrainConfig train_config_from(const KeyValueConfig& kv);
// Writes every model/strategy/training key with its resolved value.
void write_model_config(const ModelConfig& mc, const StrategyConfig& sc, KeyValueConfig& kv);
void write_train_config(const TrainConfig& tc, KeyValueConfig& kv);

// Every key the model, strategy and training sections understand.
std::vector<std::string> model_and_train_keys();

// Everything one CLI run needs. `to_config` writes every key with its
// resolved value, so a run directory can be replayed from its copy.
struct RunConfig {
  std::string schema_path;
  std::string templates_path;  // empty: built-in question templates
  ModelConfig model;
  StrategyConfig strategy;
  TrainConfig train;
  std::vector<std::uint64_t> seeds = {1};
  std::vector<StrategyKind> strategies = kAllStrategies;
  std::string out_dir;

  static RunConfig from(const KeyValueConfig& kv);
  KeyValueConfig to_config() const;
  static std::vector<std::string> keys();
};

}  // namespace softmrc

#endif  // SOFTMRC_CONFIG_H_
