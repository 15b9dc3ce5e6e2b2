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

#include "softmrc/config.h"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace softmrc {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& contents) {
  KeyValueConfig kv;
  std::istringstream in(contents);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    kv.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

void KeyValueConfig::apply_overrides(const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must be key=value: " + a);
    values_[trim(a.substr(0, eq))] = trim(a.substr(eq + 1));
  }
}

void KeyValueConfig::merge(const KeyValueConfig& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::uint64_t v = 0;
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError("config key " + key + ": expected a non-negative integer, got '" + s + "'");
  return v;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": expected a number, got '" + it->second + "'");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
  if (it->second == "false" || it->second == "0" || it->second == "no") return false;
  throw ConfigError("config key " + key + ": expected true/false, got '" + it->second + "'");
}

std::vector<std::uint64_t> KeyValueConfig::get_u64_list(
    const std::string& key, const std::vector<std::uint64_t>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::uint64_t> out;
  std::istringstream in(it->second);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    KeyValueConfig tmp;
    tmp.set(key, part);
    out.push_back(tmp.get_u64(key, 0));
  }
  if (out.empty()) throw ConfigError("config key " + key + ": empty list");
  return out;
}

std::string KeyValueConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

void KeyValueConfig::check_known(const std::vector<std::string>& known) const {
  std::set<std::string> k(known.begin(), known.end());
  for (const auto& [key, v] : values_)
    if (!k.count(key)) throw ConfigError("unknown config key: " + key);
}

ModelConfig model_config_from(const KeyValueConfig& kv) {
  ModelConfig mc;
  auto& e = mc.encoder;
  e.num_layers = kv.get_size("encoder.layers", e.num_layers);
  e.model_dim = kv.get_size("encoder.dim", e.model_dim);
  e.num_heads = kv.get_size("encoder.heads", e.num_heads);
  e.ffn_dim = kv.get_size("encoder.ffn_dim", e.ffn_dim);
  e.max_seq_len = kv.get_size("encoder.max_seq_len", e.max_seq_len);
  e.prompt_len = kv.get_size("prompt_len", e.prompt_len);
  e.position_encoding = kv.get_bool("encoder.position_encoding", e.position_encoding);
  mc.match_hidden = kv.get_size("heads.match_hidden", mc.match_hidden);
  std::string scorer = kv.get_string("heads.match_scorer", "mlp");
  if (scorer == "mlp") mc.match_scorer = MatchScorer::kTanhMlp;
  else if (scorer == "biaffine") mc.match_scorer = MatchScorer::kBiaffine;
  else throw ConfigError("heads.match_scorer must be mlp or biaffine");
  mc.pair_hidden = kv.get_size("heads.pair_hidden", mc.pair_hidden);
  mc.hard_prompt_budget = kv.get_size("hard_prompt_budget", mc.hard_prompt_budget);
  mc.decode.threshold = kv.get_double("decode.threshold", mc.decode.threshold);
  mc.decode.max_span_len = kv.get_size("decode.max_span_len", mc.decode.max_span_len);
  mc.max_segment_sentences = kv.get_size("segment.max_sentences", mc.max_segment_sentences);
  mc.seed = kv.get_u64("model.seed", mc.seed);
  if (!(mc.decode.threshold > 0.0 && mc.decode.threshold < 1.0))
    throw ConfigError("decode.threshold must lie in (0,1)");
  return mc;
}

StrategyConfig strategy_config_from(const KeyValueConfig& kv) {
  StrategyConfig sc;
  try {
    sc.kind = parse_strategy(kv.get_string("strategy", to_string(sc.kind)));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  sc.prompt_len = kv.get_size("prompt_len", sc.prompt_len);
  if (sc.kind == StrategyKind::kSoftPromptFrozen && sc.prompt_len == 0)
    throw ConfigError("soft_frozen needs prompt_len >= 1");
  return sc;
}

TrainConfig train_config_from(const KeyValueConfig& kv) {
  TrainConfig tc;
  tc.epochs = kv.get_size("train.epochs", tc.epochs);
  tc.batch_size = kv.get_size("train.batch_size", tc.batch_size);
  tc.learning_rate = kv.get_double("train.lr", tc.learning_rate);
  tc.lr_decay = kv.get_bool("train.lr_decay", tc.lr_decay);
  tc.seed = kv.get_u64("train.seed", tc.seed);
  tc.patience = kv.get_size("train.patience", tc.patience);
  tc.dev_fraction = kv.get_double("train.dev_fraction", tc.dev_fraction);
  tc.clip_norm = kv.get_double("train.clip_norm", tc.clip_norm);
  tc.relations = kv.get_bool("train.relations", tc.relations);
  tc.loss_weights.start = kv.get_double("loss.w_start", tc.loss_weights.start);
  tc.loss_weights.end = kv.get_double("loss.w_end", tc.loss_weights.end);
  tc.loss_weights.match = kv.get_double("loss.w_match", tc.loss_weights.match);
  if (tc.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (tc.dev_fraction < 0.0 || tc.dev_fraction >= 1.0)
    throw ConfigError("train.dev_fraction must lie in [0,1)");
  return tc;
}

void write_model_config(const ModelConfig& mc, const StrategyConfig& sc, KeyValueConfig& kv) {
  const auto& e = mc.encoder;
  kv.set("encoder.layers", std::to_string(e.num_layers));
  kv.set("encoder.dim", std::to_string(e.model_dim));
  kv.set("encoder.heads", std::to_string(e.num_heads));
  kv.set("encoder.ffn_dim", std::to_string(e.ffn_dim));
  kv.set("encoder.max_seq_len", std::to_string(e.max_seq_len));
  kv.set("encoder.position_encoding", e.position_encoding ? "true" : "false");
  kv.set("prompt_len", std::to_string(sc.prompt_len));
  kv.set("strategy", to_string(sc.kind));
  kv.set("heads.match_hidden", std::to_string(mc.match_hidden));
  kv.set("heads.match_scorer", mc.match_scorer == MatchScorer::kTanhMlp ? "mlp" : "biaffine");
  kv.set("heads.pair_hidden", std::to_string(mc.pair_hidden));
  kv.set("hard_prompt_budget", std::to_string(mc.hard_prompt_budget));
  kv.set("decode.threshold", fmt_double(mc.decode.threshold));
  kv.set("decode.max_span_len", std::to_string(mc.decode.max_span_len));
  kv.set("segment.max_sentences", std::to_string(mc.max_segment_sentences));
  kv.set("model.seed", std::to_string(mc.seed));
}

void write_train_config(const TrainConfig& tc, KeyValueConfig& kv) {
  kv.set("train.epochs", std::to_string(tc.epochs));
  kv.set("train.batch_size", std::to_string(tc.batch_size));
  kv.set("train.lr", fmt_double(tc.learning_rate));
  kv.set("train.lr_decay", tc.lr_decay ? "true" : "false");
  kv.set("train.seed", std::to_string(tc.seed));
  kv.set("train.patience", std::to_string(tc.patience));
  kv.set("train.dev_fraction", fmt_double(tc.dev_fraction));
  kv.set("train.clip_norm", fmt_double(tc.clip_norm));
  kv.set("train.relations", tc.relations ? "true" : "false");
  kv.set("loss.w_start", fmt_double(tc.loss_weights.start));
  kv.set("loss.w_end", fmt_double(tc.loss_weights.end));
  kv.set("loss.w_match", fmt_double(tc.loss_weights.match));
}

std::vector<std::string> model_and_train_keys() {
  return {"encoder.layers", "encoder.dim", "encoder.heads", "encoder.ffn_dim",
          "encoder.max_seq_len", "encoder.position_encoding", "prompt_len", "strategy",
          "heads.match_hidden", "heads.match_scorer", "heads.pair_hidden",
          "hard_prompt_budget", "decode.threshold", "decode.max_span_len", "segment.max_sentences", "model.seed",
          "train.epochs", "train.batch_size", "train.lr", "train.lr_decay", "train.seed", "train.patience",
          "train.dev_fraction", "train.clip_norm", "train.relations", "loss.w_start",
          "loss.w_end", "loss.w_match"};
}

RunConfig RunConfig::from(const KeyValueConfig& kv) {
  kv.check_known(keys());
  RunConfig rc;
  rc.schema_path = kv.get_string("schema", rc.schema_path);
  rc.templates_path = kv.get_string("templates", rc.templates_path);
  rc.model = model_config_from(kv);
  rc.strategy = strategy_config_from(kv);
  rc.train = train_config_from(kv);
  rc.seeds = kv.get_u64_list("seeds", rc.seeds);
  if (kv.has("strategies")) {
    rc.strategies.clear();
    std::istringstream in(kv.get_string("strategies", ""));
    std::string part;
    while (std::getline(in, part, ',')) {
      part = trim(part);
      if (part.empty()) continue;
      try {
        rc.strategies.push_back(parse_strategy(part));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    if (rc.strategies.empty()) throw ConfigError("strategies: empty list");
  }
  rc.out_dir = kv.get_string("out_dir", rc.out_dir);
  return rc;
}

KeyValueConfig RunConfig::to_config() const {
  KeyValueConfig kv;
  write_model_config(model, strategy, kv);
  write_train_config(train, kv);
  if (!schema_path.empty()) kv.set("schema", schema_path);
  if (!templates_path.empty()) kv.set("templates", templates_path);
  std::string list;
  for (auto s : seeds) list += (list.empty() ? "" : ",") + std::to_string(s);
  kv.set("seeds", list);
  list.clear();
  for (auto k : strategies) list += (list.empty() ? "" : ",") + to_string(k);
  kv.set("strategies", list);
  if (!out_dir.empty()) kv.set("out_dir", out_dir);
  return kv;
}

std::vector<std::string> RunConfig::keys() {
  auto k = model_and_train_keys();
  for (const char* extra : {"schema", "templates", "seeds", "strategies", "out_dir"})
    k.push_back(extra);
  return k;
}

}  // namespace softmrc
