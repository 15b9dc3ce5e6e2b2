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

#include "softmrc/prompt_bank.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace softmrc {

namespace {

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string display_name(const std::string& key) {
  std::string out;
  for (std::size_t i = 0; i < key.size(); ++i) {
    char c = key[i];
    if (c == '_' || c == '-') {
      out.push_back(' ');
    } else if (std::isupper(static_cast<unsigned char>(c)) && i > 0 &&
               std::islower(static_cast<unsigned char>(key[i - 1]))) {
      out.push_back(' ');
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos;
       pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

}  // namespace

std::string render_hard_prompt(const HardPromptTemplate& tpl, const std::string& key,
                               const std::optional<std::string>& trigger_text) {
  std::string out = tpl.text;
  if (out.find("{trigger_text}") != std::string::npos) {
    if (!trigger_text)
      throw std::invalid_argument("template for '" + key + "' needs {trigger_text}");
    replace_all(out, "{trigger_text}", *trigger_text);
  }
  replace_all(out, "{type_name}", display_name(key));
  if (out.find_first_not_of(" \t") == std::string::npos)
    throw std::invalid_argument("template for '" + key + "' renders to an empty prompt");
  return out;
}

void TemplateSet::add(HardPromptTemplate tpl) {
  if (tpl.text.empty()) throw std::invalid_argument("empty template for " + tpl.key);
  std::string key = tpl.key;
  templates_[key] = std::move(tpl);
}

const HardPromptTemplate& TemplateSet::get(const std::string& key) const {
  auto it = templates_.find(key);
  if (it == templates_.end()) throw std::out_of_range("no hard-prompt template for " + key);
  return it->second;
}

std::vector<std::string> TemplateSet::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, t] : templates_) out.push_back(k);
  return out;
}

TemplateSet TemplateSet::parse(const std::string& contents) {
  TemplateSet set;
  std::istringstream in(contents);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      throw std::invalid_argument("template line " + std::to_string(lineno) +
                                  ": expected <key> TAB <template>");
    set.add({line.substr(0, tab), line.substr(tab + 1)});
  }
  return set;
}

TemplateSet TemplateSet::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open template file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

std::string TemplateSet::serialize() const {
  std::string out;
  for (const auto& [k, t] : templates_) out += k + "\t" + t.text + "\n";
  return out;
}

std::string PromptRegistry::param_name(const std::string& key, std::size_t layer) {
  return "prompt." + key + ".layer" + std::to_string(layer);
}

const LayerPromptBank& PromptRegistry::get_soft_bank(ParameterStore& store,
                                                     const std::string& key,
                                                     const EncoderConfig& config) {
  if (!keys_.count(key)) throw std::out_of_range("unknown prompt key: " + key);
  auto it = banks_.find(key);
  if (it != banks_.end()) return it->second;
  LayerPromptBank bank{key, {}};
  std::mt19937_64 rng(fnv1a(key, seed_ ^ 0x9e3779b97f4a7c15ULL));
  for (std::size_t l = 0; l <= config.num_layers; ++l) {
    std::string name = param_name(key, l);
    store.add(name, normal_tensor({config.prompt_len, config.model_dim}, 0.02, rng));
    bank.param_names.push_back(std::move(name));
  }
  return banks_.emplace(key, std::move(bank)).first->second;
}

const LayerPromptBank* PromptRegistry::find(const std::string& key) const {
  auto it = banks_.find(key);
  return it == banks_.end() ? nullptr : &it->second;
}

void PromptRegistry::attach(const ParameterStore& store, const EncoderConfig& config) {
  for (const auto& key : keys_) {
    if (!store.contains(param_name(key, 0))) continue;
    LayerPromptBank bank{key, {}};
    for (std::size_t l = 0; l <= config.num_layers; ++l)
      bank.param_names.push_back(param_name(key, l));
    banks_[key] = std::move(bank);
  }
}

std::size_t AnchorRemap::to_new(std::size_t i) const {
  if (i >= n_) throw std::out_of_range("token index beyond verbalized sequence");
  if (i < trigger_.start) return i;
  if (i <= trigger_.end) return i + 1;
  return i + 2;
}

std::optional<std::size_t> AnchorRemap::to_old(std::size_t j) const {
  if (j >= n_ + 2) throw std::out_of_range("index beyond verbalized sequence");
  if (j < trigger_.start) return j;
  if (j == start_anchor() || j == end_anchor()) return std::nullopt;
  if (j <= trigger_.end + 1) return j - 1;
  return j - 2;
}

std::optional<TokenSpan> AnchorRemap::span_to_old(TokenSpan s) const {
  auto a = to_old(s.start);
  auto b = to_old(s.end);
  if (!a || !b) return std::nullopt;
  return TokenSpan{*a, *b};
}

TokenSpan AnchorRemap::span_to_new(TokenSpan s) const { return {to_new(s.start), to_new(s.end)}; }

Verbalized verbalize(const TokenSequence& tokens, TokenSpan trigger) {
  const std::size_t n = tokens.size();
  if (trigger.start > trigger.end || trigger.end >= n)
    throw std::out_of_range("trigger span [" + std::to_string(trigger.start) + "," +
                            std::to_string(trigger.end) + "] outside sequence of " +
                            std::to_string(n));
  Verbalized out{{}, AnchorRemap(n, trigger)};
  auto& t = out.tokens;
  t.ids.reserve(n + 2);
  t.char_spans.reserve(n + 2);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == trigger.start) {
      std::size_t c = tokens.char_spans[i].start;
      t.ids.push_back(kStartAnchorId);
      t.char_spans.push_back({c, c});
    }
    t.ids.push_back(tokens.ids[i]);
    t.char_spans.push_back(tokens.char_spans[i]);
    if (i == trigger.end) {
      std::size_t c = tokens.char_spans[i].end;
      t.ids.push_back(kEndAnchorId);
      t.char_spans.push_back({c, c});
    }
  }
  return out;
}

}  // namespace softmrc
