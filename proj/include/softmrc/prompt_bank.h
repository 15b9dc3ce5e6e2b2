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

// Hard-prompt templates, the soft-prompt bank registry and the trigger
// verbalizer.

#ifndef SOFTMRC_PROMPT_BANK_H_
#define SOFTMRC_PROMPT_BANK_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "softmrc/encoder.h"
#include "softmrc/parameters.h"
#include "softmrc/tokens.h"

namespace softmrc {

struct HardPromptTemplate {
  std::string key;
  // May contain {trigger_text} and {type_name}.
  std::string text;
};

// Fills the template. {type_name} defaults to `key` written in lower case
// with '_' and '-' turned into spaces. Throws when {trigger_text} is used
// but absent, or when the result would be empty.
std::string render_hard_prompt(const HardPromptTemplate& tpl, const std::string& key,
                               const std::optional<std::string>& trigger_text);

class TemplateSet {
 public:
  void add(HardPromptTemplate tpl);
  bool contains(const std::string& key) const { return templates_.count(key) > 0; }
  const HardPromptTemplate& get(const std::string& key) const;
  std::vector<std::string> keys() const;

  // One line per key: `<key> TAB <template text>`. Blank lines and lines
  // starting with '#' are skipped.
  static TemplateSet parse(const std::string& contents);
  static TemplateSet load(const std::filesystem::path& path);
  std::string serialize() const;

 private:
  std::map<std::string, HardPromptTemplate> templates_;
};

// Lazily creates one LayerPromptBank per query key. Banks register their
// matrices as "prompt.<key>.layer<i>" and are initialised from N(0, 0.02)
// with a stream derived from (seed, key), so creation order does not matter.
class PromptRegistry {
 public:
  PromptRegistry() = default;
  PromptRegistry(std::set<std::string> schema_keys, std::uint64_t seed)
      : keys_(std::move(schema_keys)), seed_(seed) {}

  const LayerPromptBank& get_soft_bank(ParameterStore& store, const std::string& key,
                                       const EncoderConfig& config);
  const LayerPromptBank* find(const std::string& key) const;
  // Rebuilds handles for banks whose parameters already exist in `store`.
  void attach(const ParameterStore& store, const EncoderConfig& config);
  std::size_t bank_count() const { return banks_.size(); }
  const std::set<std::string>& keys() const { return keys_; }

  static std::string param_name(const std::string& key, std::size_t layer);

 private:
  std::set<std::string> keys_;
  std::uint64_t seed_ = 0;
  std::map<std::string, LayerPromptBank> banks_;
};

// Old→new index mapping produced by verbalize.
class AnchorRemap {
 public:
  AnchorRemap() = default;
  AnchorRemap(std::size_t original_len, TokenSpan trigger)
      : n_(original_len), trigger_(trigger) {}

  std::size_t to_new(std::size_t old_index) const;
  // nullopt for the two anchor positions.
  std::optional<std::size_t> to_old(std::size_t new_index) const;
  std::optional<TokenSpan> span_to_old(TokenSpan span) const;
  TokenSpan span_to_new(TokenSpan span) const;
  std::size_t start_anchor() const { return trigger_.start; }
  std::size_t end_anchor() const { return trigger_.end + 2; }
  std::size_t new_length() const { return n_ + 2; }

 private:
  std::size_t n_ = 0;
  TokenSpan trigger_;
};

struct Verbalized {
  TokenSequence tokens;
  AnchorRemap remap;
};

// tokens[0..a) ++ [S] ++ tokens[a..=b] ++ [E] ++ tokens(b..]. Anchors get
// zero-width character spans at the trigger's start and end.
Verbalized verbalize(const TokenSequence& tokens, TokenSpan trigger);

}  // namespace softmrc

#endif  // SOFTMRC_PROMPT_BANK_H_
