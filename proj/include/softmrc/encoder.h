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

// Small pre-norm transformer encoder with deep soft-prompt injection.
//
// A prompted sequence has m prompt rows followed by n token rows. Before
// every layer the first m rows of the hidden stream are replaced by that
// layer's prompt matrix, so prompts steer every layer while token rows are
// left untouched by the injection itself. Attention is fully bidirectional
// over prompt and token rows.

#ifndef SOFTMRC_ENCODER_H_
#define SOFTMRC_ENCODER_H_

#include <cstdint>
#include <string>
#include <vector>

#include "softmrc/autograd.h"
#include "softmrc/parameters.h"
#include "softmrc/tokens.h"

namespace softmrc {

enum class PromptInjection {
  kReplaceHidden,  // overwrite the first m rows at every layer input
};

struct EncoderConfig {
  std::size_t num_layers = 2;
  std::size_t model_dim = 64;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 256;
  std::size_t vocab_size = 0;
  std::size_t max_seq_len = 256;
  std::size_t prompt_len = 32;
  bool position_encoding = true;
  PromptInjection injection = PromptInjection::kReplaceHidden;
};

// Throws std::invalid_argument naming the violated constraint.
void validate(const EncoderConfig& config);

// Per-key deep prompts: num_layers + 1 matrices of prompt_len × model_dim.
// Index 0 feeds the first layer; index l feeds layer l; index num_layers
// replaces the prompt rows of the final layer output.
struct LayerPromptBank {
  std::string key;
  std::vector<std::string> param_names;
};

struct EncodeTrace {
  // Per layer, per head: attention probabilities (rows × rows).
  std::vector<std::vector<Tensor>> attention;
};

class Encoder {
 public:
  // Registers "embed.token", "encoder.*" and, when `with_anchors`,
  // "embed.anchor" into `store`.
  Encoder(const EncoderConfig& config, ParameterStore& store, std::uint64_t seed,
          bool with_anchors);
  // Attaches to parameters already present in `store` (e.g. after loading).
  Encoder(const EncoderConfig& config, bool with_anchors)
      : config_(config), with_anchors_(with_anchors) {}

  const EncoderConfig& config() const { return config_; }
  bool with_anchors() const { return with_anchors_; }

  // n × d token embeddings plus sinusoidal positions offset by `position_offset`.
  Var embed(const ParameterStore& store, const TokenSequence& seq,
            std::size_t position_offset) const;

  // Replaces the first m rows of `hidden` with the bank's matrix for
  // `layer_index` (0..num_layers).
  Var inject_prompts(const ParameterStore& store, const Var& hidden,
                     std::size_t layer_index, const LayerPromptBank& bank) const;

  // Final hidden states: (m+n) × d with a bank, n × d without.
  Var encode(const ParameterStore& store, const TokenSequence& seq,
             const LayerPromptBank* bank, EncodeTrace* trace = nullptr) const;

  static std::vector<double> position_encoding(std::size_t position, std::size_t dim);

 private:
  Var layer(const ParameterStore& store, const Var& x, std::size_t l, EncodeTrace* trace) const;

  EncoderConfig config_;
  bool with_anchors_ = true;
};

}  // namespace softmrc

#endif  // SOFTMRC_ENCODER_H_
