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

// Start/end/match span classifiers over document-region hidden states.

#ifndef SOFTMRC_SPAN_HEADS_H_
#define SOFTMRC_SPAN_HEADS_H_

#include <cstdint>
#include <vector>

#include "softmrc/autograd.h"
#include "softmrc/parameters.h"
#include "softmrc/tokens.h"

namespace softmrc {

enum class MatchScorer {
  kTanhMlp,   // v · tanh(W [h_i; h_j] + c)
  kBiaffine,  // h_iᵀ U h_j + b
};

struct SpanHeadConfig {
  std::size_t model_dim = 64;
  std::size_t match_hidden = 64;
  MatchScorer scorer = MatchScorer::kTanhMlp;
};

// Graph-valued logits; match(i,j) is -inf for i > j.
struct SpanLogitVars {
  Var start;  // {n}
  Var end;    // {n}
  Var match;  // {n, n}
};

// Plain logits for decoding.
struct SpanLogits {
  std::vector<double> start;
  std::vector<double> end;
  std::vector<double> match;  // row-major n × n
  std::size_t size() const { return start.size(); }
  double match_at(std::size_t i, std::size_t j) const { return match[i * start.size() + j]; }

  static SpanLogits from_vars(const SpanLogitVars& v);
};

struct SpanPrediction {
  std::size_t start = 0;
  std::size_t end = 0;
  double score = 0.0;
  bool operator==(const SpanPrediction&) const = default;
};

struct SpanLossWeights {
  double start = 1.0;
  double end = 1.0;
  double match = 1.0;
};

struct DecodeOptions {
  double threshold = 0.5;
  std::size_t max_span_len = 16;
};

class SpanHeads {
 public:
  // Registers "head.start.*", "head.end.*" and "head.match.*".
  SpanHeads(const SpanHeadConfig& config, ParameterStore& store, std::uint64_t seed);
  explicit SpanHeads(const SpanHeadConfig& config) : config_(config) {}

  const SpanHeadConfig& config() const { return config_; }

  // `hidden` is n × d and must exclude prompt rows.
  SpanLogitVars score_spans(const ParameterStore& store, const Var& hidden) const;

 private:
  SpanHeadConfig config_;
};

// w_start·BCE(start) + w_end·BCE(end) + w_match·BCE(match over i <= j); each
// term is a mean over its elements. An empty gold set is the no-answer case.
Var span_loss(const SpanLogitVars& logits, const std::vector<TokenSpan>& gold,
              const SpanLossWeights& weights);

// Thresholds start and end independently, then keeps (i, j) pairs with
// i <= j, j - i < max_span_len, a matching score above threshold and neither
// endpoint masked. Sorted by descending score, then (start, end). Nested and
// overlapping spans are all kept.
std::vector<SpanPrediction> decode_spans(const SpanLogits& logits, const DecodeOptions& options,
                                         const std::vector<bool>& mask = {});

double sigmoid(double x);

}  // namespace softmrc

#endif  // SOFTMRC_SPAN_HEADS_H_
