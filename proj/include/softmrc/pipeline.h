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

// End-to-end orchestration: MRC instance construction, the four training
// strategies, training with early stopping, and two-stage extraction
// (triggers and concepts first, then relations conditioned on each trigger).

#ifndef SOFTMRC_PIPELINE_H_
#define SOFTMRC_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "softmrc/corpus.h"
#include "softmrc/encoder.h"
#include "softmrc/eval.h"
#include "softmrc/parameters.h"
#include "softmrc/prompt_bank.h"
#include "softmrc/schema.h"
#include "softmrc/span_heads.h"

namespace softmrc {

enum class StrategyKind {
  kFinetuneNoPrompt,    // BIO tagging + pair classifier, no prompts
  kHardPromptUnfrozen,  // question text prepended, everything trainable
  kSoftPromptUnfrozen,  // deep soft prompts, everything trainable
  kSoftPromptFrozen,    // deep soft prompts, encoder and token embeddings frozen
};

inline const std::vector<StrategyKind> kAllStrategies = {
    StrategyKind::kFinetuneNoPrompt, StrategyKind::kHardPromptUnfrozen,
    StrategyKind::kSoftPromptUnfrozen, StrategyKind::kSoftPromptFrozen};

// "finetune", "hard", "soft_unfrozen", "soft_frozen".
std::string to_string(StrategyKind kind);
StrategyKind parse_strategy(const std::string& name);
bool uses_soft_prompts(StrategyKind kind);
bool uses_mrc(StrategyKind kind);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::kSoftPromptUnfrozen;
  std::size_t prompt_len = 32;
};

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t match_hidden = 64;
  MatchScorer match_scorer = MatchScorer::kTanhMlp;
  std::size_t pair_hidden = 64;
  // Token budget reserved for a rendered question plus separator.
  std::size_t hard_prompt_budget = 24;
  DecodeOptions decode;
  // Sentences packed into one segment at most; 0 packs up to the budget.
  std::size_t max_segment_sentences = 0;
  std::uint64_t seed = 13;
};

// Longest document segment the model accepts for any strategy.
std::size_t segment_budget(const ModelConfig& config);

class ModelBundle;

struct Segment {
  TokenSequence tokens;
  std::size_t token_begin = 0;  // index of the first token in the document
};

// Packs whole sentences into segments of at most `max_tokens` tokens and,
// when `max_sentences` > 0, at most that many sentences.
std::vector<Segment> segment_document(const std::string& text, const Vocabulary& vocab,
                                      std::size_t max_tokens, std::size_t max_sentences = 0);
std::vector<Segment> segment_document(const std::string& text, const ModelBundle& bundle);

// One MRC instance. `tokens` is the full model input (question and separator
// for hard prompts, then the document region); positions before
// `doc_offset` are never scored.
struct Query {
  std::string doc_id;
  std::size_t segment = 0;
  std::string key;  // concept type (stage 1) or relation type (stage 2)
  TokenSequence tokens;
  std::size_t doc_offset = 0;
  std::optional<TokenSpan> trigger;   // segment coordinates, stage 2 only
  std::vector<TokenSpan> gold_spans;  // document-region coordinates
  std::vector<bool> anchor_mask;      // true at anchor positions
  AnchorRemap remap;                  // stage 2 only

  bool relation_stage() const { return trigger.has_value(); }
  std::size_t region_size() const { return tokens.size() - doc_offset; }
};

// Strategy (a) instance: one segment with BIO tags and candidate pairs.
struct PairExample {
  TokenSpan trigger;
  TokenSpan attribute;
  int label = 0;  // 0 = no relation, otherwise 1 + index into schema.relations
};

struct TaggingInstance {
  std::string doc_id;
  TokenSequence tokens;
  std::vector<int> tags;
  std::size_t dropped_spans = 0;
  std::vector<PairExample> pairs;
};

struct InstanceStats {
  std::size_t dropped_relations = 0;  // arguments in different segments
  std::size_t dropped_entities = 0;   // crossing a segment boundary
  std::size_t misaligned_entities = 0;
  std::size_t bio_dropped_spans = 0;
};

// BIO tags over one type inventory: 0 = O, 1 + 2t = B-type, 2 + 2t = I-type.
struct TypedSpan {
  std::size_t type = 0;
  TokenSpan span;
  auto operator<=>(const TypedSpan&) const = default;
};

struct BioEncoding {
  std::vector<int> tags;
  std::size_t dropped = 0;
  std::vector<TypedSpan> kept;
};

// Keeps spans longest first, then leftmost, dropping any span that overlaps
// one already kept.
BioEncoding bio_encode(const std::vector<TypedSpan>& spans, std::size_t n);
// I- without a matching open span starts a new span; `repairs` counts those.
std::vector<TypedSpan> bio_decode(const std::vector<int>& tags, std::size_t* repairs = nullptr);

class ModelBundle {
 public:
  // Registers exactly the parameters the strategy needs and applies its
  // freeze mask.
  ModelBundle(const ModelConfig& config, const RelationSchema& schema, Vocabulary vocab,
              const StrategyConfig& strategy, TemplateSet templates = {});

  const ModelConfig& config() const { return config_; }
  const RelationSchema& schema() const { return schema_; }
  const Vocabulary& vocab() const { return vocab_; }
  const StrategyConfig& strategy() const { return strategy_; }
  const TemplateSet& templates() const { return templates_; }
  const Encoder& encoder() const { return encoder_; }
  const SpanHeads& heads() const { return *heads_; }
  const PromptRegistry& registry() const { return registry_; }

  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }

  // Stage-1 keys are concept types, stage-2 keys relation types.
  std::vector<std::string> query_keys() const;

  // MRC forward: span logits over the query's document region.
  SpanLogitVars forward(const Query& q) const;
  Var query_loss(const Query& q, const SpanLossWeights& w) const;

  // Strategy (a) forward.
  struct TaggingOutput {
    Var tag_logits;   // n × (2T+1)
    Var pair_logits;  // P × (R+1), undefined when P == 0
  };
  TaggingOutput tagging_forward(const TokenSequence& tokens,
                                const std::vector<std::pair<TokenSpan, TokenSpan>>& pairs) const;
  Var tagging_loss(const TaggingInstance& inst) const;

 private:
  ModelConfig config_;
  RelationSchema schema_;
  Vocabulary vocab_;
  StrategyConfig strategy_;
  TemplateSet templates_;
  ParameterStore store_;
  Encoder encoder_;
  std::optional<SpanHeads> heads_;
  PromptRegistry registry_;
};

struct StrategyReport {
  std::set<std::string> frozen;
  std::size_t trainable = 0;
  std::size_t total = 0;
  double fraction() const {
    return total == 0 ? 0.0 : static_cast<double>(trainable) / static_cast<double>(total);
  }
};

// Resets the bundle's freeze mask for `strategy.kind` and reports counts.
StrategyReport apply_strategy(ModelBundle& bundle, const StrategyConfig& strategy);

// Vocabulary over training documents plus hard-prompt template words.
Vocabulary build_vocabulary(const std::vector<AnnotatedDocument>& docs,
                            const TemplateSet& templates);

std::vector<Query> build_training_instances(const std::vector<AnnotatedDocument>& docs,
                                            const ModelBundle& bundle, bool with_relations,
                                            InstanceStats* stats = nullptr);
std::vector<TaggingInstance> build_tagging_instances(const std::vector<AnnotatedDocument>& docs,
                                                     const ModelBundle& bundle,
                                                     InstanceStats* stats = nullptr);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  // Linear decay of the learning rate towards zero over `epochs`.
  bool lr_decay = true;
  SpanLossWeights loss_weights;
  std::uint64_t seed = 1;
  std::size_t patience = 5;
  // Fraction of training documents held out for early stopping; 0 uses the
  // training documents themselves.
  double dev_fraction = 0.1;
  double clip_norm = 1.0;
  bool relations = true;
  bool verbose = false;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_concept_f1 = 0.0;
  double dev_relation_f1 = 0.0;
  double dev_score = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_dev_score = 0.0;
  InstanceStats stats;
};

// Trains in place. Throws std::invalid_argument for an empty training set.
TrainResult train(ModelBundle& bundle, const std::vector<AnnotatedDocument>& docs,
                  const TrainConfig& tc,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// Two-stage end-to-end extraction. Relations are skipped when
// `with_relations` is false.
AnnotatedDocument extract(const ModelBundle& bundle, const std::string& doc_id,
                          const std::string& text, bool with_relations = true);
std::vector<AnnotatedDocument> extract_all(const ModelBundle& bundle,
                                           const std::vector<AnnotatedDocument>& docs,
                                           bool with_relations = true);

// Run artifacts: model.ckpt, vocab.txt, schema.schema, templates.txt and
// model.cfg in `dir`.
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);
std::unique_ptr<ModelBundle> load_bundle(const std::filesystem::path& dir);

}  // namespace softmrc

#endif  // SOFTMRC_PIPELINE_H_
