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

#include "softmrc/pipeline.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "softmrc/config.h"

namespace softmrc {

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kFinetuneNoPrompt: return "finetune";
    case StrategyKind::kHardPromptUnfrozen: return "hard";
    case StrategyKind::kSoftPromptUnfrozen: return "soft_unfrozen";
    case StrategyKind::kSoftPromptFrozen: return "soft_frozen";
  }
  return "unknown";
}

StrategyKind parse_strategy(const std::string& name) {
  for (auto k : kAllStrategies)
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown strategy '" + name +
                              "' (expected finetune, hard, soft_unfrozen or soft_frozen)");
}

bool uses_soft_prompts(StrategyKind kind) {
  return kind == StrategyKind::kSoftPromptUnfrozen || kind == StrategyKind::kSoftPromptFrozen;
}

bool uses_mrc(StrategyKind kind) { return kind != StrategyKind::kFinetuneNoPrompt; }

std::size_t segment_budget(const ModelConfig& config) {
  const auto& e = config.encoder;
  std::size_t reserved = e.prompt_len + config.hard_prompt_budget + 2;
  if (e.max_seq_len <= reserved + 8)
    throw std::invalid_argument("encoder.max_seq_len too small for prompts and a segment");
  return e.max_seq_len - reserved;
}

namespace {

bool is_sentence_end(const std::string& text, CharSpan s) {
  if (s.end != s.start + 1) return false;
  char c = text[s.start];
  return c == '.' || c == '?' || c == '!' || c == '\n';
}

TokenSequence slice(const TokenSequence& seq, std::size_t b, std::size_t e) {
  TokenSequence out;
  out.ids.assign(seq.ids.begin() + b, seq.ids.begin() + e);
  out.char_spans.assign(seq.char_spans.begin() + b, seq.char_spans.begin() + e);
  return out;
}

const std::string kDefaultConceptTemplate = "What {type_name} is mentioned in the text?";
const std::string kDefaultRelationTemplate = "What {type_name} of {trigger_text} is mentioned?";

}  // namespace

std::vector<Segment> segment_document(const std::string& text, const Vocabulary& vocab,
                                      std::size_t max_tokens, std::size_t max_sentences) {
  if (max_tokens == 0) throw std::invalid_argument("segment budget must be positive");
  TokenSequence all = tokenize(text, vocab);
  // Sentence boundaries as [begin, end) token ranges.
  std::vector<std::pair<std::size_t, std::size_t>> sentences;
  std::size_t b = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (is_sentence_end(text, all.char_spans[i])) {
      sentences.emplace_back(b, i + 1);
      b = i + 1;
    }
  }
  if (b < all.size()) sentences.emplace_back(b, all.size());

  std::vector<Segment> out;
  std::size_t seg_begin = 0, seg_end = 0;
  auto flush = [&] {
    if (seg_end > seg_begin) out.push_back({slice(all, seg_begin, seg_end), seg_begin});
    seg_begin = seg_end;
  };
  std::size_t packed = 0;
  for (auto [sb, se] : sentences) {
    if (se - seg_begin > max_tokens || (max_sentences > 0 && packed == max_sentences)) {
      flush();
      packed = 0;
    }
    ++packed;
    seg_begin = std::min(seg_begin, sb);
    // An over-long sentence is cut at the budget.
    while (se - seg_begin > max_tokens) {
      seg_end = seg_begin + max_tokens;
      flush();
    }
    seg_end = se;
  }
  flush();
  return out;
}

std::vector<Segment> segment_document(const std::string& text, const ModelBundle& bundle) {
  return segment_document(text, bundle.vocab(), segment_budget(bundle.config()),
                          bundle.config().max_segment_sentences);
}

BioEncoding bio_encode(const std::vector<TypedSpan>& spans, std::size_t n) {
  std::vector<TypedSpan> order = spans;
  std::sort(order.begin(), order.end(), [](const TypedSpan& a, const TypedSpan& b) {
    std::size_t la = a.span.end - a.span.start, lb = b.span.end - b.span.start;
    if (la != lb) return la > lb;
    return a < b;
  });
  order.erase(std::unique(order.begin(), order.end()), order.end());
  BioEncoding enc;
  enc.tags.assign(n, 0);
  std::vector<bool> used(n, false);
  for (const auto& s : order) {
    if (s.span.start > s.span.end || s.span.end >= n)
      throw std::out_of_range("BIO span outside sequence");
    bool clash = false;
    for (std::size_t i = s.span.start; i <= s.span.end; ++i) clash = clash || used[i];
    if (clash) {
      ++enc.dropped;
      continue;
    }
    for (std::size_t i = s.span.start; i <= s.span.end; ++i) {
      used[i] = true;
      enc.tags[i] = static_cast<int>((i == s.span.start ? 1 : 2) + 2 * s.type);
    }
    enc.kept.push_back(s);
  }
  std::sort(enc.kept.begin(), enc.kept.end(),
            [](const TypedSpan& a, const TypedSpan& b) { return a.span < b.span; });
  return enc;
}

std::vector<TypedSpan> bio_decode(const std::vector<int>& tags, std::size_t* repairs) {
  std::vector<TypedSpan> out;
  std::optional<TypedSpan> open;
  std::size_t fixed = 0;
  auto close = [&] {
    if (open) out.push_back(*open);
    open.reset();
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    int t = tags[i];
    if (t <= 0) {
      close();
      continue;
    }
    std::size_t type = static_cast<std::size_t>(t - 1) / 2;
    bool begin = (t % 2) == 1;
    if (!begin && open && open->type == type) {
      open->span.end = i;
      continue;
    }
    if (!begin) ++fixed;
    close();
    open = TypedSpan{type, {i, i}};
  }
  close();
  if (repairs) *repairs = fixed;
  return out;
}

// ---------------------------------------------------------------- bundle

namespace {

ModelConfig adjusted(ModelConfig c, const Vocabulary& vocab, const StrategyConfig& s) {
  c.encoder.vocab_size = vocab.size();
  c.encoder.prompt_len = uses_soft_prompts(s.kind) ? s.prompt_len : 0;
  if (s.kind == StrategyKind::kSoftPromptFrozen && s.prompt_len == 0)
    throw std::invalid_argument("soft_frozen needs prompt_len >= 1");
  validate(c.encoder);
  return c;
}

std::set<std::string> key_set(const RelationSchema& schema) {
  std::set<std::string> keys;
  for (const auto& t : schema.concept_types()) keys.insert(t);
  for (const auto& r : schema.relations) keys.insert(r.name);
  return keys;
}

}  // namespace

ModelBundle::ModelBundle(const ModelConfig& config, const RelationSchema& schema,
                         Vocabulary vocab, const StrategyConfig& strategy, TemplateSet templates)
    : config_(adjusted(config, vocab, strategy)),
      schema_(schema),
      vocab_(std::move(vocab)),
      strategy_(strategy),
      templates_(std::move(templates)),
      encoder_(config_.encoder, store_, config_.seed, uses_mrc(strategy.kind)),
      registry_(key_set(schema), config_.seed + 2) {
  schema_.validate();
  const std::size_t d = config_.encoder.model_dim;
  if (uses_mrc(strategy_.kind)) {
    heads_.emplace(SpanHeadConfig{d, config_.match_hidden, config_.match_scorer}, store_,
                   config_.seed + 1);
  } else {
    std::mt19937_64 rng(config_.seed + 3);
    const std::size_t tags = 2 * schema_.concept_types().size() + 1;
    const std::size_t classes = schema_.relations.size() + 1;
    store_.add("head.bio.w", xavier_tensor(d, tags, rng));
    store_.add("head.bio.b", Tensor({tags}));
    store_.add("head.pair.w1", xavier_tensor(4 * d, config_.pair_hidden, rng));
    store_.add("head.pair.b1", Tensor({config_.pair_hidden}));
    store_.add("head.pair.w2", xavier_tensor(config_.pair_hidden, classes, rng));
    store_.add("head.pair.b2", Tensor({classes}));
  }
  if (uses_soft_prompts(strategy_.kind))
    for (const auto& key : query_keys()) registry_.get_soft_bank(store_, key, config_.encoder);
  apply_strategy(*this, strategy_);
}

std::vector<std::string> ModelBundle::query_keys() const {
  std::vector<std::string> keys = schema_.concept_types();
  for (const auto& r : schema_.relations) keys.push_back(r.name);
  return keys;
}

SpanLogitVars ModelBundle::forward(const Query& q) const {
  if (!heads_) throw std::logic_error("MRC forward on a tagging model");
  const LayerPromptBank* bank = nullptr;
  if (uses_soft_prompts(strategy_.kind)) {
    bank = registry_.find(q.key);
    if (!bank) throw std::out_of_range("no soft prompt bank for key " + q.key);
  }
  Var h = encoder_.encode(store_, q.tokens, bank);
  std::size_t m = bank ? config_.encoder.prompt_len : 0;
  Var region = ops::slice_rows(h, m + q.doc_offset, h.rows());
  return heads_->score_spans(store_, region);
}

Var ModelBundle::query_loss(const Query& q, const SpanLossWeights& w) const {
  return span_loss(forward(q), q.gold_spans, w);
}

ModelBundle::TaggingOutput ModelBundle::tagging_forward(
    const TokenSequence& tokens,
    const std::vector<std::pair<TokenSpan, TokenSpan>>& pairs) const {
  if (heads_) throw std::logic_error("tagging forward on an MRC model");
  Var h = encoder_.encode(store_, tokens, nullptr);
  TaggingOutput out;
  out.tag_logits =
      ops::add_row(ops::matmul(h, store_.var("head.bio.w")), store_.var("head.bio.b"));
  if (!pairs.empty()) {
    std::vector<std::size_t> rows;
    rows.reserve(4 * pairs.size());
    for (const auto& [t, a] : pairs) {
      rows.push_back(t.start);
      rows.push_back(t.end);
      rows.push_back(a.start);
      rows.push_back(a.end);
    }
    const std::size_t d = config_.encoder.model_dim;
    Var feats = ops::reshape(ops::gather_rows(h, rows), {pairs.size(), 4 * d});
    Var hid = ops::tanh(
        ops::add_row(ops::matmul(feats, store_.var("head.pair.w1")), store_.var("head.pair.b1")));
    out.pair_logits =
        ops::add_row(ops::matmul(hid, store_.var("head.pair.w2")), store_.var("head.pair.b2"));
  }
  return out;
}

Var ModelBundle::tagging_loss(const TaggingInstance& inst) const {
  std::vector<std::pair<TokenSpan, TokenSpan>> pairs;
  std::vector<int> labels;
  for (const auto& p : inst.pairs) {
    pairs.emplace_back(p.trigger, p.attribute);
    labels.push_back(p.label);
  }
  auto out = tagging_forward(inst.tokens, pairs);
  Var loss = ops::cross_entropy_rows(out.tag_logits, inst.tags);
  if (!pairs.empty()) loss = ops::add(loss, ops::cross_entropy_rows(out.pair_logits, labels));
  return loss;
}

StrategyReport apply_strategy(ModelBundle& bundle, const StrategyConfig& strategy) {
  auto& store = bundle.store();
  store.unfreeze_all();
  if (strategy.kind == StrategyKind::kSoftPromptFrozen) {
    store.freeze_prefix("encoder.");
    store.freeze("embed.token");
  }
  StrategyReport r;
  r.frozen = store.frozen();
  r.trainable = store.trainable_count();
  r.total = store.total_count();
  return r;
}

Vocabulary build_vocabulary(const std::vector<AnnotatedDocument>& docs,
                            const TemplateSet& templates) {
  Vocabulary v = Vocabulary::build(docs);
  for (const auto& key : templates.keys()) {
    std::string text = render_hard_prompt(templates.get(key), key, std::string());
    for (const auto& s : tokenize_spans(text)) v.add(text.substr(s.start, s.end - s.start));
  }
  return v;
}

// ------------------------------------------------------------- instances

namespace {

std::string template_text(const ModelBundle& b, const std::string& key, bool relation) {
  if (b.templates().contains(key)) return b.templates().get(key).text;
  return relation ? kDefaultRelationTemplate : kDefaultConceptTemplate;
}

std::string surface(const std::string& text, const TokenSequence& seg, TokenSpan s) {
  std::size_t a = seg.char_spans[s.start].start, e = seg.char_spans[s.end].end;
  return text.substr(a, e - a);
}

// Model input for a query over `region`.
void fill_query_tokens(const ModelBundle& b, Query& q, const TokenSequence& region,
                       const std::optional<std::string>& trigger_text) {
  if (b.strategy().kind != StrategyKind::kHardPromptUnfrozen) {
    q.tokens = region;
    q.doc_offset = 0;
    return;
  }
  HardPromptTemplate tpl{q.key, template_text(b, q.key, trigger_text.has_value())};
  std::string question = render_hard_prompt(tpl, q.key, trigger_text);
  TokenSequence qt = tokenize(question, b.vocab());
  std::size_t budget = b.config().hard_prompt_budget - 1;
  if (qt.size() > budget) qt = slice(qt, 0, budget);
  // Question positions carry no document offsets.
  for (auto& c : qt.char_spans) c = {0, 0};
  qt.ids.push_back(kSepId);
  qt.char_spans.push_back({0, 0});
  q.doc_offset = qt.size();
  q.tokens = qt;
  q.tokens.ids.insert(q.tokens.ids.end(), region.ids.begin(), region.ids.end());
  q.tokens.char_spans.insert(q.tokens.char_spans.end(), region.char_spans.begin(),
                             region.char_spans.end());
}

Query concept_query(const ModelBundle& b, const std::string& doc_id, std::size_t seg_index,
                    const TokenSequence& seg, const std::string& type) {
  Query q;
  q.doc_id = doc_id;
  q.segment = seg_index;
  q.key = type;
  fill_query_tokens(b, q, seg, std::nullopt);
  q.anchor_mask.assign(seg.size(), false);
  return q;
}

Query relation_query(const ModelBundle& b, const std::string& doc_id, const std::string& text,
                     std::size_t seg_index, const TokenSequence& seg, TokenSpan trigger,
                     const std::string& relation) {
  Verbalized v = verbalize(seg, trigger);
  Query q;
  q.doc_id = doc_id;
  q.segment = seg_index;
  q.key = relation;
  q.trigger = trigger;
  q.remap = v.remap;
  fill_query_tokens(b, q, v.tokens, surface(text, seg, trigger));
  q.anchor_mask.resize(v.tokens.size());
  for (std::size_t i = 0; i < v.tokens.size(); ++i) q.anchor_mask[i] = is_anchor(v.tokens.ids[i]);
  return q;
}

struct PlacedEntity {
  const Entity* entity;
  std::size_t segment;
  TokenSpan span;
};

struct PlacedDocument {
  std::vector<Segment> segments;
  std::map<std::string, PlacedEntity> entities;  // by entity id
  std::vector<const Relation*> relations;        // both arguments placed in one segment
};

PlacedDocument place(const AnnotatedDocument& doc, const ModelBundle& b, InstanceStats* stats) {
  validate(doc, b.schema());
  PlacedDocument p;
  p.segments = segment_document(doc.text, b);
  for (const auto& e : doc.entities) {
    bool placed = false;
    for (std::size_t s = 0; s < p.segments.size() && !placed; ++s) {
      const auto& t = p.segments[s].tokens;
      if (t.empty()) continue;
      if (e.start < t.char_spans.front().start || e.end > t.char_spans.back().end) continue;
      bool exact = true;
      auto span = align_span(t, e.start, e.end, &exact);
      if (!span) continue;
      if (!exact && stats) ++stats->misaligned_entities;
      p.entities.emplace(e.id, PlacedEntity{&e, s, *span});
      placed = true;
    }
    if (!placed && stats) ++stats->dropped_entities;
  }
  for (const auto& r : doc.relations) {
    auto t = p.entities.find(r.trigger_id), a = p.entities.find(r.attribute_id);
    if (t == p.entities.end() || a == p.entities.end() || t->second.segment != a->second.segment) {
      if (stats) ++stats->dropped_relations;
      continue;
    }
    p.relations.push_back(&r);
  }
  return p;
}

}  // namespace

std::vector<Query> build_training_instances(const std::vector<AnnotatedDocument>& docs,
                                            const ModelBundle& bundle, bool with_relations,
                                            InstanceStats* stats) {
  if (!uses_mrc(bundle.strategy().kind))
    throw std::logic_error("MRC instances requested for a tagging strategy");
  const auto& schema = bundle.schema();
  std::vector<Query> out;
  for (const auto& doc : docs) {
    PlacedDocument p = place(doc, bundle, stats);
    for (std::size_t s = 0; s < p.segments.size(); ++s) {
      const auto& seg = p.segments[s].tokens;
      for (const auto& type : schema.concept_types()) {
        Query q = concept_query(bundle, doc.id, s, seg, type);
        for (const auto& [id, pe] : p.entities)
          if (pe.segment == s && pe.entity->type == type) q.gold_spans.push_back(pe.span);
        std::sort(q.gold_spans.begin(), q.gold_spans.end());
        q.gold_spans.erase(std::unique(q.gold_spans.begin(), q.gold_spans.end()),
                           q.gold_spans.end());
        out.push_back(std::move(q));
      }
      if (!with_relations) continue;
      for (const auto& [id, pe] : p.entities) {
        if (pe.segment != s || !schema.is_trigger(pe.entity->type)) continue;
        for (const RelationType* rt : schema.relations_for_trigger(pe.entity->type)) {
          Query q = relation_query(bundle, doc.id, doc.text, s, seg, pe.span, rt->name);
          for (const Relation* r : p.relations) {
            if (r->type != rt->name || r->trigger_id != id) continue;
            q.gold_spans.push_back(q.remap.span_to_new(p.entities.at(r->attribute_id).span));
          }
          std::sort(q.gold_spans.begin(), q.gold_spans.end());
          q.gold_spans.erase(std::unique(q.gold_spans.begin(), q.gold_spans.end()),
                             q.gold_spans.end());
          out.push_back(std::move(q));
        }
      }
    }
  }
  return out;
}

std::vector<TaggingInstance> build_tagging_instances(const std::vector<AnnotatedDocument>& docs,
                                                     const ModelBundle& bundle,
                                                     InstanceStats* stats) {
  if (uses_mrc(bundle.strategy().kind))
    throw std::logic_error("tagging instances requested for an MRC strategy");
  const auto& schema = bundle.schema();
  const auto types = schema.concept_types();
  auto type_index = [&](const std::string& t) {
    return static_cast<std::size_t>(std::find(types.begin(), types.end(), t) - types.begin());
  };
  std::vector<TaggingInstance> out;
  for (const auto& doc : docs) {
    PlacedDocument p = place(doc, bundle, stats);
    for (std::size_t s = 0; s < p.segments.size(); ++s) {
      TaggingInstance inst;
      inst.doc_id = doc.id;
      inst.tokens = p.segments[s].tokens;
      std::vector<TypedSpan> spans;
      for (const auto& [id, pe] : p.entities)
        if (pe.segment == s) spans.push_back({type_index(pe.entity->type), pe.span});
      BioEncoding enc = bio_encode(spans, inst.tokens.size());
      inst.tags = enc.tags;
      inst.dropped_spans = enc.dropped;
      if (stats) stats->bio_dropped_spans += enc.dropped;
      // Every schema-compatible trigger/attribute pair among gold entities.
      for (const auto& [tid, t] : p.entities) {
        if (t.segment != s || !schema.is_trigger(t.entity->type)) continue;
        for (const auto& [aid, a] : p.entities) {
          if (a.segment != s || aid == tid) continue;
          auto rel = schema.relation_between(t.entity->type, a.entity->type);
          if (!rel) continue;
          int label = 0;
          for (const Relation* r : p.relations)
            if (r->trigger_id == tid && r->attribute_id == aid && r->type == *rel) {
              for (std::size_t k = 0; k < schema.relations.size(); ++k)
                if (schema.relations[k].name == *rel) label = static_cast<int>(k + 1);
            }
          inst.pairs.push_back({t.span, a.span, label});
        }
      }
      out.push_back(std::move(inst));
    }
  }
  return out;
}

// ------------------------------------------------------------ extraction

namespace {

struct PendingEntity {
  std::string type;
  std::size_t start, end;
  bool operator<(const PendingEntity& o) const {
    return std::tie(start, o.end, type) < std::tie(o.start, end, o.type);
  }
  bool operator==(const PendingEntity& o) const {
    return type == o.type && start == o.start && end == o.end;
  }
};

struct PendingRelation {
  std::string type;
  PendingEntity trigger, attribute;
};

AnnotatedDocument assemble(const std::string& doc_id, const std::string& text,
                           std::vector<PendingEntity> ents, std::vector<PendingRelation> rels) {
  std::sort(ents.begin(), ents.end());
  ents.erase(std::unique(ents.begin(), ents.end()), ents.end());
  AnnotatedDocument doc;
  doc.id = doc_id;
  doc.text = text;
  auto id_of = [&](const PendingEntity& e) {
    auto it = std::lower_bound(ents.begin(), ents.end(), e);
    return "T" + std::to_string(it - ents.begin() + 1);
  };
  for (std::size_t i = 0; i < ents.size(); ++i)
    doc.entities.push_back({"T" + std::to_string(i + 1), ents[i].type, ents[i].start, ents[i].end,
                            text.substr(ents[i].start, ents[i].end - ents[i].start)});
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  std::vector<std::tuple<std::string, std::string, std::string>> keyed;
  for (const auto& r : rels) {
    auto k = std::make_tuple(id_of(r.trigger), id_of(r.attribute), r.type);
    if (seen.insert(k).second) keyed.push_back(k);
  }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    auto num = [](const std::string& id) { return std::stoul(id.substr(1)); };
    return std::make_tuple(num(std::get<0>(a)), num(std::get<1>(a)), std::get<2>(a)) <
           std::make_tuple(num(std::get<0>(b)), num(std::get<1>(b)), std::get<2>(b));
  });
  for (std::size_t i = 0; i < keyed.size(); ++i)
    doc.relations.push_back({"R" + std::to_string(i + 1), std::get<2>(keyed[i]),
                             std::get<0>(keyed[i]), std::get<1>(keyed[i])});
  return doc;
}

PendingEntity to_chars(const std::string& type, const TokenSequence& seg, TokenSpan s) {
  return {type, seg.char_spans[s.start].start, seg.char_spans[s.end].end};
}

}  // namespace

AnnotatedDocument extract(const ModelBundle& bundle, const std::string& doc_id,
                          const std::string& text, bool with_relations) {
  NoGradGuard no_grad;
  const auto& schema = bundle.schema();
  const auto segments = segment_document(text, bundle);
  const auto& decode = bundle.config().decode;
  std::vector<PendingEntity> ents;
  std::vector<PendingRelation> rels;

  if (uses_mrc(bundle.strategy().kind)) {
    for (std::size_t s = 0; s < segments.size(); ++s) {
      const auto& seg = segments[s].tokens;
      if (seg.empty()) continue;
      std::vector<std::pair<std::string, TokenSpan>> triggers;
      for (const auto& type : schema.concept_types()) {
        Query q = concept_query(bundle, doc_id, s, seg, type);
        auto preds = decode_spans(SpanLogits::from_vars(bundle.forward(q)), decode);
        for (const auto& p : preds) {
          ents.push_back(to_chars(type, seg, {p.start, p.end}));
          if (schema.is_trigger(type)) triggers.emplace_back(type, TokenSpan{p.start, p.end});
        }
      }
      if (!with_relations) continue;
      for (const auto& [ttype, tspan] : triggers) {
        PendingEntity trig = to_chars(ttype, seg, tspan);
        for (const RelationType* rt : schema.relations_for_trigger(ttype)) {
          Query q = relation_query(bundle, doc_id, text, s, seg, tspan, rt->name);
          auto preds =
              decode_spans(SpanLogits::from_vars(bundle.forward(q)), decode, q.anchor_mask);
          for (const auto& p : preds) {
            auto old = q.remap.span_to_old({p.start, p.end});
            if (!old) continue;
            PendingEntity attr = to_chars(rt->attribute_type, seg, *old);
            ents.push_back(attr);
            rels.push_back({rt->name, trig, attr});
          }
        }
      }
    }
  } else {
    const auto types = schema.concept_types();
    for (const auto& segment : segments) {
      const auto& seg = segment.tokens;
      if (seg.empty()) continue;
      auto first = bundle.tagging_forward(seg, {});
      const Tensor& lg = first.tag_logits.value();
      std::vector<int> tags(seg.size());
      for (std::size_t i = 0; i < seg.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < lg.cols(); ++c)
          if (lg.at(i, c) > lg.at(i, best)) best = c;
        tags[i] = static_cast<int>(best);
      }
      auto spans = bio_decode(tags);
      for (const auto& ts : spans) ents.push_back(to_chars(types[ts.type], seg, ts.span));
      if (!with_relations) continue;
      std::vector<std::pair<TokenSpan, TokenSpan>> pairs;
      std::vector<std::pair<std::size_t, std::size_t>> which;
      for (std::size_t i = 0; i < spans.size(); ++i) {
        if (!schema.is_trigger(types[spans[i].type])) continue;
        for (std::size_t j = 0; j < spans.size(); ++j) {
          if (i == j || !schema.relation_between(types[spans[i].type], types[spans[j].type]))
            continue;
          pairs.emplace_back(spans[i].span, spans[j].span);
          which.emplace_back(i, j);
        }
      }
      if (pairs.empty()) continue;
      auto out = bundle.tagging_forward(seg, pairs);
      const Tensor& pl = out.pair_logits.value();
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < pl.cols(); ++c)
          if (pl.at(p, c) > pl.at(p, best)) best = c;
        if (best == 0) continue;
        const auto& rt = schema.relations[best - 1];
        const auto& ti = spans[which[p].first];
        const auto& ai = spans[which[p].second];
        if (rt.trigger_type != types[ti.type] || rt.attribute_type != types[ai.type]) continue;
        rels.push_back({rt.name, to_chars(types[ti.type], seg, ti.span),
                        to_chars(types[ai.type], seg, ai.span)});
      }
    }
  }
  return assemble(doc_id, text, std::move(ents), std::move(rels));
}

std::vector<AnnotatedDocument> extract_all(const ModelBundle& bundle,
                                           const std::vector<AnnotatedDocument>& docs,
                                           bool with_relations) {
  std::vector<AnnotatedDocument> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(extract(bundle, d.id, d.text, with_relations));
  return out;
}

// -------------------------------------------------------------- training

TrainResult train(ModelBundle& bundle, const std::vector<AnnotatedDocument>& docs,
                  const TrainConfig& tc, const std::function<void(const EpochRecord&)>& on_epoch) {
  if (docs.empty()) throw std::invalid_argument("training set is empty");
  if (tc.batch_size == 0) throw std::invalid_argument("batch_size must be positive");

  std::vector<AnnotatedDocument> train_docs, dev_docs;
  if (tc.dev_fraction > 0.0 && docs.size() >= 2) {
    std::vector<std::size_t> perm(docs.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(tc.seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::size_t n_dev = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(tc.dev_fraction * docs.size())));
    n_dev = std::min(n_dev, docs.size() - 1);
    std::vector<bool> is_dev(docs.size(), false);
    for (std::size_t i = 0; i < n_dev; ++i) is_dev[perm[i]] = true;
    for (std::size_t i = 0; i < docs.size(); ++i)
      (is_dev[i] ? dev_docs : train_docs).push_back(docs[i]);
  } else {
    train_docs = docs;
    dev_docs = docs;
  }

  TrainResult result;
  const bool mrc = uses_mrc(bundle.strategy().kind);
  std::vector<Query> queries;
  std::vector<TaggingInstance> tagged;
  if (mrc) {
    queries = build_training_instances(train_docs, bundle, tc.relations, &result.stats);
  } else {
    tagged = build_tagging_instances(train_docs, bundle, &result.stats);
    if (!tc.relations)
      for (auto& t : tagged) t.pairs.clear();
  }
  const std::size_t n = mrc ? queries.size() : tagged.size();
  if (n == 0) throw std::invalid_argument("training set produced no instances");
  if (tc.epochs == 0) return result;

  AdamState adam;
  adam.hyper.learning_rate = tc.learning_rate;
  adam.hyper.clip_norm = tc.clip_norm;
  auto& store = bundle.store();
  store.zero_grad();
  auto best = store.snapshot();
  double best_score = -1.0;
  std::size_t stale = 0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::mt19937_64 rng(tc.seed * 1000003ULL + epoch);
    std::shuffle(order.begin(), order.end(), rng);
    if (tc.lr_decay)
      adam.hyper.learning_rate = tc.learning_rate * (1.0 - static_cast<double>(epoch - 1) /
                                                               static_cast<double>(tc.epochs));
    double total = 0.0;
    for (std::size_t b = 0; b < n; b += tc.batch_size) {
      std::size_t e = std::min(n, b + tc.batch_size);
      double inv = 1.0 / static_cast<double>(e - b);
      for (std::size_t i = b; i < e; ++i) {
        Var loss = mrc ? bundle.query_loss(queries[order[i]], tc.loss_weights)
                       : bundle.tagging_loss(tagged[order[i]]);
        total += loss.item();
        backward(ops::scale(loss, inv));
      }
      adam_step(store, adam);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = total / static_cast<double>(n);
    auto pred = extract_all(bundle, dev_docs, tc.relations);
    rec.dev_concept_f1 = strict_concept_f1(dev_docs, pred).micro.f1();
    if (tc.relations) {
      rec.dev_relation_f1 = end_to_end_relation_f1(dev_docs, pred).micro.f1();
      rec.dev_score = 0.5 * (rec.dev_concept_f1 + rec.dev_relation_f1);
    } else {
      rec.dev_score = rec.dev_concept_f1;
    }
    result.history.push_back(rec);
    if (tc.verbose)
      std::cerr << "epoch " << epoch << " loss " << rec.train_loss << " dev concept "
                << rec.dev_concept_f1 << " relation " << rec.dev_relation_f1 << "\n";
    if (on_epoch) on_epoch(rec);
    if (rec.dev_score > best_score) {
      best_score = rec.dev_score;
      best = store.snapshot();
      result.best_epoch = epoch;
      stale = 0;
    } else {
      ++stale;
    }
    if (best_score >= 1.0 || stale >= tc.patience) break;
  }
  store.restore(best);
  result.best_dev_score = std::max(best_score, 0.0);
  return result;
}

// ------------------------------------------------------------- artifacts

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << s;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DataError("cannot read " + p.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_checkpoint(bundle.store(), dir / "model.ckpt");
  write_text(dir / "vocab.txt", bundle.vocab().serialize());
  write_text(dir / "schema.schema", bundle.schema().serialize());
  write_text(dir / "templates.txt", bundle.templates().serialize());
  KeyValueConfig kv;
  write_model_config(bundle.config(), bundle.strategy(), kv);
  // The stored encoder prompt length is strategy-adjusted; keep the request.
  kv.set("prompt_len", std::to_string(bundle.strategy().prompt_len));
  write_text(dir / "model.cfg", kv.serialize());
}

std::unique_ptr<ModelBundle> load_bundle(const std::filesystem::path& dir) {
  KeyValueConfig kv = KeyValueConfig::load(dir / "model.cfg");
  ModelConfig mc = model_config_from(kv);
  StrategyConfig sc = strategy_config_from(kv);
  auto schema = RelationSchema::parse(read_text(dir / "schema.schema"));
  auto vocab = Vocabulary::parse(read_text(dir / "vocab.txt"));
  auto templates = TemplateSet::parse(read_text(dir / "templates.txt"));
  auto bundle = std::make_unique<ModelBundle>(mc, schema, std::move(vocab), sc,
                                              std::move(templates));
  load_checkpoint(bundle->store(), dir / "model.ckpt");
  return bundle;
}

}  // namespace softmrc
