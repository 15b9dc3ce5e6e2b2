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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>

#include "softmrc/config.h"
#include "softmrc/corpus.h"
#include "softmrc/eval.h"
#include "softmrc/pipeline.h"

using namespace softmrc;
namespace fs = std::filesystem;

namespace {

RelationSchema tiny_schema() {
  return RelationSchema::parse(
      "name tiny\ntrigger Drug\nattribute Dosage\nrelation Dosage-Drug Drug Dosage\n");
}

ModelConfig tiny_model() {
  ModelConfig mc;
  mc.encoder.num_layers = 1;
  mc.encoder.model_dim = 8;
  mc.encoder.num_heads = 2;
  mc.encoder.ffn_dim = 16;
  mc.encoder.max_seq_len = 64;
  mc.match_hidden = 8;
  mc.pair_hidden = 8;
  mc.hard_prompt_budget = 16;
  return mc;
}

// "take aspirin 2 tabs" with Dosage "2 tabs" related to the Drug.
AnnotatedDocument one_relation_doc() {
  AnnotatedDocument d{"a", "take aspirin 2 tabs .", {}, {}};
  d.entities = {{"T1", "Drug", 5, 12, "aspirin"}, {"T2", "Dosage", 13, 19, "2 tabs"}};
  d.relations = {{"R1", "Dosage-Drug", "T1", "T2"}};
  return d;
}

std::unique_ptr<ModelBundle> bundle_for(const std::vector<AnnotatedDocument>& docs,
                                        StrategyKind kind, std::size_t m = 4) {
  return std::make_unique<ModelBundle>(tiny_model(), tiny_schema(),
                                       build_vocabulary(docs, TemplateSet{}),
                                       StrategyConfig{kind, m});
}

}  // namespace

TEST_CASE("strategy names") {
  for (auto k : kAllStrategies) CHECK(parse_strategy(to_string(k)) == k);
  CHECK_THROWS(parse_strategy("frozen"));
  CHECK_FALSE(uses_mrc(StrategyKind::kFinetuneNoPrompt));
  CHECK(uses_soft_prompts(StrategyKind::kSoftPromptFrozen));
  CHECK_FALSE(uses_soft_prompts(StrategyKind::kHardPromptUnfrozen));
}

TEST_CASE("instance construction") {
  std::vector<AnnotatedDocument> docs = {one_relation_doc()};
  auto b = bundle_for(docs, StrategyKind::kSoftPromptUnfrozen);

  auto qs = build_training_instances(docs, *b, true);
  REQUIRE(qs.size() == 3);
  std::size_t stage2 = std::count_if(qs.begin(), qs.end(), [](const Query& q) { return q.relation_stage(); });
  CHECK(stage2 == 1);
  for (const auto& q : qs) {
    CHECK(q.gold_spans.size() == 1);
    if (q.relation_stage()) {
      CHECK(q.tokens.size() == 7);  // 5 tokens plus two anchors
      CHECK(std::count(q.anchor_mask.begin(), q.anchor_mask.end(), true) == 2);
    }
  }

  SUBCASE("empty segment gives one no-answer query per concept type") {
    std::vector<AnnotatedDocument> bare = {{"b", "nothing here .", {}, {}}};
    auto none = build_training_instances(bare, *b, true);
    REQUIRE(none.size() == 2);
    for (const auto& q : none) CHECK(q.gold_spans.empty());
  }

  SUBCASE("two dosages of one trigger") {
    AnnotatedDocument d{"c", "take aspirin 2 tabs or 3 tabs .", {}, {}};
    d.entities = {{"T1", "Drug", 5, 12, "aspirin"},
                  {"T2", "Dosage", 13, 19, "2 tabs"},
                  {"T3", "Dosage", 23, 29, "3 tabs"}};
    d.relations = {{"R1", "Dosage-Drug", "T1", "T2"}, {"R2", "Dosage-Drug", "T1", "T3"}};
    std::vector<AnnotatedDocument> two = {d};
    auto b2 = bundle_for(two, StrategyKind::kSoftPromptUnfrozen);
    auto q2 = build_training_instances(two, *b2, true);
    auto it = std::find_if(q2.begin(), q2.end(), [](const Query& q) { return q.relation_stage(); });
    REQUIRE(it != q2.end());
    CHECK(it->gold_spans.size() == 2);
  }

  SUBCASE("hard prompts precede the document region") {
    auto h = bundle_for(docs, StrategyKind::kHardPromptUnfrozen);
    for (const auto& q : build_training_instances(docs, *h, true)) {
      CHECK(q.doc_offset > 0);
      CHECK(q.tokens.ids[q.doc_offset - 1] == kSepId);
    }
  }
}

TEST_CASE("bio encoding") {
  auto one = bio_encode({{0, {1, 2}}}, 4);
  CHECK(one.tags == std::vector<int>{0, 1, 2, 0});
  CHECK(one.dropped == 0);

  auto nested = bio_encode({{0, {0, 3}}, {0, {1, 2}}}, 5);
  CHECK(nested.dropped == 1);
  REQUIRE(nested.kept.size() == 1);
  CHECK(nested.kept[0].span == TokenSpan{0, 3});

  std::vector<TypedSpan> flat = {{0, {0, 0}}, {1, {2, 4}}, {0, {5, 6}}};
  CHECK(bio_decode(bio_encode(flat, 8).tags) == flat);

  std::size_t repairs = 0;
  auto lenient = bio_decode({0, 2, 2, 0}, &repairs);
  CHECK(repairs == 1);
  REQUIRE(lenient.size() == 1);
  CHECK(lenient[0].span == TokenSpan{1, 2});
}

TEST_CASE("freeze masks") {
  std::vector<AnnotatedDocument> docs = {one_relation_doc()};
  auto frozen = bundle_for(docs, StrategyKind::kSoftPromptFrozen);
  auto r = apply_strategy(*frozen, frozen->strategy());
  for (const auto& n : frozen->store().names_with_prefix("encoder.")) CHECK(r.frozen.count(n));
  CHECK(r.frozen.count("embed.token"));
  CHECK_FALSE(r.frozen.count("embed.anchor"));
  CHECK(r.trainable < r.total);

  auto open = bundle_for(docs, StrategyKind::kSoftPromptUnfrozen);
  CHECK(apply_strategy(*open, open->strategy()).frozen.empty());

  auto ft = bundle_for(docs, StrategyKind::kFinetuneNoPrompt);
  CHECK(ft->store().names_with_prefix("prompt.").empty());
  CHECK(ft->store().contains("head.bio.w"));
}

TEST_CASE("training contract") {
  std::vector<AnnotatedDocument> docs = {one_relation_doc()};
  auto b = bundle_for(docs, StrategyKind::kSoftPromptFrozen);
  TrainConfig tc;
  tc.epochs = 0;
  tc.dev_fraction = 0.0;
  auto before = b->store().snapshot();
  auto result = train(*b, docs, tc);
  CHECK(result.history.empty());
  CHECK(b->store().snapshot() == before);

  CHECK_THROWS_AS(train(*b, {}, tc), std::invalid_argument);

  tc.epochs = 3;
  auto after = train(*b, docs, tc);
  CHECK(after.history.size() == 3);
  auto snap = b->store().snapshot();
  for (const auto& n : b->store().names_with_prefix("encoder.")) CHECK(snap.at(n) == before.at(n));
  CHECK(snap.at("embed.token") == before.at("embed.token"));
}

TEST_CASE("training is deterministic") {
  std::vector<AnnotatedDocument> docs = {one_relation_doc()};
  TrainConfig tc;
  tc.epochs = 3;
  tc.dev_fraction = 0.0;
  auto a = bundle_for(docs, StrategyKind::kHardPromptUnfrozen);
  auto b = bundle_for(docs, StrategyKind::kHardPromptUnfrozen);
  auto ha = train(*a, docs, tc).history;
  auto hb = train(*b, docs, tc).history;
  REQUIRE(ha.size() == hb.size());
  for (std::size_t i = 0; i < ha.size(); ++i) CHECK(ha[i].train_loss == hb[i].train_loss);
  CHECK(a->store().snapshot() == b->store().snapshot());
}

TEST_CASE("extraction on an untrained model") {
  std::vector<AnnotatedDocument> docs = {one_relation_doc()};
  for (auto kind : kAllStrategies) {
    auto mc = tiny_model();
    mc.decode.threshold = 0.99;
    ModelBundle b(mc, tiny_schema(), build_vocabulary(docs, {}), StrategyConfig{kind, 4});
    AnnotatedDocument out;
    CHECK_NOTHROW(out = extract(b, "a", docs[0].text));
    CHECK_NOTHROW(validate(out));
  }
}

TEST_CASE("bio cannot represent nested spans") {
  AnnotatedDocument d{"n", "history of lung cancer .", {}, {}};
  d.entities = {{"T1", "Dosage", 0, 22, "history of lung cancer"},
                {"T2", "Dosage", 11, 22, "lung cancer"}};
  std::vector<AnnotatedDocument> docs = {d};
  auto bio = bundle_for(docs, StrategyKind::kFinetuneNoPrompt);
  InstanceStats stats;
  build_tagging_instances(docs, *bio, &stats);
  CHECK(stats.bio_dropped_spans == 1);
  CHECK(nested_entity_count(d) == 1);

  auto mrc = bundle_for(docs, StrategyKind::kSoftPromptUnfrozen);
  auto qs = build_training_instances(docs, *mrc, false);
  auto it = std::find_if(qs.begin(), qs.end(), [](const Query& q) { return q.key == "Dosage"; });
  REQUIRE(it != qs.end());
  CHECK(it->gold_spans.size() == 2);
}

TEST_CASE("segmentation respects the budget") {
  auto docs = generate_corpus(CorpusProfile::load(fs::path(SOFTMRC_SOURCE_DIR) / "data" /
                                                  "inst_A.profile"),
                              5, 2);
  auto vocab = build_vocabulary(docs, {});
  for (const auto& d : docs) {
    auto segs = segment_document(d.text, vocab, 20);
    std::size_t total = 0;
    for (const auto& s : segs) {
      CHECK(s.tokens.size() <= 20);
      CHECK(s.token_begin == total);
      total += s.tokens.size();
    }
    CHECK(total == tokenize(d.text, vocab).size());
    CHECK(segment_document(d.text, vocab, 1000, 1).size() >= segs.size() / 2);
  }
}

TEST_CASE("bundle save and load") {
  std::vector<AnnotatedDocument> docs = {one_relation_doc()};
  auto b = bundle_for(docs, StrategyKind::kSoftPromptUnfrozen);
  auto dir = fs::temp_directory_path() / "softmrc_unit_bundle";
  fs::remove_all(dir);
  save_bundle(*b, dir);
  auto loaded = load_bundle(dir);
  CHECK(loaded->store().snapshot() == b->store().snapshot());
  CHECK(loaded->strategy().kind == b->strategy().kind);
  CHECK(write_ann(extract(*loaded, "a", docs[0].text)) == write_ann(extract(*b, "a", docs[0].text)));
  fs::remove_all(dir);
}

TEST_CASE("config precedence and validation") {
  auto kv = KeyValueConfig::parse("# c\nencoder.dim = 32\ntrain.lr = 0.01\nstrategy = hard\n");
  kv.apply_overrides({"train.lr=0.5"});
  auto rc = RunConfig::from(kv);
  CHECK(rc.model.encoder.model_dim == 32);
  CHECK(rc.train.learning_rate == 0.5);
  CHECK(rc.strategy.kind == StrategyKind::kHardPromptUnfrozen);
  CHECK(rc.model.encoder.num_layers == ModelConfig{}.encoder.num_layers);

  auto replay = RunConfig::from(KeyValueConfig::parse(rc.to_config().serialize()));
  CHECK(replay.to_config().serialize() == rc.to_config().serialize());

  CHECK_THROWS_AS(RunConfig::from(KeyValueConfig::parse("encoder.dimm = 3\n")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from(KeyValueConfig::parse("train.lr = fast\n")), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from(KeyValueConfig::parse("decode.threshold = 1.5\n")), ConfigError);
}
