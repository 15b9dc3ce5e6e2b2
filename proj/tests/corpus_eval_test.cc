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
#include <random>
#include <set>

#include "softmrc/corpus.h"
#include "softmrc/eval.h"

using namespace softmrc;
namespace fs = std::filesystem;

namespace {

const fs::path kData = fs::path(SOFTMRC_SOURCE_DIR) / "data";

CorpusProfile inst_a() { return CorpusProfile::load(kData / "inst_A.profile"); }

AnnotatedDocument doc_with(std::vector<Entity> ents, std::vector<Relation> rels = {}) {
  AnnotatedDocument d{"d1", "aspirin 81 mg daily for pain", std::move(ents), std::move(rels)};
  return d;
}

}  // namespace

TEST_CASE("standoff parsing") {
  std::string text = "Patient on aspirin.";
  auto empty = parse_standoff("x", text, "");
  CHECK(empty.entities.empty());
  CHECK(empty.relations.empty());

  auto one = parse_standoff("x", text, "T1\tDrug 11 18\taspirin\n");
  REQUIRE(one.entities.size() == 1);
  CHECK(one.entities[0].type == "Drug");
  CHECK(one.entities[0].start == 11);
  CHECK(one.entities[0].end == 18);

  CHECK_THROWS_AS(parse_standoff("x", text, "T1\tDrug 10 17\taspirin\n"), DataError);
  CHECK_THROWS_AS(parse_standoff("x", text, "T1\tDrug 11 18\taspirin\nR1\tADE-Drug Arg1:T1 Arg2:T9\n"),
                  DataError);
  CHECK_THROWS_AS(parse_standoff("x", text, "T1\tDrug 11 18\taspirin\nT1\tDrug 11 18\taspirin\n"),
                  DataError);

  auto disc = parse_standoff("x", text, "T1\tDrug 0 7;11 18\tPatient aspirin\n");
  CHECK(disc.entities[0].start == 0);
  CHECK(disc.entities[0].end == 18);
}

TEST_CASE("standoff round trip over a generated corpus") {
  auto docs = generate_corpus(inst_a(), 100, 3);
  for (const auto& d : docs) {
    auto ann = write_ann(d);
    CHECK(write_ann(parse_standoff(d.id, d.text, ann)) == ann);
  }
}

TEST_CASE("tokenizer") {
  auto spans = tokenize_spans("aspirin 81mg");
  CHECK(spans == std::vector<CharSpan>{{0, 7}, {8, 12}});
  CHECK(tokenize_spans("").empty());
  CHECK(tokenize_spans("a,b").size() == 3);

  Vocabulary v;
  auto id = v.add("Aspirin");
  CHECK(v.id("aspirin") == id);
  CHECK(v.id("never-seen") == kUnkId);
  CHECK(Vocabulary::parse(v.serialize()).serialize() == v.serialize());
}

TEST_CASE("generated entities align to tokens") {
  for (const auto& d : generate_corpus(inst_a(), 50, 4)) {
    Vocabulary v = Vocabulary::build({d});
    auto seq = tokenize(d.text, v);
    for (const auto& e : d.entities) {
      CHECK(d.text.substr(e.start, e.end - e.start) == e.surface);
      bool exact = false;
      CHECK(align_span(seq, e.start, e.end, &exact).has_value());
      CHECK(exact);
    }
  }
}

TEST_CASE("generator") {
  auto p = inst_a();
  auto a = generate_corpus(p, 20, 7);
  auto b = generate_corpus(p, 20, 7);
  REQUIRE(a.size() == 20);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].text == b[i].text);
    CHECK(write_ann(a[i]) == write_ann(b[i]));
    CHECK_NOTHROW(validate(a[i], p.schema));
  }
  CHECK(generate_corpus(p, 20, 8)[0].text != a[0].text);

  SUBCASE("nested rate zero") {
    p.nested_rate = 0.0;
    auto flat = generate_corpus(p, 100, 7);
    CHECK(overlapping_sentence_count(flat).first == 0);
  }
  SUBCASE("nested rate 0.2") {
    p.nested_rate = 0.2;
    auto docs = generate_corpus(p, 300, 7);
    auto [overlapping, total] = overlapping_sentence_count(docs);
    double rate = static_cast<double>(overlapping) / static_cast<double>(total);
    CHECK(rate == doctest::Approx(0.2).epsilon(0.25));
  }
}

TEST_CASE("few-shot sampling") {
  auto pool = generate_corpus(inst_a(), 303, 1);
  auto cats = inst_a().schema.concept_types();
  auto five = sample_few_shot(pool, {5, 3, cats});
  auto ten = sample_few_shot(pool, {10, 3, cats});
  for (const auto& [c, n] : category_counts(five))
    if (std::find(cats.begin(), cats.end(), c) != cats.end()) CHECK(n >= 5);
  for (const auto& c : cats) CHECK(category_counts(five)[c] >= 5);

  std::set<std::string> ids10;
  for (const auto& d : ten) ids10.insert(d.id);
  for (const auto& d : five) CHECK(ids10.count(d.id));
  CHECK(five.size() <= ten.size());

  auto again = sample_few_shot(pool, {5, 3, cats});
  REQUIRE(again.size() == five.size());
  for (std::size_t i = 0; i < five.size(); ++i) CHECK(again[i].id == five[i].id);

  CHECK_THROWS_AS(sample_few_shot(pool, {100000, 3, cats}), DataError);
}

TEST_CASE("concept scoring") {
  std::vector<Entity> gold = {{"T1", "Drug", 0, 7, "aspirin"},
                              {"T2", "Strength", 8, 13, "81 mg"},
                              {"T3", "Frequency", 14, 19, "daily"}};
  auto same = strict_concept_f1({doc_with(gold)}, {doc_with(gold)});
  CHECK(same.micro.f1() == 1.0);

  auto pred = gold;
  pred[2] = {"T3", "Reason", 24, 28, "pain"};
  auto r = strict_concept_f1({doc_with(gold)}, {doc_with(pred)});
  CHECK(r.micro == PrfCounts{2, 1, 1});
  CHECK(r.micro.precision() == doctest::Approx(2.0 / 3.0));
  CHECK(r.micro.recall() == doctest::Approx(2.0 / 3.0));
  CHECK(r.per_type.at("Frequency").fn == 1);

  auto relaxed = strict_concept_f1({doc_with(gold)}, {doc_with({{"T1", "Drug", 0, 5, "aspir"}})},
                                   MatchMode::kRelaxed);
  CHECK(relaxed.micro.tp == 1);

  PrfCounts zero;
  CHECK(zero.f1() == 0.0);
  CHECK(zero.precision() == 0.0);
}

TEST_CASE("scorer symmetry") {
  std::mt19937_64 rng(21);
  const std::vector<std::string> types = {"Drug", "ADE"};
  for (int t = 0; t < 50; ++t) {
    std::vector<Entity> g, p;
    for (int i = 0; i < 6; ++i) {
      std::size_t s = rng() % 5;
      (rng() % 2 ? g : p).push_back({"T" + std::to_string(i + 1), types[rng() % 2], s, s + 1,
                                     std::string(1, 'x')});
    }
    AnnotatedDocument dg{"d", std::string(10, 'x'), g, {}}, dp{"d", std::string(10, 'x'), p, {}};
    auto ab = strict_concept_f1({dg}, {dp}).micro;
    auto ba = strict_concept_f1({dp}, {dg}).micro;
    CHECK(ab.tp == ba.tp);
    CHECK(ab.precision() == ba.recall());
    CHECK(ab.recall() == ba.precision());
  }
}

TEST_CASE("relation scoring") {
  std::vector<Entity> ents = {{"T1", "Drug", 0, 7, "aspirin"}, {"T2", "Strength", 8, 13, "81 mg"}};
  auto gold = doc_with(ents, {{"R1", "Strength-Drug", "T1", "T2"}});
  CHECK(end_to_end_relation_f1({gold}, {gold}).micro.f1() == 1.0);
  auto wrong = doc_with(ents, {{"R1", "Dosage-Drug", "T1", "T2"}});
  CHECK(end_to_end_relation_f1({gold}, {wrong}).micro == PrfCounts{0, 1, 1});

  auto missing = gold;
  missing.id = "other";
  CHECK(end_to_end_relation_f1({gold}, {missing}).micro == PrfCounts{0, 1, 1});
}

namespace {

std::vector<ResultCell> cells_for(const std::vector<std::string>& columns, std::size_t sizes) {
  std::vector<ResultCell> out;
  for (std::size_t s = 0; s < sizes; ++s)
    for (const char* strategy : {"finetune", "hard", "soft_unfrozen", "soft_frozen"})
      for (const auto& col : columns)
        for (std::uint64_t seed : {1, 2, 3})
          out.push_back({strategy, "L2-d" + std::to_string(32 * (s + 1)), seed, "concept", "f1",
                         col, 0.1 * static_cast<double>(seed)});
  return out;
}

std::size_t data_rows(const std::string& table) {
  return static_cast<std::size_t>(std::count(table.begin(), table.end(), '\n')) - 2;  // title and header
}

}  // namespace

TEST_CASE("experiment reports") {
  auto grid = emit_experiment_report(cells_for({""}, 2), ReportLayout::kStrategyGrid);
  CHECK(data_rows(grid.table) == 8);
  CHECK(grid.table.find("0.2") != std::string::npos);  // median over seeds
  CHECK(emit_experiment_report(cells_for({""}, 2), ReportLayout::kStrategyGrid).jsonl ==
        grid.jsonl);

  CHECK_NOTHROW(emit_experiment_report(cells_for({"5", "10", "20", "50", "100"}, 1),
                                       ReportLayout::kFewShotCurve));
  CHECK_THROWS_AS(emit_experiment_report(cells_for({"5", "10", "20", "50"}, 1),
                                         ReportLayout::kFewShotCurve),
                  std::invalid_argument);
  CHECK_NOTHROW(emit_experiment_report(cells_for({"8", "16", "32", "64", "128"}, 1),
                                       ReportLayout::kPromptLength));
  CHECK_THROWS_AS(emit_experiment_report(cells_for({"8", "16", "32", "64", "256"}, 1),
                                         ReportLayout::kPromptLength),
                  std::invalid_argument);

  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}
