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
#include <cmath>
#include <random>
#include <set>

#include "softmrc/encoder.h"
#include "softmrc/parameters.h"
#include "softmrc/prompt_bank.h"
#include "softmrc/span_heads.h"

using namespace softmrc;

namespace {

EncoderConfig small_config(std::size_t m = 4) {
  EncoderConfig c;
  c.num_layers = 2;
  c.model_dim = 8;
  c.num_heads = 2;
  c.ffn_dim = 16;
  c.vocab_size = 20;
  c.max_seq_len = 32;
  c.prompt_len = m;
  return c;
}

TokenSequence seq_of(std::vector<std::size_t> ids) {
  TokenSequence s;
  for (std::size_t i = 0; i < ids.size(); ++i) s.char_spans.push_back({i * 2, i * 2 + 1});
  s.ids = std::move(ids);
  return s;
}

bool rows_equal(const Tensor& t, std::size_t r1, const Tensor& u, std::size_t r2) {
  for (std::size_t c = 0; c < t.cols(); ++c)
    if (t.at(r1, c) != u.at(r2, c)) return false;
  return true;
}

}  // namespace

TEST_CASE("encoder config validation") {
  auto c = small_config();
  CHECK_NOTHROW(validate(c));
  c.num_heads = 3;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
}

TEST_CASE("embedding") {
  ParameterStore store;
  auto cfg = small_config();
  Encoder enc(cfg, store, 1, true);
  CHECK(enc.embed(store, seq_of({}), 0).rows() == 0);

  auto e = enc.embed(store, seq_of({7, 3, 7}), 0).value();
  CHECK(e.shape() == std::vector<std::size_t>{3, 8});
  CHECK_FALSE(rows_equal(e, 0, e, 2));
  CHECK_THROWS(enc.embed(store, seq_of({25}), 0));

  ParameterStore plain;
  cfg.position_encoding = false;
  Encoder flat(cfg, plain, 1, true);
  auto f = flat.embed(plain, seq_of({7, 3, 7}), 0).value();
  CHECK(rows_equal(f, 0, f, 2));
}

TEST_CASE("prompt injection replaces the leading rows") {
  ParameterStore store;
  auto cfg = small_config(4);
  Encoder enc(cfg, store, 1, true);
  PromptRegistry reg({"Drug", "Dosage"}, 3);
  const auto& bank = reg.get_soft_bank(store, "Drug", cfg);

  std::mt19937_64 rng(2);
  auto hidden = Var::constant(normal_tensor({14, 8}, 1.0, rng));
  auto out = enc.inject_prompts(store, hidden, 0, bank).value();
  CHECK(out.rows() == 14);
  const auto& p0 = store.tensor(bank.param_names[0]);
  for (std::size_t r = 0; r < 4; ++r) CHECK(rows_equal(out, r, p0, r));
  for (std::size_t r = 4; r < 14; ++r) CHECK(rows_equal(out, r, hidden.value(), r));
  CHECK_THROWS(enc.inject_prompts(store, hidden, 3, bank));

  auto cfg0 = small_config(0);
  ParameterStore s0;
  Encoder enc0(cfg0, s0, 1, true);
  PromptRegistry reg0({"Drug"}, 3);
  const auto& empty_bank = reg0.get_soft_bank(s0, "Drug", cfg0);
  auto same = enc0.inject_prompts(s0, hidden, 0, empty_bank).value();
  CHECK(same.data() == hidden.value().data());
}

TEST_CASE("different keys give different encodings") {
  ParameterStore store;
  auto cfg = small_config(4);
  Encoder enc(cfg, store, 1, true);
  PromptRegistry reg({"Drug", "Dosage"}, 3);
  const auto& a = reg.get_soft_bank(store, "Drug", cfg);
  const auto& b = reg.get_soft_bank(store, "Dosage", cfg);
  auto seq = seq_of({5, 6, 7, 8, 9, 10, 11, 12, 13, 14});
  auto ha = enc.encode(store, seq, &a).value();
  auto hb = enc.encode(store, seq, &b).value();
  CHECK(ha.rows() == 14);
  for (std::size_t r = 4; r < 14; ++r) CHECK_FALSE(rows_equal(ha, r, hb, r));

  auto bare = enc.encode(store, seq, nullptr).value();
  CHECK(bare.shape() == std::vector<std::size_t>{10, 8});

  CHECK_THROWS_AS(enc.encode(store, seq_of(std::vector<std::size_t>(40, 5)), &a),
                  std::length_error);
}

TEST_CASE("attention rows are distributions") {
  ParameterStore store;
  auto cfg = small_config(4);
  Encoder enc(cfg, store, 1, true);
  PromptRegistry reg({"Drug"}, 3);
  const auto& bank = reg.get_soft_bank(store, "Drug", cfg);
  EncodeTrace trace;
  enc.encode(store, seq_of({5, 6, 7}), &bank, &trace);
  REQUIRE(trace.attention.size() == 2);
  for (const auto& layer : trace.attention) {
    REQUIRE(layer.size() == 2);
    for (const auto& probs : layer) {
      CHECK(probs.rows() == 7);
      for (std::size_t r = 0; r < probs.rows(); ++r) {
        double s = 0;
        for (std::size_t c = 0; c < probs.cols(); ++c) s += probs.at(r, c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("hard prompt rendering") {
  HardPromptTemplate q{"Drug", "What {type_name} is mentioned in the text?"};
  CHECK(render_hard_prompt(q, "Drug", std::nullopt) == "What drug is mentioned in the text?");
  HardPromptTemplate r{"Dosage-Drug", "What is the dosage of {trigger_text}?"};
  CHECK(render_hard_prompt(r, "Dosage-Drug", std::string("aspirin")) ==
        "What is the dosage of aspirin?");
  CHECK_THROWS_AS(render_hard_prompt(r, "Dosage-Drug", std::nullopt), std::invalid_argument);

  auto set = TemplateSet::parse("# comment\nDrug\tWhat {type_name}?\n\nADE\tAny ADE?\n");
  CHECK(set.keys() == std::vector<std::string>{"ADE", "Drug"});
  CHECK(TemplateSet::parse(set.serialize()).serialize() == set.serialize());
}

TEST_CASE("verbalize") {
  auto seq = seq_of({10, 11, 12});
  auto v = verbalize(seq, {1, 1});
  CHECK(v.tokens.ids == std::vector<std::size_t>{10, kStartAnchorId, 11, kEndAnchorId, 12});
  CHECK(v.remap.to_new(2) == 4);
  CHECK_FALSE(v.remap.to_old(1).has_value());

  auto w = verbalize(seq, {0, 0});
  CHECK(w.tokens.ids == std::vector<std::size_t>{kStartAnchorId, 10, kEndAnchorId, 11, 12});
  CHECK_THROWS(verbalize(seq, {2, 3}));

  std::mt19937_64 rng(8);
  for (int t = 0; t < 200; ++t) {
    std::size_t n = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
    std::vector<std::size_t> ids(n, 9);
    std::size_t a = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    std::size_t b = std::uniform_int_distribution<std::size_t>(a, n - 1)(rng);
    auto vv = verbalize(seq_of(ids), {a, b});
    CHECK(vv.tokens.size() == n + 2);
    std::size_t i = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    std::size_t j = std::uniform_int_distribution<std::size_t>(i, n - 1)(rng);
    auto back = vv.remap.span_to_old(vv.remap.span_to_new({i, j}));
    REQUIRE(back.has_value());
    CHECK(*back == TokenSpan{i, j});
  }
}

TEST_CASE("soft banks") {
  ParameterStore store;
  auto cfg = small_config(8);
  PromptRegistry reg({"Drug", "Dosage"}, 3);
  auto names = reg.get_soft_bank(store, "Drug", cfg).param_names;
  CHECK(reg.get_soft_bank(store, "Drug", cfg).param_names == names);
  CHECK(store.count_with_prefix("prompt.") == 3 * 8 * 8);

  auto other = reg.get_soft_bank(store, "Dosage", cfg).param_names;
  std::set<std::string> all(names.begin(), names.end());
  for (const auto& n : other) CHECK_FALSE(all.count(n));
  CHECK(reg.bank_count() == 2);
  CHECK_THROWS(reg.get_soft_bank(store, "Route", cfg));

  // Creation order does not change the initial values.
  ParameterStore store2;
  PromptRegistry reg2({"Drug", "Dosage"}, 3);
  reg2.get_soft_bank(store2, "Dosage", cfg);
  reg2.get_soft_bank(store2, "Drug", cfg);
  CHECK(store.snapshot() == store2.snapshot());
}

TEST_CASE("span head shapes") {
  ParameterStore store;
  SpanHeadConfig cfg{8, 8, MatchScorer::kTanhMlp};
  SpanHeads heads(cfg, store, 4);
  std::mt19937_64 rng(1);
  auto one = heads.score_spans(store, Var::constant(normal_tensor({1, 8}, 1.0, rng)));
  CHECK(one.start.numel() == 1);
  CHECK(one.match.value().shape() == std::vector<std::size_t>{1, 1});

  auto many = SpanLogits::from_vars(
      heads.score_spans(store, Var::constant(normal_tensor({5, 8}, 1.0, rng))));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < i; ++j) CHECK(many.match_at(i, j) == -INFINITY);
}

namespace {

SpanLogitVars saturated(std::size_t n, const std::vector<TokenSpan>& gold) {
  Tensor s({n}, -20.0), e({n}, -20.0), m({n, n}, -20.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) m.data()[i * n + j] = -INFINITY;
  for (const auto& g : gold) {
    s[g.start] = 20.0;
    e[g.end] = 20.0;
    m.data()[g.start * n + g.end] = 20.0;
  }
  return {Var::leaf(s, true), Var::leaf(e, true), Var::leaf(m, true)};
}

double naive_bce(double x, double t) {
  double p = 1.0 / (1.0 + std::exp(-x));
  return -(t * std::log(p) + (1 - t) * std::log(1 - p));
}

}  // namespace

TEST_CASE("span loss") {
  std::vector<TokenSpan> gold = {{1, 3}, {2, 2}};
  CHECK(span_loss(saturated(5, gold), gold, {}).item() < 1e-6);

  SUBCASE("match-only weights ignore start and end") {
    auto a = saturated(5, gold);
    auto b = saturated(5, gold);
    b.start.value().data()[0] = 3.0;
    b.end.value().data()[4] = -1.0;
    CHECK(span_loss(a, gold, {0, 0, 1}).item() == span_loss(b, gold, {0, 0, 1}).item());
  }

  SUBCASE("random logits against a hand-written BCE") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> nd(0.0, 2.0);
    const std::size_t n = 6;
    Tensor s({n}), e({n}), m({n, n});
    for (auto& x : s.data()) x = nd(rng);
    for (auto& x : e.data()) x = nd(rng);
    for (auto& x : m.data()) x = nd(rng);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) m.data()[i * n + j] = -INFINITY;
    TokenSpan g{2, 4};
    double ls = 0, le = 0, lm = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ls += naive_bce(s[i], i == g.start);
      le += naive_bce(e[i], i == g.end);
      for (std::size_t j = i; j < n; ++j, ++pairs)
        lm += naive_bce(m.data()[i * n + j], i == g.start && j == g.end);
    }
    double want = ls / n + le / n + lm / static_cast<double>(pairs);
    SpanLogitVars v{Var::leaf(s), Var::leaf(e), Var::leaf(m)};
    CHECK(span_loss(v, {g}, {}).item() == doctest::Approx(want).epsilon(1e-12));
  }

  CHECK_THROWS(span_loss(saturated(3, {}), {{1, 5}}, {}));
}

TEST_CASE("decode") {
  SpanLogits none = SpanLogits::from_vars(saturated(6, {}));
  CHECK(decode_spans(none, {}).empty());

  auto one = SpanLogits::from_vars(saturated(6, {{2, 4}}));
  auto got = decode_spans(one, {});
  REQUIRE(got.size() == 1);
  CHECK(got[0].start == 2);
  CHECK(got[0].end == 4);

  auto nested = SpanLogits::from_vars(saturated(7, {{1, 5}, {2, 3}}));
  auto both = decode_spans(nested, {});
  std::set<std::pair<std::size_t, std::size_t>> spans;
  for (const auto& p : both) spans.insert({p.start, p.end});
  CHECK(spans == std::set<std::pair<std::size_t, std::size_t>>{{1, 5}, {2, 3}});

  std::vector<bool> mask(7, false);
  mask[5] = true;
  auto masked = decode_spans(nested, {}, mask);
  REQUIRE(masked.size() == 1);
  CHECK(masked[0].start == 2);

  DecodeOptions short_spans;
  short_spans.max_span_len = 2;
  auto limited = decode_spans(nested, short_spans);
  REQUIRE(limited.size() == 1);
  CHECK(limited[0].end == 3);
}

TEST_CASE("saturated loss and exact decode coincide") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 50; ++t) {
    std::size_t n = std::uniform_int_distribution<std::size_t>(1, 9)(rng);
    std::set<TokenSpan> gold_set;
    std::size_t k = std::uniform_int_distribution<std::size_t>(0, 2)(rng);
    // Disjoint starts and ends keep the saturated logits unambiguous.
    for (std::size_t g = 0; g < k; ++g) {
      std::size_t i = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      gold_set.insert({i, i});
    }
    std::vector<TokenSpan> gold(gold_set.begin(), gold_set.end());
    auto v = saturated(n, gold);
    CHECK(span_loss(v, gold, {}).item() < 1e-6);
    for (double thr : {0.1, 0.5, 0.9}) {
      DecodeOptions opt;
      opt.threshold = thr;
      std::set<TokenSpan> decoded;
      for (const auto& p : decode_spans(SpanLogits::from_vars(v), opt))
        decoded.insert({p.start, p.end});
      CHECK(decoded == gold_set);
    }
  }
}
