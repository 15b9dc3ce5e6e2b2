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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any selected criterion fails.
//
//   acceptance                  run every criterion
//   acceptance --criterion 3    run one criterion (comma lists allowed)
//
// Criteria 6, 7 and 10 share their training runs when selected together.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

#include "softmrc/config.h"
#include "softmrc/corpus.h"
#include "softmrc/eval.h"
#include "softmrc/experiments.h"
#include "softmrc/pipeline.h"

namespace fs = std::filesystem;
using namespace softmrc;

namespace {

const fs::path kSource = SOFTMRC_SOURCE_DIR;

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Line {
  int id;
  bool pass;
  std::string detail;
};
std::vector<Line> g_lines;

void report(int id, bool pass, const std::string& detail) {
  g_lines.push_back({id, pass, detail});
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

RunConfig load_run_config(const std::string& name) {
  auto kv = KeyValueConfig::load(kSource / "configs" / name);
  for (const char* key : {"schema", "templates"})
    if (kv.has(key)) kv.set(key, (kSource / kv.get_string(key, "")).string());
  return RunConfig::from(kv);
}

ExperimentSetup setup_from(const RunConfig& rc) {
  ExperimentSetup s;
  s.model = rc.model;
  s.train = rc.train;
  s.schema = RelationSchema::load(rc.schema_path);
  s.templates = TemplateSet::load(rc.templates_path);
  s.prompt_len = rc.strategy.prompt_len;
  s.relations = rc.train.relations;
  return s;
}

CorpusProfile profile(const std::string& name) {
  return CorpusProfile::load(kSource / "data" / (name + ".profile"));
}

// Test splits use the same seed offset as the CLI's gen-data and xfer.
constexpr std::uint64_t kDataSeed = 1;
constexpr std::uint64_t kTestOffset = 1000003;

// ------------------------------------------------------------------ 1

void criterion_gradients() {
  auto t0 = Clock::now();
  GradcheckOptions opt;
  opt.configs = 100;
  opt.seed = 1;
  auto r = run_gradcheck(opt);
  double secs = seconds_since(t0);
  bool ok = r.passed() && r.configs >= 100 && r.max_error < 1e-4 && secs < 120.0;
  report(1, ok,
         std::to_string(r.configs) + " random encoder+span-loss configs, max rel err " +
             fmt("%.2e", r.max_error) + " (" + r.worst + "), " + fmt("%.1fs", secs));
}

// ------------------------------------------------------------------ 2

void criterion_freeze() {
  RunConfig rc = load_run_config("desk.cfg");
  auto setup = setup_from(rc);
  auto docs = generate_corpus(profile("inst_A"), 30, 5);
  auto vocab = build_vocabulary(docs, setup.templates);

  StrategyConfig frozen{StrategyKind::kSoftPromptFrozen, setup.prompt_len};
  StrategyConfig unfrozen{StrategyKind::kSoftPromptUnfrozen, setup.prompt_len};
  ModelBundle a(setup.model, setup.schema, vocab, frozen, setup.templates);
  ModelBundle b(setup.model, setup.schema, vocab, unfrozen, setup.templates);
  auto ra = apply_strategy(a, frozen);
  auto rb = apply_strategy(b, unfrozen);

  auto backbone = [](const ModelBundle& m) {
    std::vector<std::string> names = m.store().names_with_prefix("encoder.");
    names.push_back("embed.token");
    return names;
  };
  auto before = a.store().snapshot();
  TrainConfig tc = setup.train;
  tc.epochs = 2;
  tc.relations = true;
  train(a, docs, tc);
  auto after = a.store().snapshot();

  bool identical = true;
  for (const auto& name : backbone(a)) {
    const auto& x = before.at(name);
    const auto& y = after.at(name);
    identical = identical && x.size() == y.size() &&
                std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
  }
  bool prompts_moved = false;
  for (const auto& name : a.store().names_with_prefix("prompt."))
    prompts_moved = prompts_moved || before.at(name) != after.at(name);
  bool all_frozen = true;
  for (const auto& name : backbone(a)) all_frozen = all_frozen && ra.frozen.count(name);

  bool ok = identical && prompts_moved && all_frozen && ra.trainable < rb.trainable;
  report(2, ok,
         std::string("backbone bitwise ") + (identical ? "unchanged" : "CHANGED") +
             ", prompts " + (prompts_moved ? "updated" : "not updated") + ", trainable " +
             std::to_string(ra.trainable) + " (frozen) < " + std::to_string(rb.trainable) +
             " (unfrozen); trainable fraction " + fmt("%.1f%%", 100.0 * ra.fraction()) +
             " at toy scale (reference range 2.5~6%)");
}

// ------------------------------------------------------------------ 3

std::vector<SpanPrediction> brute_force_decode(const SpanLogits& l, double thr,
                                               std::size_t max_len,
                                               const std::vector<bool>& mask) {
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  std::vector<SpanPrediction> out;
  const std::size_t n = l.start.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i > j || j - i >= max_len) continue;
      if (mask[i] || mask[j]) continue;
      double a = sig(l.start[i]), b = sig(l.end[j]), c = sig(l.match[i * n + j]);
      if (a < thr || b < thr || c < thr) continue;
      out.push_back({i, j, std::cbrt(a * b * c)});
    }
  std::sort(out.begin(), out.end(), [](const SpanPrediction& x, const SpanPrediction& y) {
    return std::tie(y.score, x.start, x.end) < std::tie(x.score, y.start, y.end);
  });
  return out;
}

void criterion_decode_oracle() {
  std::mt19937_64 rng(3);
  std::size_t mismatches = 0, spans = 0;
  for (int t = 0; t < 1000; ++t) {
    std::size_t n = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
    // Coarse logits make exact score ties common, exercising the tie-break.
    bool coarse = t % 3 == 0;
    auto draw = [&] {
      return coarse ? static_cast<double>(std::uniform_int_distribution<int>(-3, 3)(rng))
                    : std::normal_distribution<double>(0.0, 3.0)(rng);
    };
    SpanLogits l;
    for (std::size_t i = 0; i < n; ++i) {
      l.start.push_back(draw());
      l.end.push_back(draw());
    }
    for (std::size_t i = 0; i < n * n; ++i) l.match.push_back(draw());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) l.match[i * n + j] = -INFINITY;
    DecodeOptions opt;
    opt.threshold = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    opt.max_span_len = std::uniform_int_distribution<std::size_t>(1, 13)(rng);
    std::vector<bool> mask(n, false);
    if (t % 2 == 0)
      for (std::size_t i = 0; i < n; ++i) mask[i] = std::bernoulli_distribution(0.15)(rng);
    auto got = decode_spans(l, opt, mask);
    auto want = brute_force_decode(l, opt.threshold, opt.max_span_len, mask);
    spans += want.size();
    bool same = got.size() == want.size();
    for (std::size_t k = 0; same && k < got.size(); ++k)
      same = got[k].start == want[k].start && got[k].end == want[k].end &&
             std::abs(got[k].score - want[k].score) <= 1e-15;
    if (!same) ++mismatches;
  }
  report(3, mismatches == 0,
         "1000 random SpanLogits (n<=12), " + std::to_string(spans) +
             " oracle spans, mismatches " + std::to_string(mismatches));
}

// ------------------------------------------------------------------ 4

using EntKey = std::tuple<std::string, std::string, std::size_t, std::size_t>;

PrfCounts naive_concepts(const std::vector<AnnotatedDocument>& gold,
                         const std::vector<AnnotatedDocument>& pred) {
  std::multiset<EntKey> g, p;
  for (const auto& d : gold)
    for (const auto& e : d.entities) g.insert({d.id, e.type, e.start, e.end});
  for (const auto& d : pred)
    for (const auto& e : d.entities) p.insert({d.id, e.type, e.start, e.end});
  PrfCounts c;
  for (auto it = g.begin(); it != g.end(); it = g.upper_bound(*it)) {
    std::size_t m = std::min(g.count(*it), p.count(*it));
    c.tp += m;
  }
  c.fn = g.size() - c.tp;
  c.fp = p.size() - c.tp;
  return c;
}

PrfCounts naive_relations(const std::vector<AnnotatedDocument>& gold,
                          const std::vector<AnnotatedDocument>& pred) {
  using RelKey = std::tuple<std::string, std::string, EntKey, EntKey>;
  auto collect = [](const std::vector<AnnotatedDocument>& docs) {
    std::multiset<RelKey> out;
    for (const auto& d : docs)
      for (const auto& r : d.relations) {
        const Entity* t = d.entity(r.trigger_id);
        const Entity* a = d.entity(r.attribute_id);
        out.insert({d.id, r.type, EntKey{"", t->type, t->start, t->end},
                    EntKey{"", a->type, a->start, a->end}});
      }
    return out;
  };
  auto g = collect(gold), p = collect(pred);
  PrfCounts c;
  for (auto it = g.begin(); it != g.end(); it = g.upper_bound(*it))
    c.tp += std::min(g.count(*it), p.count(*it));
  c.fn = g.size() - c.tp;
  c.fp = p.size() - c.tp;
  return c;
}

std::vector<AnnotatedDocument> random_docs(std::mt19937_64& rng, bool allow_missing) {
  static const std::vector<std::string> types = {"Drug", "Dosage", "ADE"};
  std::vector<AnnotatedDocument> docs;
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  for (int d = 0; d < 4; ++d) {
    if (allow_missing && pick(0, 5) == 0) continue;
    AnnotatedDocument doc;
    doc.id = "doc" + std::to_string(d);
    doc.text = std::string(40, 'x');
    std::size_t ne = pick(0, 7);
    for (std::size_t e = 0; e < ne; ++e) {
      std::size_t s = pick(0, 8), len = pick(1, 3);
      doc.entities.push_back({"T" + std::to_string(e + 1), types[pick(0, 2)], s, s + len,
                              doc.text.substr(s, len)});
    }
    std::size_t nr = ne == 0 ? 0 : pick(0, 4);
    for (std::size_t r = 0; r < nr; ++r) {
      const auto& t = doc.entities[pick(0, ne - 1)];
      const auto& a = doc.entities[pick(0, ne - 1)];
      doc.relations.push_back({"R" + std::to_string(r + 1), pick(0, 1) ? "Dosage-Drug" : "ADE-Drug",
                               t.id, a.id});
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

void criterion_scorer_oracle() {
  std::mt19937_64 rng(4);
  std::size_t mismatches = 0;
  for (int t = 0; t < 500; ++t) {
    auto gold = random_docs(rng, false);
    auto pred = random_docs(rng, true);
    if (!(strict_concept_f1(gold, pred).micro == naive_concepts(gold, pred))) ++mismatches;
    if (!(end_to_end_relation_f1(gold, pred).micro == naive_relations(gold, pred))) ++mismatches;
  }
  // Hand case: tp=2, fp=1, fn=1.
  AnnotatedDocument g{"d", "aspirin 81 mg daily", {}, {}};
  g.entities = {{"T1", "Drug", 0, 7, "aspirin"}, {"T2", "Strength", 8, 13, "81 mg"},
                {"T3", "Frequency", 14, 19, "daily"}};
  AnnotatedDocument p = g;
  p.entities[2] = {"T3", "Frequency", 13, 19, " daily"};
  auto hand = strict_concept_f1({g}, {p}).micro;
  bool hand_ok = hand.tp == 2 && hand.fp == 1 && hand.fn == 1 && hand.f1() == 2.0 / 3.0;
  report(4, mismatches == 0 && hand_ok,
         "500 random gold/pred sets x {concept, relation}: mismatches " +
             std::to_string(mismatches) + "; hand case tp=2 fp=1 fn=1 F1=" +
             fmt("%.17g", hand.f1()));
}

// ------------------------------------------------------------------ 5

void criterion_memorization() {
  auto t0 = Clock::now();
  RunConfig rc = load_run_config("toy.cfg");
  auto setup = setup_from(rc);
  auto docs = generate_corpus(profile("inst_A"), 10, 7);
  ModelBundle bundle(rc.model, setup.schema, build_vocabulary(docs, setup.templates), rc.strategy,
                     setup.templates);
  auto result = train(bundle, docs, rc.train);
  auto pred = extract_all(bundle, docs, true);
  double cf = strict_concept_f1(docs, pred).micro.f1();
  double rf = end_to_end_relation_f1(docs, pred).micro.f1();
  bool decreasing = result.history.size() >= 5;
  for (std::size_t e = 1; decreasing && e < 5; ++e)
    decreasing = result.history[e].train_loss < result.history[e - 1].train_loss;
  double secs = seconds_since(t0);
  bool ok = cf == 1.0 && rf == 1.0 && result.history.size() <= 50 && decreasing && secs < 300.0;
  report(5, ok,
         "10 docs, L=2 d=64 m=32 soft_unfrozen: train concept F1 " + fmt("%.4f", cf) +
             ", relation F1 " + fmt("%.4f", rf) + " after " +
             std::to_string(result.history.size()) + " epochs (best " +
             std::to_string(result.best_epoch) + "), loss strictly decreasing over epochs 1-5: " +
             (decreasing ? "yes" : "no") + ", " + fmt("%.0fs", secs));
}

// ------------------------------------------------------------ 6, 7, 10

// Held-out concept F1 committed from the seeded reference run.
const std::map<std::string, double> kCommittedConceptF1 = {
    {"finetune", 0.9777}, {"hard", 0.9948}, {"soft_unfrozen", 0.9907}, {"soft_frozen", 0.9840}};

std::size_t nested_recall_hits(const std::vector<AnnotatedDocument>& gold,
                               const std::vector<AnnotatedDocument>& pred, std::size_t* total) {
  std::size_t hits = 0;
  *total = 0;
  for (std::size_t d = 0; d < gold.size(); ++d) {
    const auto& doc = gold[d];
    for (std::size_t i = 0; i < doc.entities.size(); ++i) {
      if (!is_nested_inside_other(doc, i)) continue;
      ++*total;
      const auto& e = doc.entities[i];
      for (const auto& p : pred[d].entities)
        if (p.type == e.type && p.start == e.start && p.end == e.end) {
          ++hits;
          break;
        }
    }
  }
  return hits;
}

void criteria_desk(bool want6, bool want7, bool want10) {
  auto t0 = Clock::now();
  RunConfig rc = load_run_config("desk.cfg");
  auto setup = setup_from(rc);
  setup.keep_predictions = true;
  auto prof_a = profile("inst_A");
  auto prof_b = profile("inst_B");
  auto train_docs = generate_corpus(prof_a, 303, kDataSeed);
  auto test_a = generate_corpus(prof_a, 202, kDataSeed + kTestOffset);
  auto test_b = generate_corpus(prof_b, 202, kDataSeed + kTestOffset);
  CorpusProfile nested_prof = prof_a;
  nested_prof.nested_rate = 0.2;
  auto test_nested = generate_corpus(nested_prof, 202, kDataSeed + 2 * kTestOffset);

  NamedDocs tests = {{"inst_A-test", test_a}, {"inst_B-test", test_b}};
  if (want7) tests.push_back({"nested-test", test_nested});

  std::map<std::string, RunOutcome> outcomes;
  for (auto kind : kAllStrategies) {
    auto ts = Clock::now();
    auto o = run_single(setup, StrategyConfig{kind, setup.prompt_len}, 1, train_docs, tests);
    std::printf("  %-13s A-test F1 %.4f  B-test F1 %.4f  (%zu epochs, %.0fs)\n",
                o.strategy.c_str(), o.concepts["inst_A-test"].micro.f1(),
                o.concepts["inst_B-test"].micro.f1(), o.training.history.size(), seconds_since(ts));
    outcomes[o.strategy] = std::move(o);
  }
  double secs = seconds_since(t0);

  if (want6) {
    bool ok = secs < 3600.0;
    std::string detail;
    for (auto kind : kAllStrategies) {
      const auto name = to_string(kind);
      double f1 = outcomes[name].concepts["inst_A-test"].micro.f1();
      double ref = kCommittedConceptF1.at(name);
      ok = ok && f1 >= 0.75 && std::abs(f1 - ref) <= 0.02;
      detail += name + " " + fmt("%.4f", f1) + " (ref " + fmt("%.4f", ref) + ") ";
    }
    report(6, ok, "303 train / 202 test held-out concept F1: " + detail + fmt("grid %.0fs", secs));
  }

  if (want7) {
    // Structural check: BIO drops exactly the nested gold spans.
    ModelBundle bio(setup.model, setup.schema, build_vocabulary(train_docs, setup.templates),
                    StrategyConfig{StrategyKind::kFinetuneNoPrompt, setup.prompt_len},
                    setup.templates);
    InstanceStats stats;
    build_tagging_instances(test_nested, bio, &stats);
    std::size_t nested_gold = 0;
    for (const auto& d : test_nested) nested_gold += nested_entity_count(d);

    std::map<std::string, double> recall;
    std::size_t total = 0;
    for (auto kind : kAllStrategies) {
      const auto name = to_string(kind);
      std::size_t hits =
          nested_recall_hits(test_nested, outcomes[name].predictions["nested-test"], &total);
      recall[name] = total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
    }
    double bio_recall = recall["finetune"];
    bool ok = total > 0 && stats.bio_dropped_spans == nested_gold;
    std::string detail = std::to_string(total) + " nested gold entities; BIO dropped " +
                         std::to_string(stats.bio_dropped_spans) + " spans; nested recall BIO " +
                         fmt("%.3f", bio_recall);
    for (auto kind : {StrategyKind::kHardPromptUnfrozen, StrategyKind::kSoftPromptUnfrozen,
                      StrategyKind::kSoftPromptFrozen}) {
      const auto name = to_string(kind);
      ok = ok && recall[name] > bio_recall;
      detail += ", " + name + " " + fmt("%.3f", recall[name]);
    }
    report(7, ok, detail);
  }

  if (want10) {
    bool ok = true;
    std::string detail;
    for (auto kind : kAllStrategies) {
      const auto name = to_string(kind);
      double in = outcomes[name].concepts["inst_A-test"].micro.f1();
      double out = outcomes[name].concepts["inst_B-test"].micro.f1();
      ok = ok && in >= out;
      detail += name + " " + fmt("%.3f", in) + " >= " + fmt("%.3f", out) + "; ";
    }
    std::vector<ResultCell> cells;
    for (const auto& [name, o] : outcomes) {
      auto c = outcome_cells(o, size_label(setup.model), "");
      for (auto& cell : c)
        if (cell.column != "nested-test") cells.push_back(cell);
    }
    auto table = emit_experiment_report(cells, ReportLayout::kTransferMatrix).table;
    std::size_t rows = 0;
    for (auto kind : kAllStrategies)
      if (table.find(to_string(kind)) != std::string::npos) ++rows;
    ok = ok && rows == kAllStrategies.size();
    report(10, ok, "train inst_A, in-domain >= cross-domain concept F1: " + detail +
                       std::to_string(rows) + " strategy rows in the transfer table");
  }
}

// ------------------------------------------------------------------ 8

std::set<std::string> table_columns(const std::string& table) {
  std::istringstream in(table);
  std::string header;
  std::getline(in, header);
  std::set<std::string> cols;
  std::istringstream h(header);
  std::string c;
  while (std::getline(h, c, '\t')) cols.insert(c);
  return cols;
}

void criterion_few_shot() {
  auto t0 = Clock::now();
  RunConfig rc = load_run_config("desk.cfg");
  auto setup = setup_from(rc);
  auto prof = profile("inst_A");
  auto pool = generate_corpus(prof, 303, kDataSeed);
  auto test = generate_corpus(prof, 202, kDataSeed + kTestOffset);
  auto cells = run_few_shot(setup, kAllStrategies, kFewShotGrid, {1, 2, 3}, pool, test);
  auto med = median_by_strategy(cells, "concept", "f1");
  auto report_out = emit_experiment_report(cells, ReportLayout::kFewShotCurve);

  std::set<std::string> ks;
  for (const auto& c : cells) ks.insert(c.column);
  bool ok = ks == std::set<std::string>{"5", "10", "20", "50", "100"};
  std::string detail;
  for (auto kind : kAllStrategies) {
    const auto name = to_string(kind);
    double lo = med[{name, "5"}], hi = med[{name, "100"}];
    ok = ok && hi >= lo;
    detail += name + " " + fmt("%.3f", lo) + " -> " + fmt("%.3f", hi) + "; ";
  }
  std::printf("%s", report_out.table.c_str());
  report(8, ok, "median concept F1 k=5 -> k=100 (3 seeds): " + detail + "k columns " +
                    std::to_string(ks.size()) + fmt(", %.0fs", seconds_since(t0)));
}

// ------------------------------------------------------------------ 9

void criterion_prompt_length() {
  auto t0 = Clock::now();
  RunConfig rc = load_run_config("desk.cfg");
  auto setup = setup_from(rc);
  auto prof = profile("inst_A");
  auto train_docs = generate_corpus(prof, 100, kDataSeed);
  auto test = generate_corpus(prof, 100, kDataSeed + kTestOffset);
  const std::vector<StrategyKind> soft = {StrategyKind::kSoftPromptUnfrozen,
                                          StrategyKind::kSoftPromptFrozen};
  auto cells = run_prompt_length(setup, soft, kPromptLengthGrid, {1}, train_docs, test);
  auto rep = emit_experiment_report(cells, ReportLayout::kPromptLength);
  std::printf("%s", rep.table.c_str());

  std::set<std::string> ms;
  for (const auto& c : cells) ms.insert(c.column);
  bool grid_ok = ms == std::set<std::string>{"8", "16", "32", "64", "128"};

  // Rerun one cell and compare bit for bit.
  auto again = run_prompt_length(setup, {StrategyKind::kSoftPromptFrozen}, {16}, {1}, train_docs,
                                 test);
  bool same = false;
  for (const auto& c : cells)
    for (const auto& d : again)
      if (c.strategy == d.strategy && c.column == d.column && c.task == d.task &&
          c.metric == "f1" && d.metric == "f1")
        same = std::memcmp(&c.value, &d.value, sizeof(double)) == 0;
  report(9, grid_ok && same,
         "m columns " + std::to_string(ms.size()) + " {8,16,32,64,128}; soft_frozen m=16 rerun " +
             (same ? "bit-identical" : "DIFFERS") + fmt(", %.0fs", seconds_since(t0)));
}

// ------------------------------------------------------------------ 11

bool same_docs(const std::vector<AnnotatedDocument>& a, const std::vector<AnnotatedDocument>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto &x = a[i], &y = b[i];
    if (x.id != y.id || x.text != y.text || x.entities.size() != y.entities.size() ||
        x.relations.size() != y.relations.size())
      return false;
    for (std::size_t e = 0; e < x.entities.size(); ++e) {
      const auto &p = x.entities[e], &q = y.entities[e];
      if (p.id != q.id || p.type != q.type || p.start != q.start || p.end != q.end ||
          p.surface != q.surface)
        return false;
    }
    for (std::size_t r = 0; r < x.relations.size(); ++r) {
      const auto &p = x.relations[r], &q = y.relations[r];
      if (p.id != q.id || p.type != q.type || p.trigger_id != q.trigger_id ||
          p.attribute_id != q.attribute_id)
        return false;
    }
  }
  return true;
}

void criterion_round_trips() {
  auto prof = profile("inst_A");
  prof.nested_rate = 0.3;
  auto docs = generate_corpus(prof, 100, 11);
  fs::path dir = fs::temp_directory_path() / ("softmrc_accept_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  save_corpus(docs, dir / "corpus");
  auto loaded = load_corpus(dir / "corpus");
  bool standoff_ok = same_docs(docs, loaded);
  for (const auto& d : docs)
    standoff_ok = standoff_ok && write_ann(parse_standoff(d.id, d.text, write_ann(d))) == write_ann(d);

  RunConfig rc = load_run_config("desk.cfg");
  auto setup = setup_from(rc);
  StrategyConfig sc{StrategyKind::kSoftPromptUnfrozen, setup.prompt_len};
  auto vocab = build_vocabulary(docs, setup.templates);
  ModelBundle a(setup.model, setup.schema, vocab, sc, setup.templates);
  ModelConfig other = setup.model;
  other.seed += 99;
  ModelBundle b(other, setup.schema, vocab, sc, setup.templates);
  save_checkpoint(a.store(), dir / "a.ckpt");
  load_checkpoint(b.store(), dir / "a.ckpt");
  bool ckpt_ok = a.store().names() == b.store().names();
  std::size_t scalars = 0;
  for (const auto& name : a.store().names()) {
    const auto& x = a.store().tensor(name);
    const auto& y = b.store().tensor(name);
    ckpt_ok = ckpt_ok && x.shape() == y.shape() &&
              std::memcmp(x.data().data(), y.data().data(), x.numel() * sizeof(double)) == 0;
    scalars += x.numel();
  }
  save_checkpoint(b.store(), dir / "b.ckpt");
  auto bytes = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  ckpt_ok = ckpt_ok && bytes(dir / "a.ckpt") == bytes(dir / "b.ckpt");
  fs::remove_all(dir);
  report(11, standoff_ok && ckpt_ok,
         std::string("standoff write/parse on 100 docs: ") + (standoff_ok ? "identical" : "DIFFERS") +
             "; checkpoint save/load over " + std::to_string(scalars) + " scalars: " +
             (ckpt_ok ? "bitwise identical" : "DIFFERS"));
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> want;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) {
      std::istringstream in(argv[++i]);
      std::string part;
      while (std::getline(in, part, ',')) want.insert(std::stoi(part));
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N[,M...]]\n", argv[0]);
      return 2;
    }
  }
  if (want.empty())
    for (int i = 1; i <= 11; ++i) want.insert(i);
  auto has = [&](int i) { return want.count(i) > 0; };

  try {
    if (has(1)) criterion_gradients();
    if (has(2)) criterion_freeze();
    if (has(3)) criterion_decode_oracle();
    if (has(4)) criterion_scorer_oracle();
    if (has(5)) criterion_memorization();
    if (has(6) || has(7) || has(10)) criteria_desk(has(6), has(7), has(10));
    if (has(8)) criterion_few_shot();
    if (has(9)) criterion_prompt_length();
    if (has(11)) criterion_round_trips();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }
  bool all = std::all_of(g_lines.begin(), g_lines.end(), [](const Line& l) { return l.pass; });
  std::printf("%zu/%zu criteria passed\n",
              static_cast<std::size_t>(std::count_if(g_lines.begin(), g_lines.end(),
                                                     [](const Line& l) { return l.pass; })),
              g_lines.size());
  return all ? 0 : 1;
}
