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

// softmrc command-line entry point.
//
// Exit codes: 0 success, 1 internal error, 2 usage or configuration error,
// 3 data error, 4 a check failed.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "softmrc/config.h"
#include "softmrc/corpus.h"
#include "softmrc/eval.h"
#include "softmrc/experiments.h"
#include "softmrc/pipeline.h"

namespace fs = std::filesystem;
using namespace softmrc;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitCheckFailed = 4;

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string schema;
  std::string templates;
  std::string strategy;
  std::string strategies;
  std::string seeds;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("-c,--config", o.config_file, "key = value configuration file");
  app->add_option("--set", o.overrides, "override one configuration key (key=value)");
  app->add_option("--schema", o.schema, "relation schema file");
  app->add_option("--templates", o.templates, "hard-prompt template file");
  app->add_option("--strategy", o.strategy, "finetune | hard | soft_unfrozen | soft_frozen");
  app->add_option("--strategies", o.strategies, "comma-separated strategy list");
  app->add_option("--seeds", o.seeds, "comma-separated seed list");
  app->add_option("--seed", o.seed, "model and training seed");
  app->add_option("-o,--out", o.out, "output directory");
}

// Defaults, then the file, then --set, then dedicated flags.
RunConfig resolve(const CommonOptions& o) {
  KeyValueConfig kv;
  if (!o.config_file.empty()) kv = KeyValueConfig::load(o.config_file);
  kv.apply_overrides(o.overrides);
  if (!o.schema.empty()) kv.set("schema", o.schema);
  if (!o.templates.empty()) kv.set("templates", o.templates);
  if (!o.strategy.empty()) kv.set("strategy", o.strategy);
  if (!o.strategies.empty()) kv.set("strategies", o.strategies);
  if (!o.seeds.empty()) kv.set("seeds", o.seeds);
  if (o.seed) {
    kv.set("model.seed", std::to_string(*o.seed));
    kv.set("train.seed", std::to_string(*o.seed));
  }
  if (!o.out.empty()) kv.set("out_dir", o.out);
  return RunConfig::from(kv);
}

RelationSchema load_schema(const RunConfig& rc) {
  if (rc.schema_path.empty()) throw ConfigError("no schema given (--schema or schema = ...)");
  return RelationSchema::load(rc.schema_path);
}

TemplateSet load_templates(const RunConfig& rc) {
  if (rc.templates_path.empty()) return {};
  return TemplateSet::load(rc.templates_path);
}

std::vector<AnnotatedDocument> load_docs(const std::string& dir, const char* what) {
  if (dir.empty()) throw ConfigError(std::string("missing ") + what + " corpus directory");
  if (!fs::is_directory(dir)) throw DataError(std::string(what) + " corpus not found: " + dir);
  auto docs = load_corpus(dir);
  if (docs.empty()) throw DataError(std::string(what) + " corpus is empty: " + dir);
  return docs;
}

void write_file(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw DataError("cannot write " + p.string());
  os << s;
}

std::string require_out(const RunConfig& rc) {
  if (rc.out_dir.empty()) throw ConfigError("no output directory (--out or out_dir = ...)");
  return rc.out_dir;
}

ordered_json prf_json(const PrfCounts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn},
          {"precision", c.precision()}, {"recall", c.recall()}, {"f1", c.f1()}};
}

ExperimentSetup setup_from(const RunConfig& rc, const RelationSchema& schema) {
  ExperimentSetup s;
  s.model = rc.model;
  s.train = rc.train;
  s.schema = schema;
  s.templates = load_templates(rc);
  s.prompt_len = rc.strategy.prompt_len;
  s.relations = rc.train.relations;
  return s;
}

OutcomeLog outcome_logger() {
  return [](const RunOutcome& o, const std::string& column) {
    std::cerr << o.strategy << " seed " << o.seed << (column.empty() ? "" : " @ " + column)
              << ": best epoch " << o.training.best_epoch;
    for (const auto& [name, r] : o.concepts) std::cerr << " | " << name << " concept F1 " << r.micro.f1();
    for (const auto& [name, r] : o.relations) std::cerr << " | " << name << " relation F1 " << r.micro.f1();
    std::cerr << "\n";
  };
}

void emit(const std::vector<ResultCell>& cells, ReportLayout layout, const RunConfig& rc,
          const std::string& stem) {
  auto report = emit_experiment_report(cells, layout);
  const fs::path out = require_out(rc);
  write_file(out / (stem + ".tsv"), report.table);
  write_file(out / (stem + ".jsonl"), report.jsonl);
  write_file(out / "run.cfg", rc.to_config().serialize());
  std::cout << report.table;
}

// ---------------------------------------------------------------- commands

int cmd_gen_data(const std::string& profile_path, std::size_t n_docs, std::size_t n_test,
                 std::uint64_t seed, const std::string& out, bool force) {
  if (n_docs == 0) throw ConfigError("--n-docs must be at least 1");
  if (out.empty()) throw ConfigError("--out is required");
  if (fs::exists(out) && !fs::is_empty(out) && !force)
    throw ConfigError("output directory " + out + " is not empty (use --force)");
  auto profile = CorpusProfile::load(profile_path);
  if (force && fs::exists(out)) fs::remove_all(out);
  auto train_docs = generate_corpus(profile, n_docs, seed);
  save_corpus(train_docs, fs::path(out) / "train");
  std::cerr << "wrote " << train_docs.size() << " training documents to " << out << "/train\n";
  if (n_test > 0) {
    auto test_docs = generate_corpus(profile, n_test, seed + 1000003);
    save_corpus(test_docs, fs::path(out) / "test");
    std::cerr << "wrote " << test_docs.size() << " test documents to " << out << "/test\n";
  }
  return 0;
}

int cmd_train(const CommonOptions& o, const std::string& train_dir, const std::string& test_dir,
              bool verbose) {
  RunConfig rc = resolve(o);
  auto schema = load_schema(rc);
  auto docs = load_docs(train_dir, "training");
  std::vector<AnnotatedDocument> test;
  if (!test_dir.empty()) test = load_docs(test_dir, "test");
  const fs::path out = require_out(rc);
  auto templates = load_templates(rc);

  ModelBundle bundle(rc.model, schema, build_vocabulary(docs, templates), rc.strategy, templates);
  auto report = apply_strategy(bundle, rc.strategy);
  std::fprintf(stderr, "strategy %s: %zu of %zu parameters trainable (%.2f%%)\n",
               to_string(rc.strategy.kind).c_str(), report.trainable, report.total,
               100.0 * report.fraction());
  TrainConfig tc = rc.train;
  tc.verbose = verbose;
  std::string history;
  auto result = train(bundle, docs, tc, [&](const EpochRecord& r) {
    ordered_json j{{"epoch", r.epoch}, {"train_loss", r.train_loss},
                   {"dev_concept_f1", r.dev_concept_f1}, {"dev_relation_f1", r.dev_relation_f1},
                   {"dev_score", r.dev_score}};
    history += j.dump() + "\n";
  });
  save_bundle(bundle, out / "model");
  write_file(out / "run.cfg", rc.to_config().serialize());
  write_file(out / "history.jsonl", history);

  ordered_json m{{"strategy", to_string(rc.strategy.kind)},
                 {"model_seed", rc.model.seed},
                 {"train_seed", rc.train.seed},
                 {"trainable_params", report.trainable},
                 {"total_params", report.total},
                 {"trainable_fraction", report.fraction()},
                 {"epochs_run", result.history.size()},
                 {"best_epoch", result.best_epoch},
                 {"best_dev_score", result.best_dev_score},
                 {"dropped_relations", result.stats.dropped_relations},
                 {"dropped_entities", result.stats.dropped_entities},
                 {"bio_dropped_spans", result.stats.bio_dropped_spans}};
  if (!test.empty()) {
    auto pred = extract_all(bundle, test, tc.relations);
    m["test_concept"] = prf_json(strict_concept_f1(test, pred).micro);
    if (tc.relations) m["test_relation"] = prf_json(end_to_end_relation_f1(test, pred).micro);
  }
  write_file(out / "metrics.json", m.dump(2) + "\n");
  std::cout << m.dump() << "\n";
  return 0;
}

int cmd_eval(const std::string& model_dir, const std::string& test_dir, bool relations,
             const std::string& out_file) {
  auto bundle = load_bundle(fs::path(model_dir) / "model");
  auto test = load_docs(test_dir, "test");
  auto pred = extract_all(*bundle, test, relations);
  auto concepts = strict_concept_f1(test, pred);
  ordered_json m{{"documents", test.size()}, {"concept", prf_json(concepts.micro)}};
  ordered_json per_type = ordered_json::object();
  for (const auto& [t, c] : concepts.per_type) per_type[t] = prf_json(c);
  m["concept_per_type"] = per_type;
  if (relations) {
    auto rel = end_to_end_relation_f1(test, pred);
    m["relation"] = prf_json(rel.micro);
  }
  if (!out_file.empty()) write_file(out_file, m.dump() + "\n");
  std::cout << m.dump(2) << "\n";
  return 0;
}

int cmd_extract(const std::string& model_dir, const std::string& input, const std::string& output,
                bool relations) {
  auto bundle = load_bundle(fs::path(model_dir) / "model");
  auto read = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw DataError("cannot read " + p.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  if (fs::is_directory(input)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(input))
      if (e.path().extension() == ".txt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    fs::create_directories(output);
    for (const auto& f : files) {
      auto doc = extract(*bundle, f.stem().string(), read(f), relations);
      write_file(fs::path(output) / (f.stem().string() + ".ann"), write_ann(doc));
    }
    std::cerr << "extracted " << files.size() << " documents into " << output << "\n";
  } else {
    if (!fs::exists(input)) throw DataError("input not found: " + input);
    fs::path in(input);
    auto doc = extract(*bundle, in.stem().string(), read(in), relations);
    write_file(output, write_ann(doc));
  }
  return 0;
}

int cmd_gradcheck(const GradcheckOptions& opts, bool verbose) {
  auto t0 = std::chrono::steady_clock::now();
  auto r = run_gradcheck(opts, [&](const std::string& line) {
    if (verbose) std::cerr << line << "\n";
  });
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("gradcheck: %zu configurations, %zu over tolerance %.1e, max relative error %.3e (%s), %.1fs\n",
              r.configs, r.failures, opts.tolerance, r.max_error, r.worst.c_str(), secs);
  return r.passed() ? 0 : kExitCheckFailed;
}

int cmd_fewshot(const CommonOptions& o, const std::string& pool_dir, const std::string& test_dir,
                const std::vector<std::size_t>& ks) {
  RunConfig rc = resolve(o);
  auto setup = setup_from(rc, load_schema(rc));
  require_out(rc);
  auto pool = load_docs(pool_dir, "pool");
  auto test = load_docs(test_dir, "test");
  auto cells = run_few_shot(setup, rc.strategies, ks, rc.seeds, pool, test, outcome_logger());
  emit(cells, ReportLayout::kFewShotCurve, rc, "fewshot");
  return 0;
}

int cmd_ablate(const CommonOptions& o, const std::string& train_dir, const std::string& test_dir,
               const std::vector<std::size_t>& lengths) {
  RunConfig rc = resolve(o);
  if (o.strategies.empty() && !rc.strategies.empty()) {
    std::vector<StrategyKind> soft;
    for (auto k : rc.strategies)
      if (uses_soft_prompts(k)) soft.push_back(k);
    rc.strategies = soft;
  }
  auto setup = setup_from(rc, load_schema(rc));
  require_out(rc);
  auto docs = load_docs(train_dir, "training");
  auto test = load_docs(test_dir, "test");
  auto cells = run_prompt_length(setup, rc.strategies, lengths, rc.seeds, docs, test,
                                 outcome_logger());
  emit(cells, ReportLayout::kPromptLength, rc, "ablation");
  return 0;
}

int cmd_grid(const CommonOptions& o, const std::string& train_dir, const std::string& test_dir) {
  RunConfig rc = resolve(o);
  auto setup = setup_from(rc, load_schema(rc));
  require_out(rc);
  auto docs = load_docs(train_dir, "training");
  auto test = load_docs(test_dir, "test");
  auto cells = run_strategy_grid(setup, rc.strategies, rc.seeds, docs, test, outcome_logger());
  emit(cells, ReportLayout::kStrategyGrid, rc, "grid");
  return 0;
}

int cmd_xfer(const CommonOptions& o, const std::string& train_profile,
             const std::string& test_profile, std::size_t n_train, std::size_t n_test,
             std::uint64_t data_seed) {
  RunConfig rc = resolve(o);
  auto a = CorpusProfile::load(train_profile);
  auto b = CorpusProfile::load(test_profile);
  if (a.schema.serialize() != b.schema.serialize())
    throw ConfigError("profiles " + a.name + " and " + b.name + " use different schemas");
  if (rc.schema_path.empty()) rc.schema_path = (fs::path(train_profile).parent_path() /
                                                (a.schema.name + ".schema")).string();
  auto setup = setup_from(rc, a.schema);
  require_out(rc);
  auto train_docs = generate_corpus(a, n_train, data_seed);
  NamedDocs tests = {{a.name + "-test", generate_corpus(a, n_test, data_seed + 1000003)},
                     {b.name + "-test", generate_corpus(b, n_test, data_seed + 1000003)}};
  auto cells = run_transfer(setup, rc.strategies, rc.seeds, train_docs, tests, outcome_logger());
  emit(cells, ReportLayout::kTransferMatrix, rc, "transfer");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"softmrc: soft-prompt MRC for clinical concept and relation extraction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "softmrc 0.1.0");

  std::string profile, out, train_dir, test_dir, model_dir, input, output, out_file;
  std::size_t n_docs = 303, n_test = 202;
  std::uint64_t seed = 1, data_seed = 1;
  bool force = false, verbose = false, no_relations = false;
  CommonOptions common;
  std::vector<std::size_t> ks = kFewShotGrid, lengths = kPromptLengthGrid;
  std::string train_profile, test_profile;
  GradcheckOptions gc;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic standoff corpus");
  gen->add_option("--profile", profile, "corpus profile")->required();
  gen->add_option("--n-docs", n_docs, "training documents")->capture_default_str();
  gen->add_option("--n-test", n_test, "test documents (0 skips the test split)")->capture_default_str();
  gen->add_option("--seed", seed, "generator seed")->capture_default_str();
  gen->add_option("-o,--out", out, "output directory")->required();
  gen->add_flag("--force", force, "replace a non-empty output directory");

  auto* tr = app.add_subcommand("train", "train one model");
  add_common(tr, common);
  tr->add_option("--train", train_dir, "training corpus directory")->required();
  tr->add_option("--test", test_dir, "optional test corpus scored after training");
  tr->add_flag("-v,--verbose", verbose, "per-epoch progress");

  auto* ev = app.add_subcommand("eval", "score a trained model on a corpus");
  ev->add_option("--model", model_dir, "run directory written by train")->required();
  ev->add_option("--test", test_dir, "test corpus directory")->required();
  ev->add_option("--metrics-out", out_file, "also write the metrics record here");
  ev->add_flag("--no-relations", no_relations, "score concepts only");

  auto* ex = app.add_subcommand("extract", "write predicted annotations");
  ex->add_option("--model", model_dir, "run directory written by train")->required();
  ex->add_option("--input", input, ".txt file or directory of .txt files")->required();
  ex->add_option("--output", output, ".ann file or output directory")->required();
  ex->add_flag("--no-relations", no_relations, "concepts only");

  auto* gcmd = app.add_subcommand("gradcheck", "compare analytic and numeric gradients");
  gcmd->add_option("--configs", gc.configs, "random configurations")->capture_default_str();
  gcmd->add_option("--seed", gc.seed, "configuration seed")->capture_default_str();
  gcmd->add_option("--tolerance", gc.tolerance, "max relative error")->capture_default_str();
  gcmd->add_option("--eps", gc.eps, "finite-difference step")->capture_default_str();
  gcmd->add_flag("-v,--verbose", verbose, "one line per configuration");

  auto* fs_cmd = app.add_subcommand("fewshot", "few-shot learning curves");
  add_common(fs_cmd, common);
  fs_cmd->add_option("--pool", train_dir, "corpus the samples are drawn from")->required();
  fs_cmd->add_option("--test", test_dir, "test corpus directory")->required();
  fs_cmd->add_option("--ks", ks, "sample sizes")->delimiter(',');

  auto* ab = app.add_subcommand("ablate", "prompt-length sweep");
  add_common(ab, common);
  ab->add_option("--train", train_dir, "training corpus directory")->required();
  ab->add_option("--test", test_dir, "test corpus directory")->required();
  ab->add_option("--lengths", lengths, "prompt lengths")->delimiter(',');

  auto* gr = app.add_subcommand("grid", "every strategy on one split");
  add_common(gr, common);
  gr->add_option("--train", train_dir, "training corpus directory")->required();
  gr->add_option("--test", test_dir, "test corpus directory")->required();

  auto* xf = app.add_subcommand("xfer", "train on one profile, test on two");
  add_common(xf, common);
  xf->add_option("--train-profile", train_profile, "profile of the training institution")->required();
  xf->add_option("--test-profile", test_profile, "profile of the other institution")->required();
  xf->add_option("--n-train", n_docs, "training documents")->capture_default_str();
  xf->add_option("--n-test", n_test, "test documents per profile")->capture_default_str();
  xf->add_option("--data-seed", data_seed, "generator seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(profile, n_docs, n_test, seed, out, force);
    if (*tr) return cmd_train(common, train_dir, test_dir, verbose);
    if (*ev) return cmd_eval(model_dir, test_dir, !no_relations, out_file);
    if (*ex) return cmd_extract(model_dir, input, output, !no_relations);
    if (*gcmd) return cmd_gradcheck(gc, verbose);
    if (*fs_cmd) return cmd_fewshot(common, train_dir, test_dir, ks);
    if (*ab) return cmd_ablate(common, train_dir, test_dir, lengths);
    if (*gr) return cmd_grid(common, train_dir, test_dir);
    if (*xf) return cmd_xfer(common, train_profile, test_profile, n_docs, n_test, data_seed);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
