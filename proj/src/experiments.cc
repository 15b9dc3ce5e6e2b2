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

#include "softmrc/experiments.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace softmrc {

GradcheckResult run_gradcheck(const GradcheckOptions& options,
                              const std::function<void(const std::string&)>& log) {
  if (options.max_len == 0 || options.max_dim < 2)
    throw std::invalid_argument("gradcheck needs max_len >= 1 and max_dim >= 2");
  GradcheckResult result;
  for (std::size_t c = 0; c < options.configs; ++c) {
    std::mt19937_64 rng(options.seed * 7919 + c);
    auto pick = [&](std::size_t lo, std::size_t hi) {
      return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    EncoderConfig ec;
    ec.num_layers = pick(1, 2);
    ec.num_heads = pick(1, 2);
    ec.model_dim = ec.num_heads * pick(1, options.max_dim / ec.num_heads);
    ec.ffn_dim = pick(2, 2 * options.max_dim);
    ec.vocab_size = kNumReservedIds + pick(2, 6);
    ec.prompt_len = pick(0, 4);
    ec.max_seq_len = 64;
    ec.position_encoding = pick(0, 3) != 0;
    const bool anchors = pick(0, 1) == 1;
    const std::size_t n = pick(1, options.max_len);

    ParameterStore store;
    Encoder encoder(ec, store, rng(), anchors);
    PromptRegistry registry({"key"}, rng());
    const LayerPromptBank* bank = nullptr;
    if (ec.prompt_len > 0) bank = &registry.get_soft_bank(store, "key", ec);
    // Prompts start near zero; spread them so their gradients are not tiny.
    if (bank)
      for (const auto& name : bank->param_names)
        for (auto& x : store.tensor(name).data())
          x = std::normal_distribution<double>(0.0, 1.0)(rng);
    SpanHeadConfig hc{ec.model_dim, pick(1, options.max_dim),
                      pick(0, 3) == 0 ? MatchScorer::kBiaffine : MatchScorer::kTanhMlp};
    SpanHeads heads(hc, store, rng());

    TokenSequence seq;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t id = anchors && pick(0, 4) == 0 ? pick(kStartAnchorId, kEndAnchorId)
                                                  : pick(0, ec.vocab_size - 1);
      if (!anchors && is_anchor(id)) id = kUnkId;
      seq.ids.push_back(id);
      seq.char_spans.push_back({i, i + 1});
    }
    std::vector<TokenSpan> gold;
    for (std::size_t g = pick(0, 2); g > 0; --g) {
      std::size_t a = pick(0, n - 1), b = pick(a, n - 1);
      gold.push_back({a, b});
    }
    std::uniform_real_distribution<double> wdist(0.1, 2.0);
    SpanLossWeights w{wdist(rng), wdist(rng), wdist(rng)};

    auto loss = [&](const ParameterStore& s) {
      Var h = encoder.encode(s, seq, bank);
      Var region = ops::slice_rows(h, bank ? ec.prompt_len : 0, h.rows());
      return span_loss(heads.score_spans(s, region), gold, w);
    };
    store.zero_grad();
    backward(loss(store));
    std::map<std::string, std::vector<double>> analytic;
    for (const auto& name : store.names()) {
      const Tensor& t = store.tensor(name);
      analytic[name] = t.has_grad() ? t.grad() : std::vector<double>(t.numel(), 0.0);
    }
    store.zero_grad();
    auto numeric = finite_difference_grad(
        [&](const ParameterStore& s) {
          NoGradGuard guard;
          return loss(s).item();
        },
        store, options.eps);

    double worst = 0.0;
    std::string worst_name;
    for (const auto& [name, num] : numeric) {
      double err = max_relative_error(analytic[name], num);
      if (err > worst) {
        worst = err;
        worst_name = name;
      }
    }
    ++result.configs;
    if (worst >= options.tolerance) ++result.failures;
    if (worst > result.max_error) {
      result.max_error = worst;
      result.worst = "config " + std::to_string(c) + " " + worst_name;
    }
    if (log) {
      std::ostringstream os;
      os << "config " << c << " L=" << ec.num_layers << " d=" << ec.model_dim
         << " H=" << ec.num_heads << " m=" << ec.prompt_len << " n=" << n
         << " max_rel_err=" << worst << (worst < options.tolerance ? " ok" : " FAIL");
      log(os.str());
    }
  }
  return result;
}

std::string size_label(const ModelConfig& config) {
  return "L" + std::to_string(config.encoder.num_layers) + "-d" +
         std::to_string(config.encoder.model_dim);
}

RunOutcome run_single(const ExperimentSetup& setup, const StrategyConfig& strategy,
                      std::uint64_t seed, const std::vector<AnnotatedDocument>& train_docs,
                      const NamedDocs& tests) {
  ModelConfig mc = setup.model;
  mc.seed = seed;
  TrainConfig tc = setup.train;
  tc.seed = seed;
  tc.relations = setup.relations;
  Vocabulary vocab = build_vocabulary(train_docs, setup.templates);
  ModelBundle bundle(mc, setup.schema, std::move(vocab), strategy, setup.templates);

  RunOutcome out;
  out.strategy = to_string(strategy.kind);
  out.seed = seed;
  out.trainable_fraction = apply_strategy(bundle, strategy).fraction();
  out.training = train(bundle, train_docs, tc);
  for (const auto& [name, docs] : tests) {
    auto pred = extract_all(bundle, docs, setup.relations);
    out.concepts[name] = strict_concept_f1(docs, pred);
    if (setup.relations) out.relations[name] = end_to_end_relation_f1(docs, pred);
    if (setup.keep_predictions) out.predictions[name] = std::move(pred);
  }
  return out;
}

std::vector<ResultCell> outcome_cells(const RunOutcome& outcome, const std::string& size,
                                      const std::string& column) {
  std::vector<ResultCell> cells;
  auto add = [&](const std::string& task, const std::string& test, const EvalReport& r) {
    const std::string col = column.empty() ? test : column;
    cells.push_back({outcome.strategy, size, outcome.seed, task, "precision", col,
                     r.micro.precision()});
    cells.push_back({outcome.strategy, size, outcome.seed, task, "recall", col, r.micro.recall()});
    cells.push_back({outcome.strategy, size, outcome.seed, task, "f1", col, r.micro.f1()});
  };
  for (const auto& [test, r] : outcome.concepts) add("concept", test, r);
  for (const auto& [test, r] : outcome.relations) add("relation", test, r);
  return cells;
}

namespace {

StrategyConfig strategy_for(const ExperimentSetup& setup, StrategyKind kind) {
  return StrategyConfig{kind, setup.prompt_len};
}

void append(std::vector<ResultCell>& to, const std::vector<ResultCell>& from) {
  to.insert(to.end(), from.begin(), from.end());
}

}  // namespace

std::vector<ResultCell> run_strategy_grid(const ExperimentSetup& setup,
                                          const std::vector<StrategyKind>& strategies,
                                          const std::vector<std::uint64_t>& seeds,
                                          const std::vector<AnnotatedDocument>& train_docs,
                                          const std::vector<AnnotatedDocument>& test_docs,
                                          const OutcomeLog& log) {
  std::vector<ResultCell> cells;
  for (auto kind : strategies)
    for (auto seed : seeds) {
      auto o = run_single(setup, strategy_for(setup, kind), seed, train_docs, {{"test", test_docs}});
      if (log) log(o, "");
      append(cells, outcome_cells(o, size_label(setup.model), ""));
    }
  return cells;
}

std::vector<ResultCell> run_transfer(const ExperimentSetup& setup,
                                     const std::vector<StrategyKind>& strategies,
                                     const std::vector<std::uint64_t>& seeds,
                                     const std::vector<AnnotatedDocument>& train_docs,
                                     const NamedDocs& tests, const OutcomeLog& log) {
  if (tests.empty()) throw std::invalid_argument("transfer needs at least one test set");
  std::vector<ResultCell> cells;
  for (auto kind : strategies)
    for (auto seed : seeds) {
      auto o = run_single(setup, strategy_for(setup, kind), seed, train_docs, tests);
      if (log) log(o, "");
      append(cells, outcome_cells(o, size_label(setup.model), ""));
    }
  return cells;
}

std::vector<ResultCell> run_few_shot(const ExperimentSetup& setup,
                                     const std::vector<StrategyKind>& strategies,
                                     const std::vector<std::size_t>& ks,
                                     const std::vector<std::uint64_t>& seeds,
                                     const std::vector<AnnotatedDocument>& pool,
                                     const std::vector<AnnotatedDocument>& test_docs,
                                     const OutcomeLog& log) {
  std::vector<ResultCell> cells;
  const auto categories = setup.schema.concept_types();
  for (auto kind : strategies)
    for (auto k : ks)
      for (auto seed : seeds) {
        auto sample = sample_few_shot(pool, FewShotSpec{k, seed, categories});
        auto o = run_single(setup, strategy_for(setup, kind), seed, sample, {{"test", test_docs}});
        if (log) log(o, std::to_string(k));
        append(cells, outcome_cells(o, size_label(setup.model), std::to_string(k)));
      }
  return cells;
}

std::vector<ResultCell> run_prompt_length(const ExperimentSetup& setup,
                                          const std::vector<StrategyKind>& strategies,
                                          const std::vector<std::size_t>& lengths,
                                          const std::vector<std::uint64_t>& seeds,
                                          const std::vector<AnnotatedDocument>& train_docs,
                                          const std::vector<AnnotatedDocument>& test_docs,
                                          const OutcomeLog& log) {
  std::vector<ResultCell> cells;
  for (auto kind : strategies) {
    if (!uses_soft_prompts(kind))
      throw std::invalid_argument("prompt-length sweep needs a soft-prompt strategy, got " +
                                  to_string(kind));
    for (auto m : lengths)
      for (auto seed : seeds) {
        ExperimentSetup s = setup;
        s.prompt_len = m;
        s.model.encoder.prompt_len = m;
        auto o = run_single(s, StrategyConfig{kind, m}, seed, train_docs, {{"test", test_docs}});
        if (log) log(o, std::to_string(m));
        append(cells, outcome_cells(o, size_label(setup.model), std::to_string(m)));
      }
  }
  return cells;
}

std::map<std::pair<std::string, std::string>, double> median_by_strategy(
    const std::vector<ResultCell>& cells, const std::string& task, const std::string& metric) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& c : cells)
    if (c.task == task && c.metric == metric) groups[{c.strategy, c.column}].push_back(c.value);
  std::map<std::pair<std::string, std::string>, double> out;
  for (auto& [key, values] : groups) out[key] = median(values);
  return out;
}

}  // namespace softmrc
