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

// Seeded experiment runners shared by the CLI and the acceptance suite:
// randomized gradient checks, the strategy grid, cross-profile transfer,
// few-shot curves and the prompt-length sweep.

#ifndef SOFTMRC_EXPERIMENTS_H_
#define SOFTMRC_EXPERIMENTS_H_

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "softmrc/eval.h"
#include "softmrc/pipeline.h"

namespace softmrc {

struct GradcheckOptions {
  std::size_t configs = 100;
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
  double eps = 1e-4;
  std::size_t max_len = 8;
  std::size_t max_dim = 16;
};

struct GradcheckResult {
  std::size_t configs = 0;
  std::size_t failures = 0;
  double max_error = 0.0;
  std::string worst;  // "config <i> <parameter>"
  bool passed() const { return failures == 0; }
};

// Random encoder + span-head configurations, each compared against central
// differences over every parameter scalar.
GradcheckResult run_gradcheck(const GradcheckOptions& options,
                              const std::function<void(const std::string&)>& log = {});

struct ExperimentSetup {
  ModelConfig model;
  TrainConfig train;
  RelationSchema schema;
  TemplateSet templates;
  std::size_t prompt_len = 32;
  // Relation extraction is trained and scored only when set.
  bool relations = true;
  // Keep per-test-set predictions in the outcome.
  bool keep_predictions = false;
};

// "L<layers>-d<dim>"
std::string size_label(const ModelConfig& config);

struct RunOutcome {
  std::string strategy;
  std::uint64_t seed = 0;
  TrainResult training;
  double trainable_fraction = 0.0;
  std::map<std::string, EvalReport> concepts;  // by test-set name
  std::map<std::string, EvalReport> relations; // empty when relations are off
  std::map<std::string, std::vector<AnnotatedDocument>> predictions;
};

using NamedDocs = std::vector<std::pair<std::string, std::vector<AnnotatedDocument>>>;

// Trains one bundle (model and training seeds set to `seed`) and scores it on
// every named test set.
RunOutcome run_single(const ExperimentSetup& setup, const StrategyConfig& strategy,
                      std::uint64_t seed, const std::vector<AnnotatedDocument>& train_docs,
                      const NamedDocs& tests);

// Precision, recall and F1 cells for one outcome; `column` of every cell is
// the given value, or the test-set name when `column` is empty.
std::vector<ResultCell> outcome_cells(const RunOutcome& outcome, const std::string& size,
                                      const std::string& column);

using OutcomeLog = std::function<void(const RunOutcome&, const std::string& column)>;

// Every strategy × seed on one train/test split.
std::vector<ResultCell> run_strategy_grid(const ExperimentSetup& setup,
                                          const std::vector<StrategyKind>& strategies,
                                          const std::vector<std::uint64_t>& seeds,
                                          const std::vector<AnnotatedDocument>& train_docs,
                                          const std::vector<AnnotatedDocument>& test_docs,
                                          const OutcomeLog& log = {});

// Trains on one profile's training split and scores on every named test set.
std::vector<ResultCell> run_transfer(const ExperimentSetup& setup,
                                     const std::vector<StrategyKind>& strategies,
                                     const std::vector<std::uint64_t>& seeds,
                                     const std::vector<AnnotatedDocument>& train_docs,
                                     const NamedDocs& tests, const OutcomeLog& log = {});

// For each k and seed, trains on sample_few_shot(pool, {k, seed, concept types}).
std::vector<ResultCell> run_few_shot(const ExperimentSetup& setup,
                                     const std::vector<StrategyKind>& strategies,
                                     const std::vector<std::size_t>& ks,
                                     const std::vector<std::uint64_t>& seeds,
                                     const std::vector<AnnotatedDocument>& pool,
                                     const std::vector<AnnotatedDocument>& test_docs,
                                     const OutcomeLog& log = {});

inline const std::vector<std::size_t> kPromptLengthGrid = {8, 16, 32, 64, 128};

// Soft-prompt strategies only; one cell group per prompt length.
std::vector<ResultCell> run_prompt_length(const ExperimentSetup& setup,
                                          const std::vector<StrategyKind>& strategies,
                                          const std::vector<std::size_t>& lengths,
                                          const std::vector<std::uint64_t>& seeds,
                                          const std::vector<AnnotatedDocument>& train_docs,
                                          const std::vector<AnnotatedDocument>& test_docs,
                                          const OutcomeLog& log = {});

// Median over seeds of one metric, keyed by (strategy, column).
std::map<std::pair<std::string, std::string>, double> median_by_strategy(
    const std::vector<ResultCell>& cells, const std::string& task, const std::string& metric);

}  // namespace softmrc

#endif  // SOFTMRC_EXPERIMENTS_H_
