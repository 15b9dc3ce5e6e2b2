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

// Strict micro-averaged scoring and experiment report tables.

#ifndef SOFTMRC_EVAL_H_
#define SOFTMRC_EVAL_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "softmrc/corpus.h"

namespace softmrc {

struct PrfCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  // 0/0 is defined as 0 for all three.
  double precision() const;
  double recall() const;
  double f1() const;
  PrfCounts& operator+=(const PrfCounts& o);
  bool operator==(const PrfCounts&) const = default;
};

struct EvalReport {
  std::map<std::string, PrfCounts> per_type;
  PrfCounts micro;
  std::size_t unmatched_gold() const { return micro.fn; }
  std::size_t unmatched_pred() const { return micro.fp; }
};

enum class MatchMode {
  kStrict,   // identical type and character offsets
  kRelaxed,  // identical type, overlapping offsets
};

// Documents pair up by id; a document missing on one side counts all of the
// other side's items as unmatched. Matching is one-to-one.
EvalReport strict_concept_f1(const std::vector<AnnotatedDocument>& gold,
                             const std::vector<AnnotatedDocument>& pred,
                             MatchMode mode = MatchMode::kStrict);

// A predicted relation matches when an unmatched gold relation has the same
// type and both arguments match in type and offsets.
EvalReport end_to_end_relation_f1(const std::vector<AnnotatedDocument>& gold,
                                  const std::vector<AnnotatedDocument>& pred,
                                  MatchMode mode = MatchMode::kStrict);

// One measured value of an experiment.
struct ResultCell {
  std::string strategy;
  std::string model_size;
  std::uint64_t seed = 0;
  std::string task;    // "concept" or "relation"
  std::string metric;  // "precision", "recall" or "f1"
  std::string column;  // k, m or test set depending on the layout; empty for grids
  double value = 0.0;
};

enum class ReportLayout { kStrategyGrid, kFewShotCurve, kTransferMatrix, kPromptLength };

std::string to_string(ReportLayout layout);

struct ExperimentReport {
  std::string table;  // UTF-8 TSV, medians over seeds
  std::string jsonl;  // one record per cell
};

// Deterministic: the same cells give byte-identical output. Few-shot curves
// must cover exactly k in {5,10,20,50,100} and prompt-length tables exactly
// m in {8,16,32,64,128}; anything else throws std::invalid_argument.
ExperimentReport emit_experiment_report(const std::vector<ResultCell>& cells, ReportLayout layout);

double median(std::vector<double> values);

}  // namespace softmrc

#endif  // SOFTMRC_EVAL_H_
