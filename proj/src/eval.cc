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

#include "softmrc/eval.h"

#include <algorithm>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <tuple>

#include <nlohmann/json.hpp>

namespace softmrc {

double PrfCounts::precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
double PrfCounts::recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
double PrfCounts::f1() const {
  double p = precision(), r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

PrfCounts& PrfCounts::operator+=(const PrfCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

namespace {

struct Mention {
  std::string type;
  std::size_t start, end;
};

struct RelMention {
  std::string type;
  Mention trigger, attribute;
};

bool mention_match(const Mention& a, const Mention& b, MatchMode mode) {
  if (a.type != b.type) return false;
  if (mode == MatchMode::kStrict) return a.start == b.start && a.end == b.end;
  return a.start < b.end && b.start < a.end;
}

bool rel_match(const RelMention& a, const RelMention& b, MatchMode mode) {
  return a.type == b.type && mention_match(a.trigger, b.trigger, mode) &&
         mention_match(a.attribute, b.attribute, mode);
}

std::vector<Mention> mentions(const AnnotatedDocument& d) {
  std::vector<Mention> out;
  for (const auto& e : d.entities) out.push_back({e.type, e.start, e.end});
  return out;
}

std::vector<RelMention> rel_mentions(const AnnotatedDocument& d) {
  std::vector<RelMention> out;
  for (const auto& r : d.relations) {
    const Entity* t = d.entity(r.trigger_id);
    const Entity* a = d.entity(r.attribute_id);
    if (!t || !a) continue;
    out.push_back({r.type, {t->type, t->start, t->end}, {a->type, a->start, a->end}});
  }
  return out;
}

// Greedy one-to-one matching in document order: each prediction takes the
// first unmatched gold item it matches.
template <typename T, typename Eq>
void score_items(const std::vector<T>& gold, const std::vector<T>& pred, Eq eq, EvalReport& rep) {
  std::vector<bool> used(gold.size(), false);
  for (const auto& p : pred) {
    bool hit = false;
    for (std::size_t g = 0; g < gold.size(); ++g) {
      if (used[g] || !eq(gold[g], p)) continue;
      used[g] = true;
      hit = true;
      break;
    }
    ++(hit ? rep.per_type[p.type].tp : rep.per_type[p.type].fp);
  }
  for (std::size_t g = 0; g < gold.size(); ++g)
    if (!used[g]) ++rep.per_type[gold[g].type].fn;
}

template <typename Extract, typename Eq>
EvalReport score_corpus(const std::vector<AnnotatedDocument>& gold,
                        const std::vector<AnnotatedDocument>& pred, Extract extract, Eq eq) {
  std::map<std::string, const AnnotatedDocument*> g_by_id, p_by_id;
  for (const auto& d : gold) g_by_id[d.id] = &d;
  for (const auto& d : pred) p_by_id[d.id] = &d;
  std::set<std::string> ids;
  for (const auto& [id, d] : g_by_id) ids.insert(id);
  for (const auto& [id, d] : p_by_id) ids.insert(id);
  EvalReport rep;
  using Item = typename decltype(extract(std::declval<const AnnotatedDocument&>()))::value_type;
  for (const auto& id : ids) {
    std::vector<Item> g, p;
    if (auto it = g_by_id.find(id); it != g_by_id.end()) g = extract(*it->second);
    if (auto it = p_by_id.find(id); it != p_by_id.end()) p = extract(*it->second);
    score_items(g, p, eq, rep);
  }
  for (const auto& [type, c] : rep.per_type) rep.micro += c;
  return rep;
}

}  // namespace

EvalReport strict_concept_f1(const std::vector<AnnotatedDocument>& gold,
                             const std::vector<AnnotatedDocument>& pred, MatchMode mode) {
  return score_corpus(gold, pred, mentions,
                      [mode](const Mention& a, const Mention& b) { return mention_match(a, b, mode); });
}

EvalReport end_to_end_relation_f1(const std::vector<AnnotatedDocument>& gold,
                                  const std::vector<AnnotatedDocument>& pred, MatchMode mode) {
  return score_corpus(gold, pred, rel_mentions, [mode](const RelMention& a, const RelMention& b) {
    return rel_match(a, b, mode);
  });
}

std::string to_string(ReportLayout layout) {
  switch (layout) {
    case ReportLayout::kStrategyGrid: return "strategy_grid";
    case ReportLayout::kFewShotCurve: return "fewshot_curve";
    case ReportLayout::kTransferMatrix: return "transfer_matrix";
    case ReportLayout::kPromptLength: return "prompt_length";
  }
  return "unknown";
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// Numeric columns sort numerically, others lexically.
bool column_less(const std::string& a, const std::string& b) {
  auto numeric = [](const std::string& s) {
    return !s.empty() && s.find_first_not_of("0123456789") == std::string::npos;
  };
  if (numeric(a) && numeric(b)) return std::stoull(a) < std::stoull(b);
  return a < b;
}

void require_columns(const std::vector<ResultCell>& cells, const std::set<std::string>& expected,
                     const std::string& what) {
  std::set<std::string> got;
  for (const auto& c : cells) got.insert(c.column);
  if (got != expected) {
    std::string list;
    for (const auto& g : got) list += (list.empty() ? "" : ",") + g;
    throw std::invalid_argument(what + " must cover exactly the standard grid, got {" + list + "}");
  }
}

}  // namespace

ExperimentReport emit_experiment_report(const std::vector<ResultCell>& cells, ReportLayout layout) {
  if (layout == ReportLayout::kFewShotCurve)
    require_columns(cells, {"5", "10", "20", "50", "100"}, "few-shot curve");
  if (layout == ReportLayout::kPromptLength)
    require_columns(cells, {"8", "16", "32", "64", "128"}, "prompt-length table");

  // Row key: (model_size, strategy); column key: (task, metric, column).
  using RowKey = std::pair<std::string, std::string>;
  using ColKey = std::tuple<std::string, std::string, std::string>;
  std::map<RowKey, std::map<ColKey, std::vector<double>>> grid;
  std::set<ColKey> columns;
  std::vector<std::string> strategy_order;
  for (const auto& c : cells) {
    if (std::find(strategy_order.begin(), strategy_order.end(), c.strategy) == strategy_order.end())
      strategy_order.push_back(c.strategy);
    ColKey k{c.task, c.metric, c.column};
    grid[{c.model_size, c.strategy}][k].push_back(c.value);
    columns.insert(k);
  }
  std::vector<ColKey> cols(columns.begin(), columns.end());
  std::stable_sort(cols.begin(), cols.end(), [](const ColKey& a, const ColKey& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return column_less(std::get<2>(a), std::get<2>(b));
  });

  ExperimentReport rep;
  rep.table = "# " + to_string(layout) + "\nmodel_size\tstrategy";
  for (const auto& [task, metric, column] : cols) {
    rep.table += "\t" + task + "_" + metric;
    if (!column.empty()) rep.table += "@" + column;
  }
  rep.table += "\n";
  std::vector<RowKey> rows;
  for (const auto& [row, values] : grid) rows.push_back(row);
  std::stable_sort(rows.begin(), rows.end(), [&](const RowKey& a, const RowKey& b) {
    if (a.first != b.first) return a.first < b.first;
    auto pos = [&](const std::string& s) {
      return std::find(strategy_order.begin(), strategy_order.end(), s) - strategy_order.begin();
    };
    return pos(a.second) < pos(b.second);
  });
  for (const auto& row : rows) {
    rep.table += row.first + "\t" + row.second;
    const auto& values = grid.at(row);
    for (const auto& col : cols) {
      auto it = values.find(col);
      rep.table += "\t" + (it == values.end() ? std::string("NA") : fmt(median(it->second)));
    }
    rep.table += "\n";
  }
  for (const auto& c : cells) {
    nlohmann::ordered_json j;
    j["layout"] = to_string(layout);
    j["strategy"] = c.strategy;
    j["size"] = c.model_size;
    j["seed"] = c.seed;
    j["task"] = c.task;
    j["metric"] = c.metric;
    j["column"] = c.column;
    j["value"] = c.value;
    rep.jsonl += j.dump() + "\n";
  }
  return rep;
}

}  // namespace softmrc
