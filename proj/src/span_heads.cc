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

#include "softmrc/span_heads.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace softmrc {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

SpanLogits SpanLogits::from_vars(const SpanLogitVars& v) {
  return {v.start.value().data(), v.end.value().data(), v.match.value().data()};
}

SpanHeads::SpanHeads(const SpanHeadConfig& config, ParameterStore& store, std::uint64_t seed)
    : config_(config) {
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.model_dim, h = config_.match_hidden;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  store.add("head.start.w", normal_tensor({d}, s, rng));
  store.add("head.start.b", Tensor({1}, 0.0));
  store.add("head.end.w", normal_tensor({d}, s, rng));
  store.add("head.end.b", Tensor({1}, 0.0));
  if (config_.scorer == MatchScorer::kTanhMlp) {
    store.add("head.match.w_start", xavier_tensor(d, h, rng));
    store.add("head.match.w_end", xavier_tensor(d, h, rng));
    store.add("head.match.c", Tensor({h}, 0.0));
    store.add("head.match.v", normal_tensor({h}, 1.0 / std::sqrt(static_cast<double>(h)), rng));
  } else {
    store.add("head.match.u", normal_tensor({d, d}, 1.0 / static_cast<double>(d), rng));
    store.add("head.match.b", Tensor({1}, 0.0));
  }
}

SpanLogitVars SpanHeads::score_spans(const ParameterStore& store, const Var& hidden) const {
  if (hidden.value().rank() != 2 || hidden.cols() != config_.model_dim)
    throw ShapeError("span heads expect n x " + std::to_string(config_.model_dim) +
                     " hidden states, got " + shape_string(hidden.shape()));
  const std::size_t n = hidden.rows();
  auto bias_vec = [&](const std::string& name) {
    // Broadcast a {1} bias to {n}.
    Var b = store.var(name);
    Var ones = Var::constant(Tensor({n, 1}, 1.0));
    return ops::matmul(ones, b);
  };
  SpanLogitVars out;
  out.start = ops::add(ops::matmul(hidden, store.var("head.start.w")), bias_vec("head.start.b"));
  out.end = ops::add(ops::matmul(hidden, store.var("head.end.w")), bias_vec("head.end.b"));
  if (config_.scorer == MatchScorer::kTanhMlp) {
    Var a = ops::matmul(hidden, store.var("head.match.w_start"));
    Var b = ops::matmul(hidden, store.var("head.match.w_end"));
    out.match = ops::pair_tanh_scores(a, b, store.var("head.match.c"), store.var("head.match.v"));
  } else {
    Var hu = ops::matmul(hidden, store.var("head.match.u"));
    Var bil = ops::matmul_nt(hu, hidden);
    Var ones = Var::constant(Tensor({n * n, 1}, 1.0));
    Var bias = ops::reshape(ops::matmul(ones, store.var("head.match.b")), {n, n});
    out.match = ops::mask_lower_triangle(ops::add(bil, bias));
  }
  return out;
}

Var span_loss(const SpanLogitVars& logits, const std::vector<TokenSpan>& gold,
              const SpanLossWeights& w) {
  if (w.start < 0 || w.end < 0 || w.match < 0 || (w.start == 0 && w.end == 0 && w.match == 0))
    throw std::invalid_argument("span loss weights must be non-negative and not all zero");
  const std::size_t n = logits.start.numel();
  std::vector<double> ts(n, 0.0), te(n, 0.0), tm(n * n, 0.0);
  std::vector<double> ones(n, 1.0), upper(n * n, 0.0);
  for (const auto& g : gold) {
    if (g.start > g.end || g.end >= n)
      throw std::out_of_range("gold span [" + std::to_string(g.start) + "," +
                              std::to_string(g.end) + "] outside " + std::to_string(n) +
                              " positions");
    ts[g.start] = 1.0;
    te[g.end] = 1.0;
    tm[g.start * n + g.end] = 1.0;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) upper[i * n + j] = 1.0;

  Var total;
  auto accumulate = [&](double weight, Var term) {
    if (weight == 0.0) return;
    term = ops::scale(term, weight);
    total = total.defined() ? ops::add(total, term) : term;
  };
  accumulate(w.start, ops::bce_with_logits(logits.start, ts, ones));
  accumulate(w.end, ops::bce_with_logits(logits.end, te, ones));
  accumulate(w.match, ops::bce_with_logits(logits.match, tm, upper));
  return total;
}

std::vector<SpanPrediction> decode_spans(const SpanLogits& logits, const DecodeOptions& opt,
                                         const std::vector<bool>& mask) {
  const std::size_t n = logits.size();
  auto masked = [&](std::size_t i) { return i < mask.size() && mask[i]; };
  std::vector<std::size_t> starts, ends;
  for (std::size_t i = 0; i < n; ++i) {
    if (masked(i)) continue;
    if (sigmoid(logits.start[i]) >= opt.threshold) starts.push_back(i);
    if (sigmoid(logits.end[i]) >= opt.threshold) ends.push_back(i);
  }
  std::vector<SpanPrediction> out;
  for (std::size_t i : starts) {
    for (std::size_t j : ends) {
      if (j < i || j - i >= opt.max_span_len) continue;
      double pm = sigmoid(logits.match_at(i, j));
      if (pm < opt.threshold) continue;
      double score = std::cbrt(sigmoid(logits.start[i]) * sigmoid(logits.end[j]) * pm);
      out.push_back({i, j, score});
    }
  }
  std::sort(out.begin(), out.end(), [](const SpanPrediction& a, const SpanPrediction& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.start != b.start) return a.start < b.start;
    return a.end < b.end;
  });
  return out;
}

}  // namespace softmrc
