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

#include "softmrc/encoder.h"

#include <cmath>
#include <random>
#include <stdexcept>

namespace softmrc {

namespace {

std::string layer_prefix(std::size_t l) { return "encoder.layer" + std::to_string(l) + "."; }

}  // namespace

void validate(const EncoderConfig& c) {
  auto fail = [](const std::string& what) { throw std::invalid_argument("encoder config: " + what); };
  if (c.num_layers == 0) fail("num_layers must be positive");
  if (c.model_dim == 0) fail("model_dim must be positive");
  if (c.num_heads == 0 || c.model_dim % c.num_heads != 0)
    fail("num_heads must divide model_dim (" + std::to_string(c.model_dim) + " % " +
         std::to_string(c.num_heads) + ")");
  if (c.ffn_dim == 0) fail("ffn_dim must be positive");
  if (c.vocab_size <= kNumReservedIds) fail("vocab_size must exceed the reserved ids");
  if (c.max_seq_len == 0) fail("max_seq_len must be positive");
  if (c.prompt_len >= c.max_seq_len) fail("prompt_len must be below max_seq_len");
}

Encoder::Encoder(const EncoderConfig& config, ParameterStore& store, std::uint64_t seed,
                 bool with_anchors)
    : config_(config), with_anchors_(with_anchors) {
  validate(config_);
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.model_dim, f = config_.ffn_dim;
  store.add("embed.token", normal_tensor({config_.vocab_size, d}, 1.0, rng));
  if (with_anchors_) store.add("embed.anchor", normal_tensor({2, d}, 1.0, rng));
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = layer_prefix(l);
    store.add(p + "ln1.gamma", Tensor({d}, 1.0));
    store.add(p + "ln1.beta", Tensor({d}, 0.0));
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      store.add(p + "attn." + w, xavier_tensor(d, d, rng));
      store.add(p + "attn.b" + std::string(w + 1), Tensor({d}, 0.0));
    }
    store.add(p + "ln2.gamma", Tensor({d}, 1.0));
    store.add(p + "ln2.beta", Tensor({d}, 0.0));
    store.add(p + "ffn.w1", xavier_tensor(d, f, rng));
    store.add(p + "ffn.b1", Tensor({f}, 0.0));
    store.add(p + "ffn.w2", xavier_tensor(f, d, rng));
    store.add(p + "ffn.b2", Tensor({d}, 0.0));
  }
  store.add("encoder.final_ln.gamma", Tensor({d}, 1.0));
  store.add("encoder.final_ln.beta", Tensor({d}, 0.0));
}

std::vector<double> Encoder::position_encoding(std::size_t position, std::size_t dim) {
  std::vector<double> pe(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    double rate = std::pow(10000.0, static_cast<double>(k - k % 2) / static_cast<double>(dim));
    double angle = static_cast<double>(position) / rate;
    pe[k] = (k % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
  return pe;
}

Var Encoder::embed(const ParameterStore& store, const TokenSequence& seq,
                   std::size_t position_offset) const {
  const std::size_t d = config_.model_dim;
  const std::size_t vocab = config_.vocab_size;
  std::vector<std::size_t> rows(seq.size());
  bool uses_anchor = false;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    std::size_t id = seq.ids[i];
    if (id >= vocab) {
      throw std::out_of_range("token id " + std::to_string(id) + " at position " +
                              std::to_string(i) + " outside vocabulary of " +
                              std::to_string(vocab));
    }
    if (with_anchors_ && is_anchor(id)) {
      rows[i] = vocab + (id == kStartAnchorId ? 0 : 1);
      uses_anchor = true;
    } else {
      rows[i] = id;
    }
  }
  if (seq.empty()) return Var::constant(Tensor({0, d}));

  Var table = store.var("embed.token");
  if (uses_anchor) {
    Var parts[] = {table, store.var("embed.anchor")};
    table = ops::concat_rows(parts);
  }
  Var x = ops::gather_rows(table, rows);
  if (!config_.position_encoding) return x;
  Tensor pos({seq.size(), d});
  for (std::size_t i = 0; i < seq.size(); ++i) {
    auto pe = position_encoding(position_offset + i, d);
    std::copy(pe.begin(), pe.end(), pos.data().begin() + i * d);
  }
  return ops::add(x, Var::constant(std::move(pos)));
}

Var Encoder::inject_prompts(const ParameterStore& store, const Var& hidden,
                            std::size_t layer_index, const LayerPromptBank& bank) const {
  const std::size_t m = config_.prompt_len;
  if (m == 0) return hidden;
  if (layer_index >= bank.param_names.size())
    throw std::out_of_range("prompt layer index " + std::to_string(layer_index) +
                            " beyond bank '" + bank.key + "'");
  Var prompt = store.var(bank.param_names[layer_index]);
  if (prompt.rows() != m || prompt.cols() != config_.model_dim)
    throw ShapeError("prompt bank '" + bank.key + "' has shape " +
                     shape_string(prompt.shape()) + ", expected [" + std::to_string(m) +
                     "," + std::to_string(config_.model_dim) + "]");
  if (hidden.rows() < m)
    throw ShapeError("hidden state has fewer rows than the prompt length");
  Var parts[] = {prompt, ops::slice_rows(hidden, m, hidden.rows())};
  return ops::concat_rows(parts);
}

Var Encoder::layer(const ParameterStore& store, const Var& x, std::size_t l,
                   EncodeTrace* trace) const {
  const std::string p = layer_prefix(l);
  const std::size_t d = config_.model_dim, heads = config_.num_heads, dk = d / heads;
  auto linear = [&](const Var& in, const std::string& w, const std::string& b) {
    return ops::add_row(ops::matmul(in, store.var(p + w)), store.var(p + b));
  };

  Var h = ops::layer_norm_rows(x, store.var(p + "ln1.gamma"), store.var(p + "ln1.beta"));
  Var q = linear(h, "attn.wq", "attn.bq");
  Var k = linear(h, "attn.wk", "attn.bk");
  Var v = linear(h, "attn.wv", "attn.bv");
  std::vector<Var> ctx;
  ctx.reserve(heads);
  if (trace) trace->attention.emplace_back();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  for (std::size_t hd = 0; hd < heads; ++hd) {
    Var qh = ops::slice_cols(q, hd * dk, (hd + 1) * dk);
    Var kh = ops::slice_cols(k, hd * dk, (hd + 1) * dk);
    Var vh = ops::slice_cols(v, hd * dk, (hd + 1) * dk);
    Var probs = ops::softmax_rows(ops::scale(ops::matmul_nt(qh, kh), inv_sqrt));
    if (trace) trace->attention.back().push_back(probs.value());
    ctx.push_back(ops::matmul(probs, vh));
  }
  Var attn = linear(heads == 1 ? ctx[0] : ops::concat_cols(ctx), "attn.wo", "attn.bo");
  Var y = ops::add(x, attn);

  Var h2 = ops::layer_norm_rows(y, store.var(p + "ln2.gamma"), store.var(p + "ln2.beta"));
  Var ff = linear(ops::gelu(linear(h2, "ffn.w1", "ffn.b1")), "ffn.w2", "ffn.b2");
  return ops::add(y, ff);
}

Var Encoder::encode(const ParameterStore& store, const TokenSequence& seq,
                    const LayerPromptBank* bank, EncodeTrace* trace) const {
  const std::size_t m = bank ? config_.prompt_len : 0;
  if (m + seq.size() > config_.max_seq_len) {
    throw std::length_error("sequence of length " + std::to_string(m + seq.size()) +
                            " (" + std::to_string(seq.size()) + " tokens + " +
                            std::to_string(m) + " prompts) exceeds max_seq_len " +
                            std::to_string(config_.max_seq_len));
  }
  if (bank && bank->param_names.size() != config_.num_layers + 1)
    throw ShapeError("prompt bank '" + bank->key + "' has " +
                     std::to_string(bank->param_names.size()) + " matrices, expected " +
                     std::to_string(config_.num_layers + 1));
  const std::size_t d = config_.model_dim;
  if (m + seq.size() == 0) return Var::constant(Tensor({0, d}));

  Var x = embed(store, seq, m);
  if (m > 0) {
    Var parts[] = {Var::constant(Tensor({m, d})), x};
    x = ops::concat_rows(parts);
  }
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    if (m > 0) x = inject_prompts(store, x, l, *bank);
    x = layer(store, x, l, trace);
  }
  if (m > 0) x = inject_prompts(store, x, config_.num_layers, *bank);
  return ops::layer_norm_rows(x, store.var("encoder.final_ln.gamma"),
                              store.var("encoder.final_ln.beta"));
}

}  // namespace softmrc
