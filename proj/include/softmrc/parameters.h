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

// Named parameter storage, freeze masks, Adam, the checkpoint container and
// the central-difference gradient oracle.

#ifndef SOFTMRC_PARAMETERS_H_
#define SOFTMRC_PARAMETERS_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "softmrc/autograd.h"

namespace softmrc {

// Parameters keyed by hierarchical name ("encoder.layer0.attn.wq"). Each
// entry is a persistent leaf node; graphs built from `var()` accumulate their
// gradients straight into the stored tensor.
class ParameterStore {
 public:
  // Registers a new entry. Duplicate names are rejected.
  Var add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  // Leaf handle for use in a forward pass. Frozen entries do not require grad.
  Var var(const std::string& name) const;
  Tensor& tensor(const std::string& name);
  const Tensor& tensor(const std::string& name) const;

  void freeze(const std::string& name);
  void unfreeze_all();
  // Freezes every entry whose name starts with `prefix`; returns the count.
  std::size_t freeze_prefix(const std::string& prefix);
  bool is_frozen(const std::string& name) const { return frozen_.count(name) > 0; }
  const std::set<std::string>& frozen() const { return frozen_; }

  std::vector<std::string> names() const;
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t total_count() const;
  std::size_t trainable_count() const;
  std::size_t count_with_prefix(const std::string& prefix) const;

  void zero_grad();

  // Copies every entry's data (not gradients) into a flat snapshot and back.
  std::map<std::string, std::vector<double>> snapshot() const;
  void restore(const std::map<std::string, std::vector<double>>& snap);

 private:
  std::map<std::string, std::shared_ptr<Node>> entries_;
  std::set<std::string> frozen_;
};

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global-norm clipping threshold; <= 0 disables clipping.
  double clip_norm = 1.0;
};

struct AdamState {
  std::uint64_t step_count = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  AdamHyper hyper;
};

// Applies one bias-corrected Adam update to every non-frozen entry that has
// a gradient, then clears all gradients. Returns the pre-clip global norm.
double adam_step(ParameterStore& store, AdamState& state);

// Central differences (f(θ+εe_i) − f(θ−εe_i)) / 2ε for every scalar of the
// named entries (all entries when `names` is empty). The store is restored
// bit-exactly afterwards.
std::map<std::string, std::vector<double>> finite_difference_grad(
    const std::function<double(const ParameterStore&)>& f, ParameterStore& store,
    double eps, const std::vector<std::string>& names = {});

// Max over components of |a−b| / max(|a|, |b|, floor).
double max_relative_error(const std::vector<double>& analytic,
                          const std::vector<double>& numeric, double floor = 1e-6);

// Checkpoint container, little-endian:
//   magic "SMRCCKPT" (8 bytes), u32 format version (=1), u64 entry count,
//   then per entry in name order: u32 name length, name bytes (UTF-8),
//   u32 rank, rank × u64 dims, numel × f64 payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path);
// Overwrites matching entries of `store`; every stored name must already
// exist with the same shape.
void load_checkpoint(ParameterStore& store, const std::filesystem::path& path);
// Reads a checkpoint into a fresh store.
ParameterStore read_checkpoint(const std::filesystem::path& path);

// Initialisers drawing from a caller-owned engine.
Tensor normal_tensor(std::vector<std::size_t> shape, double stddev, std::mt19937_64& rng);
Tensor xavier_tensor(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

}  // namespace softmrc

#endif  // SOFTMRC_PARAMETERS_H_
