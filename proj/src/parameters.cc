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

#include "softmrc/parameters.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace softmrc {

Var ParameterStore::add(const std::string& name, Tensor value) {
  if (entries_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->value.set_requires_grad(true);
  entries_.emplace(name, node);
  return Var(node);
}

Var ParameterStore::var(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
  return Var(it->second);
}

Tensor& ParameterStore::tensor(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second->value;
}

const Tensor& ParameterStore::tensor(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second->value;
}

void ParameterStore::freeze(const std::string& name) {
  tensor(name).set_requires_grad(false);
  frozen_.insert(name);
}

void ParameterStore::unfreeze_all() {
  for (auto& [name, node] : entries_) node->value.set_requires_grad(true);
  frozen_.clear();
}

std::size_t ParameterStore::freeze_prefix(const std::string& prefix) {
  std::size_t n = 0;
  for (const auto& name : names_with_prefix(prefix)) {
    freeze(name);
    ++n;
  }
  return n;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, node] : entries_) out.push_back(name);
  return out;
}

std::vector<std::string> ParameterStore::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (auto it = entries_.lower_bound(prefix);
       it != entries_.end() && it->first.compare(0, prefix.size(), prefix) == 0; ++it)
    out.push_back(it->first);
  return out;
}

std::size_t ParameterStore::total_count() const {
  std::size_t n = 0;
  for (const auto& [name, node] : entries_) n += node->value.numel();
  return n;
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [name, node] : entries_)
    if (!frozen_.count(name)) n += node->value.numel();
  return n;
}

std::size_t ParameterStore::count_with_prefix(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& name : names_with_prefix(prefix)) n += tensor(name).numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, node] : entries_) node->value.clear_grad();
}

std::map<std::string, std::vector<double>> ParameterStore::snapshot() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, node] : entries_) out.emplace(name, node->value.data());
  return out;
}

void ParameterStore::restore(const std::map<std::string, std::vector<double>>& snap) {
  for (const auto& [name, data] : snap) {
    auto& t = tensor(name);
    if (t.numel() != data.size()) throw ShapeError("snapshot size mismatch for " + name);
    t.data() = data;
  }
}

double adam_step(ParameterStore& store, AdamState& state) {
  const AdamHyper& h = state.hyper;
  std::vector<std::string> active;
  double sq = 0.0;
  for (const auto& name : store.names()) {
    Tensor& t = store.tensor(name);
    if (!t.has_grad()) continue;
    if (t.grad().size() != t.numel()) {
      throw ShapeError("gradient length " + std::to_string(t.grad().size()) +
                       " does not match parameter " + name + " " + shape_string(t.shape()));
    }
    if (store.is_frozen(name)) continue;
    active.push_back(name);
    for (double g : t.grad()) sq += g * g;
  }
  double norm = std::sqrt(sq);
  double clip = (h.clip_norm > 0.0 && norm > h.clip_norm) ? h.clip_norm / norm : 1.0;

  state.step_count += 1;
  double t = static_cast<double>(state.step_count);
  double bc1 = 1.0 - std::pow(h.beta1, t);
  double bc2 = 1.0 - std::pow(h.beta2, t);
  for (const auto& name : active) {
    Tensor& p = store.tensor(name);
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != p.numel()) m.assign(p.numel(), 0.0);
    if (v.size() != p.numel()) v.assign(p.numel(), 0.0);
    const auto& g = p.grad();
    for (std::size_t i = 0; i < p.numel(); ++i) {
      double gi = g[i] * clip;
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.epsilon);
    }
  }
  store.zero_grad();
  return norm;
}

std::map<std::string, std::vector<double>> finite_difference_grad(
    const std::function<double(const ParameterStore&)>& f, ParameterStore& store,
    double eps, const std::vector<std::string>& names) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite difference step must be positive");
  std::vector<std::string> targets = names.empty() ? store.names() : names;
  std::map<std::string, std::vector<double>> out;
  for (const auto& name : targets) {
    Tensor& t = store.tensor(name);
    std::vector<double> est(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double orig = t[i];
      t[i] = orig + eps;
      double fp = f(store);
      t[i] = orig - eps;
      double fm = f(store);
      t[i] = orig;
      est[i] = (fp - fm) / (2.0 * eps);
    }
    out.emplace(name, std::move(est));
  }
  return out;
}

double max_relative_error(const std::vector<double>& analytic,
                          const std::vector<double>& numeric, double floor) {
  if (analytic.size() != numeric.size()) throw ShapeError("gradient length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

namespace {

constexpr char kMagic[8] = {'S', 'M', 'R', 'C', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T)))
    throw std::runtime_error("truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

struct RawEntry {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;
};

std::vector<RawEntry> read_raw(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  auto count = get<std::uint64_t>(is);
  std::vector<RawEntry> out;
  for (std::uint64_t e = 0; e < count; ++e) {
    RawEntry r;
    auto len = get<std::uint32_t>(is);
    r.name.resize(len);
    if (!is.read(r.name.data(), len)) throw std::runtime_error("truncated checkpoint");
    auto rank = get<std::uint32_t>(is);
    std::size_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      r.shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(is)));
      numel *= r.shape.back();
    }
    r.data.resize(numel);
    for (auto& x : r.data) x = get<double>(is);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kMagic, 8);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, store.size());
  for (const auto& name : store.names()) {
    const Tensor& t = store.tensor(name);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(os, d);
    for (double x : t.data()) put<double>(os, x);
  }
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

void load_checkpoint(ParameterStore& store, const std::filesystem::path& path) {
  for (auto& r : read_raw(path)) {
    if (!store.contains(r.name))
      throw std::runtime_error("checkpoint entry not in model: " + r.name);
    Tensor& t = store.tensor(r.name);
    if (t.shape() != r.shape)
      throw ShapeError("checkpoint shape " + shape_string(r.shape) + " for " + r.name +
                       " does not match model " + shape_string(t.shape()));
    t.data() = std::move(r.data);
  }
}

ParameterStore read_checkpoint(const std::filesystem::path& path) {
  ParameterStore store;
  for (auto& r : read_raw(path)) store.add(r.name, Tensor(r.shape, std::move(r.data)));
  return store;
}

Tensor normal_tensor(std::vector<std::size_t> shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& x : t.data()) x = dist(rng);
  return t;
}

Tensor xavier_tensor(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  Tensor t({fan_in, fan_out});
  double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  for (auto& x : t.data()) x = dist(rng);
  return t;
}

}  // namespace softmrc
