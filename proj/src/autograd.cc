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

#include "softmrc/autograd.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace softmrc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

ConstMapMat view(const Tensor& t, std::size_t r, std::size_t c) {
  return ConstMapMat(t.data().data(), static_cast<Eigen::Index>(r),
                     static_cast<Eigen::Index>(c));
}

MapMat grad_view(Tensor& t, std::size_t r, std::size_t c) {
  return MapMat(t.ensure_grad().data(), static_cast<Eigen::Index>(r),
                static_cast<Eigen::Index>(c));
}

bool wants_grad(const std::shared_ptr<Node>& n) { return n->value.requires_grad(); }

thread_local bool g_grad_enabled = true;

// Records a node. Parents and the closure are dropped when no parent needs a
// gradient, which keeps inference passes free of tape bookkeeping.
Var record(Tensor value, std::vector<std::shared_ptr<Node>> parents,
           std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  bool any = g_grad_enabled && std::any_of(parents.begin(), parents.end(), wants_grad);
  node->value = std::move(value);
  node->value.set_requires_grad(any);
  if (any) {
    node->parents = std::move(parents);
    node->backward = std::move(fn);
  }
  return Var(std::move(node));
}

void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
}

std::size_t Tensor::rows() const {
  if (shape_.size() <= 1) return 1;
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 1;
  return shape_.back();
}

std::vector<double>& Tensor::ensure_grad() {
  if (!grad_set_) {
    grad_.assign(data_.size(), 0.0);
    grad_set_ = true;
  }
  return grad_;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var Var::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->value.set_requires_grad(requires_grad);
  return Var(std::move(node));
}

double Var::item() const {
  require(numel() == 1, "item() on tensor of shape " + shape_string(shape()));
  return value()[0];
}

void backward(const Var& loss) {
  require(loss.defined(), "backward on undefined variable");
  if (loss.numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " +
                     shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; a grey node met again means a cycle.
  std::vector<Node*> order;
  std::unordered_map<Node*, int> state;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  state[loss.node().get()] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (!p->value.requires_grad()) continue;
      int& s = state[p];
      if (s == 1) throw std::logic_error("cycle detected in computation graph");
      if (s == 0) {
        s = 1;
        stack.emplace_back(p, 0);
      }
    } else {
      state[node] = 2;
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->value.ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->value.has_grad()) n->backward(*n);
  }
}

namespace ops {

Var matmul(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(B.rank() >= 1 && A.rank() >= 1, "matmul on empty-rank tensor");
  require(!(A.rank() == 1 && B.rank() == 1), "matmul of two vectors; use dot");
  std::size_t r = A.rows(), k = A.cols();
  std::size_t bk = B.rank() == 1 ? B.numel() : B.rows();
  std::size_t c = B.rank() == 1 ? 1 : B.cols();
  require(k == bk, "matmul shape mismatch " + shape_string(A.shape()) + " x " +
                       shape_string(B.shape()));
  std::vector<std::size_t> out_shape;
  if (A.rank() == 1) out_shape = {c};
  else if (B.rank() == 1) out_shape = {r};
  else out_shape = {r, c};
  Tensor out(out_shape);
  MapMat(out.data().data(), r, c).noalias() = view(A, r, k) * view(B, k, c);
  return record(std::move(out), {a.node(), b.node()}, [r, k, c](Node& n) {
    auto& pa = n.parents[0]->value;
    auto& pb = n.parents[1]->value;
    ConstMapMat g(n.value.grad().data(), r, c);
    if (pa.requires_grad()) grad_view(pa, r, k).noalias() += g * view(pb, k, c).transpose();
    if (pb.requires_grad()) grad_view(pb, k, c).noalias() += view(pa, r, k).transpose() * g;
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.cols(),
          "matmul_nt shape mismatch " + shape_string(A.shape()) + " x " +
              shape_string(B.shape()) + "^T");
  std::size_t r = A.rows(), k = A.cols(), c = B.rows();
  Tensor out({r, c});
  MapMat(out.data().data(), r, c).noalias() = view(A, r, k) * view(B, c, k).transpose();
  return record(std::move(out), {a.node(), b.node()}, [r, k, c](Node& n) {
    auto& pa = n.parents[0]->value;
    auto& pb = n.parents[1]->value;
    ConstMapMat g(n.value.grad().data(), r, c);
    if (pa.requires_grad()) grad_view(pa, r, k).noalias() += g * view(pb, c, k);
    if (pb.requires_grad()) grad_view(pb, c, k).noalias() += g.transpose() * view(pa, r, k);
  });
}

Var transpose(const Var& a) {
  const Tensor& A = a.value();
  require(A.rank() == 2, "transpose needs a matrix");
  std::size_t r = A.rows(), c = A.cols();
  Tensor out({c, r});
  MapMat(out.data().data(), c, r) = view(A, r, c).transpose();
  return record(std::move(out), {a.node()}, [r, c](Node& n) {
    ConstMapMat g(n.value.grad().data(), c, r);
    grad_view(n.parents[0]->value, r, c) += g.transpose();
  });
}

namespace {

template <typename Fwd, typename Bwd>
Var binary_elementwise(const Var& a, const Var& b, const char* name, Fwd fwd,
                       Bwd bwd) {
  require(a.shape() == b.shape(), std::string(name) + " shape mismatch " +
                                      shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
  const auto& x = a.value().data();
  const auto& y = b.value().data();
  Tensor out(a.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i], y[i]);
  return record(std::move(out), {a.node(), b.node()}, [bwd](Node& n) {
    auto& pa = n.parents[0]->value;
    auto& pb = n.parents[1]->value;
    const auto& g = n.value.grad();
    bool ga = pa.requires_grad(), gb = pb.requires_grad();
    double* da = ga ? pa.ensure_grad().data() : nullptr;
    double* db = gb ? pb.ensure_grad().data() : nullptr;
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto [ka, kb] = bwd(pa[i], pb[i]);
      if (ga) da[i] += g[i] * ka;
      if (gb) db[i] += g[i] * kb;
    }
  });
}

// f gives the value, df the derivative in terms of (input, output).
template <typename F, typename DF>
Var unary_elementwise(const Var& a, F f, DF df) {
  const auto& x = a.value().data();
  Tensor out(a.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return record(std::move(out), {a.node()}, [df](Node& n) {
    auto& pa = n.parents[0]->value;
    const auto& g = n.value.grad();
    double* da = pa.ensure_grad().data();
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * df(pa[i], n.value[i]);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary_elementwise(a, b, "add", [](double x, double y) { return x + y; },
                            [](double, double) { return std::pair{1.0, 1.0}; });
}

Var sub(const Var& a, const Var& b) {
  return binary_elementwise(a, b, "sub", [](double x, double y) { return x - y; },
                            [](double, double) { return std::pair{1.0, -1.0}; });
}

Var mul(const Var& a, const Var& b) {
  return binary_elementwise(a, b, "mul", [](double x, double y) { return x * y; },
                            [](double x, double y) { return std::pair{y, x}; });
}

Var add_row(const Var& m, const Var& row) {
  const Tensor& M = m.value();
  const Tensor& R = row.value();
  std::size_t r = M.rank() == 2 ? M.rows() : 1, c = M.cols();
  require(R.rank() == 1 && R.numel() == c,
          "add_row shape mismatch " + shape_string(M.shape()) + " + " +
              shape_string(R.shape()));
  Tensor out(M.shape());
  MapMat(out.data().data(), r, c) =
      view(M, r, c).rowwise() + view(R, 1, c).row(0);
  return record(std::move(out), {m.node(), row.node()}, [r, c](Node& n) {
    ConstMapMat g(n.value.grad().data(), r, c);
    auto& pm = n.parents[0]->value;
    auto& pr = n.parents[1]->value;
    if (pm.requires_grad()) grad_view(pm, r, c) += g;
    if (pr.requires_grad()) grad_view(pr, 1, c) += g.colwise().sum();
  });
}

Var scale(const Var& a, double s) {
  return unary_elementwise(a, [s](double x) { return s * x; },
                           [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary_elementwise(a, [s](double x) { return x + s; },
                           [](double, double) { return 1.0; });
}

Var sigmoid(const Var& a) {
  return unary_elementwise(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary_elementwise(a, [](double x) { return std::tanh(x); },
                           [](double, double y) { return 1.0 - y * y; });
}

Var gelu(const Var& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary_elementwise(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
               x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

Var log(const Var& a) {
  return unary_elementwise(a, [](double x) { return std::log(x); },
                           [](double x, double) { return 1.0 / x; });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return record(Tensor::scalar(s), {a.node()}, [](Node& n) {
    double g = n.value.grad()[0];
    for (double& d : n.parents[0]->value.ensure_grad()) d += g;
  });
}

Var mean(const Var& a) {
  require(a.numel() > 0, "mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Var dot(const Var& a, const Var& b) {
  require(a.numel() == b.numel(), "dot length mismatch");
  const auto& x = a.value().data();
  const auto& y = b.value().data();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return record(Tensor::scalar(s), {a.node(), b.node()}, [](Node& n) {
    double g = n.value.grad()[0];
    auto& pa = n.parents[0]->value;
    auto& pb = n.parents[1]->value;
    if (pa.requires_grad()) {
      auto& d = pa.ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g * pb[i];
    }
    if (pb.requires_grad()) {
      auto& d = pb.ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g * pa[i];
    }
  });
}

Var softmax_rows(const Var& a) {
  const Tensor& A = a.value();
  std::size_t r = A.rows(), c = A.cols();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = A.data().data() + i * c;
    double* y = out.data().data() + i * c;
    double mx = kNegInf;
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  return record(std::move(out), {a.node()}, [r, c](Node& n) {
    const auto& g = n.value.grad();
    auto& d = n.parents[0]->value.ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = n.value.data().data() + i * c;
      const double* gi = g.data() + i * c;
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += gi[j] * y[j];
      for (std::size_t j = 0; j < c; ++j) d[i * c + j] += y[j] * (gi[j] - s);
    }
  });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Tensor& X = x.value();
  std::size_t r = X.rows(), c = X.cols();
  require(gamma.numel() == c && beta.numel() == c, "layer_norm parameter width");
  Tensor out(X.shape());
  auto xhat = std::make_shared<std::vector<double>>(X.numel());
  auto inv_std = std::make_shared<std::vector<double>>(r);
  const auto& gm = gamma.value().data();
  const auto& bt = beta.value().data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = X.data().data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xi[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<double>(c);
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < c; ++j) {
      double h = (xi[j] - mu) * is;
      (*xhat)[i * c + j] = h;
      out[i * c + j] = gm[j] * h + bt[j];
    }
  }
  return record(std::move(out), {x.node(), gamma.node(), beta.node()},
                [r, c, xhat, inv_std](Node& n) {
                  auto& px = n.parents[0]->value;
                  auto& pg = n.parents[1]->value;
                  auto& pb = n.parents[2]->value;
                  const auto& g = n.value.grad();
                  if (pg.requires_grad() || pb.requires_grad()) {
                    auto& dg = pg.ensure_grad();
                    auto& db = pb.ensure_grad();
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < c; ++j) {
                        dg[j] += g[i * c + j] * (*xhat)[i * c + j];
                        db[j] += g[i * c + j];
                      }
                  }
                  if (!px.requires_grad()) return;
                  auto& dx = px.ensure_grad();
                  std::vector<double> dh(c);
                  for (std::size_t i = 0; i < r; ++i) {
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t j = 0; j < c; ++j) {
                      dh[j] = g[i * c + j] * pg[j];
                      m1 += dh[j];
                      m2 += dh[j] * (*xhat)[i * c + j];
                    }
                    m1 /= static_cast<double>(c);
                    m2 /= static_cast<double>(c);
                    for (std::size_t j = 0; j < c; ++j)
                      dx[i * c + j] +=
                          (*inv_std)[i] * (dh[j] - m1 - (*xhat)[i * c + j] * m2);
                  }
                });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  require(A.rank() == 2 && begin <= end && end <= A.rows(),
          "slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
              ") out of range for " + shape_string(A.shape()));
  std::size_t c = A.cols();
  Tensor out({end - begin, c},
             std::vector<double>(A.data().begin() + begin * c, A.data().begin() + end * c));
  return record(std::move(out), {a.node()}, [begin, c](Node& n) {
    const auto& g = n.value.grad();
    auto& d = n.parents[0]->value.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) d[begin * c + i] += g[i];
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  require(A.rank() == 2 && begin <= end && end <= A.cols(), "slice_cols out of range");
  std::size_t r = A.rows(), c = A.cols(), w = end - begin;
  Tensor out({r, w});
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(A.data().data() + i * c + begin, w, out.data().data() + i * w);
  return record(std::move(out), {a.node()}, [r, c, w, begin](Node& n) {
    const auto& g = n.value.grad();
    auto& d = n.parents[0]->value.ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) d[i * c + begin + j] += g[i * w + j];
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows of nothing");
  std::size_t c = parts[0].cols(), r = 0;
  for (const auto& p : parts) {
    require(p.value().rank() == 2 && p.cols() == c, "concat_rows width mismatch");
    r += p.rows();
  }
  Tensor out({r, c});
  std::vector<std::shared_ptr<Node>> parents;
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + off);
    off += p.numel();
    parents.push_back(p.node());
  }
  return record(std::move(out), std::move(parents), [](Node& n) {
    const auto& g = n.value.grad();
    std::size_t off = 0;
    for (auto& p : n.parents) {
      std::size_t len = p->value.numel();
      if (p->value.requires_grad()) {
        auto& d = p->value.ensure_grad();
        for (std::size_t i = 0; i < len; ++i) d[i] += g[off + i];
      }
      off += len;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  std::size_t r = parts[0].rows(), c = 0;
  for (const auto& p : parts) {
    require(p.value().rank() == 2 && p.rows() == r, "concat_cols height mismatch");
    c += p.cols();
  }
  Tensor out({r, c});
  std::vector<std::shared_ptr<Node>> parents;
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::size_t w = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(p.value().data().data() + i * w, w, out.data().data() + i * c + off);
    off += w;
    parents.push_back(p.node());
  }
  return record(std::move(out), std::move(parents), [r, c](Node& n) {
    const auto& g = n.value.grad();
    std::size_t off = 0;
    for (auto& p : n.parents) {
      std::size_t w = p->value.cols();
      if (p->value.requires_grad()) {
        auto& d = p->value.ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) d[i * w + j] += g[i * c + off + j];
      }
      off += w;
    }
  });
}

Var gather_rows(const Var& table, std::span<const std::size_t> ids) {
  const Tensor& T = table.value();
  require(T.rank() == 2, "gather_rows needs a matrix");
  std::size_t c = T.cols();
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  for (std::size_t id : idx) {
    if (id >= T.rows()) {
      throw std::out_of_range("row id " + std::to_string(id) + " out of range for " +
                              std::to_string(T.rows()) + " rows");
    }
  }
  Tensor out({idx.size(), c});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(T.data().data() + idx[i] * c, c, out.data().data() + i * c);
  return record(std::move(out), {table.node()}, [idx = std::move(idx), c](Node& n) {
    const auto& g = n.value.grad();
    auto& d = n.parents[0]->value.ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) d[idx[i] * c + j] += g[i * c + j];
  });
}

Var reshape(const Var& a, std::vector<std::size_t> shape) {
  Tensor out(std::move(shape), a.value().data());
  return record(std::move(out), {a.node()}, [](Node& n) {
    const auto& g = n.value.grad();
    auto& d = n.parents[0]->value.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  });
}

Var bce_with_logits(const Var& logits, std::span<const double> targets,
                    std::span<const double> weight) {
  std::size_t n = logits.numel();
  require(targets.size() == n && weight.size() == n, "bce target/weight length");
  const auto& x = logits.value().data();
  double wsum = 0.0, loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (weight[i] == 0.0) continue;
    wsum += weight[i];
    double xi = x[i];
    loss += weight[i] * (std::max(xi, 0.0) - xi * targets[i] + std::log1p(std::exp(-std::abs(xi))));
  }
  double norm = wsum > 0.0 ? 1.0 / wsum : 0.0;
  std::vector<double> t(targets.begin(), targets.end());
  std::vector<double> w(weight.begin(), weight.end());
  return record(Tensor::scalar(loss * norm), {logits.node()},
                [t = std::move(t), w = std::move(w), norm](Node& n) {
                  double g = n.value.grad()[0] * norm;
                  auto& p = n.parents[0]->value;
                  auto& d = p.ensure_grad();
                  for (std::size_t i = 0; i < d.size(); ++i) {
                    if (w[i] == 0.0) continue;
                    double s = 1.0 / (1.0 + std::exp(-p[i]));
                    d[i] += g * w[i] * (s - t[i]);
                  }
                });
}

Var cross_entropy_rows(const Var& logits, std::span<const int> labels) {
  const Tensor& L = logits.value();
  std::size_t r = L.rows(), c = L.cols();
  require(labels.size() == r, "cross_entropy label count");
  auto probs = std::make_shared<std::vector<double>>(L.numel());
  double loss = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = L.data().data() + i * c;
    double mx = kNegInf;
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] = std::exp(x[j] - mx) / z;
    if (labels[i] < 0) continue;
    require(static_cast<std::size_t>(labels[i]) < c, "cross_entropy label out of range");
    loss += std::log(z) + mx - x[labels[i]];
    ++used;
  }
  double norm = used ? 1.0 / static_cast<double>(used) : 0.0;
  std::vector<int> lab(labels.begin(), labels.end());
  return record(Tensor::scalar(loss * norm), {logits.node()},
                [probs, lab = std::move(lab), r, c, norm](Node& n) {
                  double g = n.value.grad()[0] * norm;
                  auto& d = n.parents[0]->value.ensure_grad();
                  for (std::size_t i = 0; i < r; ++i) {
                    if (lab[i] < 0) continue;
                    for (std::size_t j = 0; j < c; ++j) {
                      double t = static_cast<int>(j) == lab[i] ? 1.0 : 0.0;
                      d[i * c + j] += g * ((*probs)[i * c + j] - t);
                    }
                  }
                });
}

Var pair_tanh_scores(const Var& a, const Var& b, const Var& c, const Var& v) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.rank() == 2 && A.shape() == B.shape(), "pair scorer endpoint shapes");
  std::size_t n = A.rows(), h = A.cols();
  require(c.numel() == h && v.numel() == h, "pair scorer hidden width");
  const double* cv = c.value().data().data();
  const double* vv = v.value().data().data();
  Tensor out({n, n}, kNegInf);
  std::vector<double> tmp(h);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = A.data().data() + i * h;
    for (std::size_t j = i; j < n; ++j) {
      const double* bj = B.data().data() + j * h;
      double s = 0.0;
      for (std::size_t k = 0; k < h; ++k) s += vv[k] * std::tanh(ai[k] + bj[k] + cv[k]);
      out[i * n + j] = s;
    }
  }
  return record(std::move(out), {a.node(), b.node(), c.node(), v.node()}, [n, h](Node& nd) {
    const auto& g = nd.value.grad();
    const Tensor& A = nd.parents[0]->value;
    const Tensor& B = nd.parents[1]->value;
    Tensor& C = nd.parents[2]->value;
    Tensor& V = nd.parents[3]->value;
    std::vector<double> da(n * h, 0.0), db(n * h, 0.0), dc(h, 0.0), dv(h, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        double gij = g[i * n + j];
        if (gij == 0.0) continue;
        for (std::size_t k = 0; k < h; ++k) {
          double t = std::tanh(A[i * h + k] + B[j * h + k] + C[k]);
          double s = gij * V[k] * (1.0 - t * t);
          da[i * h + k] += s;
          db[j * h + k] += s;
          dc[k] += s;
          dv[k] += gij * t;
        }
      }
    }
    auto acc = [](Tensor& t, const std::vector<double>& src) {
      if (!t.requires_grad()) return;
      auto& d = t.ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += src[i];
    };
    acc(nd.parents[0]->value, da);
    acc(nd.parents[1]->value, db);
    acc(C, dc);
    acc(V, dv);
  });
}

Var mask_lower_triangle(const Var& m) {
  const Tensor& M = m.value();
  require(M.rank() == 2 && M.rows() == M.cols(), "mask_lower_triangle needs a square matrix");
  std::size_t n = M.rows();
  Tensor out = Tensor(M.shape(), M.data());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) out[i * n + j] = kNegInf;
  return record(std::move(out), {m.node()}, [n](Node& nd) {
    const auto& g = nd.value.grad();
    auto& d = nd.parents[0]->value.ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) d[i * n + j] += g[i * n + j];
  });
}

}  // namespace ops
}  // namespace softmrc
