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

// Dense 64-bit tensors with a dynamic reverse-mode tape.
//
// Every operation records a node holding its value and a closure that
// propagates the node's gradient to its parents. The graph is rebuilt on
// every forward pass, so sequences of different lengths (prompt injection,
// verbalized triggers, hard-prompt prefixes) need no special handling.
// Tensors are at most two-dimensional; a vector has shape {n} and a scalar
// has shape {1}.

#ifndef SOFTMRC_AUTOGRAD_H_
#define SOFTMRC_AUTOGRAD_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace softmrc {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  // Row/column view: a vector {n} is treated as one row of n columns.
  std::size_t rows() const;
  std::size_t cols() const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool has_grad() const { return grad_set_; }
  std::vector<double>& grad() { return grad_; }
  const std::vector<double>& grad() const { return grad_; }
  // Allocates a zero gradient if none is present and returns it.
  std::vector<double>& ensure_grad();
  void clear_grad() {
    grad_.clear();
    grad_set_ = false;
  }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool v) { requires_grad_ = v; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
  bool grad_set_ = false;
  bool requires_grad_ = false;
};

std::string shape_string(const std::vector<std::size_t>& shape);

struct Node {
  Tensor value;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's gradient and accumulates into the parents' gradients.
  std::function<void(Node&)> backward;
};

// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  // A leaf owning a fresh node.
  static Var leaf(Tensor value, bool requires_grad = false);
  static Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  const std::vector<std::size_t>& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  std::size_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_->value.requires_grad(); }
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  bool defined() const { return node_ != nullptr; }

 private:
  std::shared_ptr<Node> node_;
};

// While alive, new operations record no parents or closures (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Populates d(loss)/d(t) in every requires_grad tensor reachable from the
// scalar `loss`. Gradients accumulate, so a leaf used twice receives the sum
// of both paths and repeated calls add up until the gradient is cleared.
void backward(const Var& loss);

namespace ops {

// Matrix products. Vectors are promoted to a single row on the left.
Var matmul(const Var& a, const Var& b);     // a · b
Var matmul_nt(const Var& a, const Var& b);  // a · bᵀ
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);  // same shape
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var add_row(const Var& m, const Var& row);  // broadcast a {c} vector over rows
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var gelu(const Var& a);  // exact, x·Φ(x)
Var log(const Var& a);

Var sum(const Var& a);   // -> scalar
Var mean(const Var& a);  // -> scalar
Var dot(const Var& a, const Var& b);  // -> scalar

Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta,
                    double eps = 1e-5);

Var slice_rows(const Var& a, std::size_t begin, std::size_t end);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(const Var& table, std::span<const std::size_t> ids);
Var reshape(const Var& a, std::vector<std::size_t> shape);

// Mean binary cross-entropy with logits over the entries where `weight` is
// nonzero. `targets` and `weight` have the logits' element count.
Var bce_with_logits(const Var& logits, std::span<const double> targets,
                    std::span<const double> weight);

// Mean softmax cross-entropy over rows; label < 0 skips a row.
Var cross_entropy_rows(const Var& logits, std::span<const int> labels);

// Pairwise scorer: out(i,j) = v · tanh(a_i + b_j + c) for i <= j and -inf
// below the diagonal. a and b are n×h, c and v have h entries.
Var pair_tanh_scores(const Var& a, const Var& b, const Var& c, const Var& v);

// Sets entries with i > j to -inf; gradient flows through the rest.
Var mask_lower_triangle(const Var& m);

}  // namespace ops
}  // namespace softmrc

#endif  // SOFTMRC_AUTOGRAD_H_
