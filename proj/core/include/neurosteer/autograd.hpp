// Copyright 2026 The neurosteer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Var is a handle to a node in a dynamically built graph. Every op below
// computes its value eagerly and, when gradient recording is enabled and at
// least one input requires a gradient, stores a closure that propagates the
// output gradient back into its inputs. Ops are deliberately coarse (whole
// LSTM sequences, framing, layer norm) so that graphs stay small.
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace neurosteer::ag {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(const Matrix& grad_out)> backward_fn;

  void accumulate(const Matrix& g);
  // Returns the gradient buffer, zero-initialised on first use.
  Matrix& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }
  void zero_grad() { node_->grad.resize(0, 0); }
  double item() const;
  bool defined() const { return static_cast<bool>(node_); }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

using BackwardFn = std::function<void(const Matrix& grad_out)>;

// Builds a result node. `backward` is only retained when recording is on and
// some input requires a gradient; it must accumulate into the inputs itself.
Var make_op(Matrix value, std::vector<Var> inputs, BackwardFn backward);

Var constant(Matrix value);
Var leaf(Matrix value, bool requires_grad = true);

// Runs backpropagation from a 1x1 root.
void backward(const Var& root);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- arithmetic --------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double c);
Var add_row(const Var& a, const Var& row);  // broadcast a 1xC row over rows
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var transpose(const Var& a);
// x * W^T + bias, W is (out x in), bias is (1 x out) or undefined.
Var linear(const Var& x, const Var& weight, const Var& bias);

// ---- nonlinearities ----------------------------------------------------
Var relu(const Var& a);
Var prelu(const Var& a, const Var& slope);  // slope is 1x1
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var softmax_rows(const Var& a);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var dropout(const Var& x, double p, std::mt19937_64& rng);

// ---- shape and indexing ------------------------------------------------
Var concat_cols(const Var& a, const Var& b);
Var slice_rows(const Var& a, Index begin, Index count);
Var slice_cols(const Var& a, Index begin, Index count);
Var reshape(const Var& a, Index rows, Index cols);
// out.row(i) = x.row(index[i]); index -1 yields a zero row.
Var gather_rows(const Var& x, std::vector<Index> index);
// out.row(index[i]) += x.row(i); index -1 drops the row.
Var scatter_add_rows(const Var& x, std::vector<Index> index, Index out_rows);
// out.row(i) = (1 - w[i]) * x.row(lo[i]) + w[i] * x.row(hi[i]).
Var blend_rows(const Var& x, std::vector<Index> lo, std::vector<Index> hi, std::vector<double> w);

// Sliding windows over the rows of a (T x C) input: row t of the result is
// [x(t*stride + 0..K-1, c=0), ..., x(t*stride + 0..K-1, c=C-1)], i.e. the
// im2col layout for a Conv1D weight stored as (C_out x C_in*K).
Var frame(const Var& x, Index kernel, Index stride);
// Inverse of single-channel framing: sums the (T' x K) frames with the given
// hop into a column of length out_len (samples beyond out_len are dropped).
Var overlap_add(const Var& frames, Index stride, Index out_len);

// ---- reductions --------------------------------------------------------
Var row_dot(const Var& a, const Var& b);  // (L x 1) per-row inner products
Var sum_all(const Var& a);
Var mean_all(const Var& a);

// Output length of a strided valid convolution.
Index conv_output_length(Index input_length, Index kernel, Index stride);

}  // namespace neurosteer::ag
