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

#include "neurosteer/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "neurosteer/errors.hpp"

namespace neurosteer::ag {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
              std::to_string(b.cols()) + ")");
}

// Adds g into the node if it participates in differentiation.
inline void flow(Node* n, const Matrix& g) {
  if (n->requires_grad) n->accumulate(g);
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Matrix& Node::grad_buffer() {
  if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
  return grad;
}

double Var::item() const {
  require(rows() == 1 && cols() == 1, "item(): value is not a scalar");
  return node_->value(0, 0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_op(Matrix value, std::vector<Var> inputs, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = std::any_of(inputs.begin(), inputs.end(),
                           [](const Var& v) { return v.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& v : inputs) node->inputs.push_back(v.ptr());
      node->backward_fn = std::move(backward);
    }
  }
  return Var(std::move(node));
}

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var leaf(Matrix value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

void backward(const Var& root) {
  require(root.rows() == 1 && root.cols() == 1, "backward(): root must be a scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order of the recorded graph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && child->backward_fn && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(n->grad);
  }
  // Interior gradients are not needed after the sweep.
  for (Node* n : order) {
    if (n->backward_fn) n->grad.resize(0, 0);
  }
}

Index conv_output_length(Index input_length, Index kernel, Index stride) {
  if (input_length < kernel) return 0;
  return (input_length - kernel) / stride + 1;
}

// ---- arithmetic --------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Node* pa = a.node();
  Node* pb = b.node();
  return make_op(a.value() + b.value(), {a, b}, [pa, pb](const Matrix& g) {
    flow(pa, g);
    flow(pb, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Node* pa = a.node();
  Node* pb = b.node();
  return make_op(a.value() - b.value(), {a, b}, [pa, pb](const Matrix& g) {
    flow(pa, g);
    if (pb->requires_grad) pb->accumulate(-g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Node* pa = a.node();
  Node* pb = b.node();
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [pa, pb](const Matrix& g) {
    if (pa->requires_grad) pa->accumulate(g.cwiseProduct(pb->value));
    if (pb->requires_grad) pb->accumulate(g.cwiseProduct(pa->value));
  });
}

Var scale(const Var& a, double c) {
  Node* pa = a.node();
  return make_op(a.value() * c, {a}, [pa, c](const Matrix& g) { flow(pa, g * c); });
}

Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: row must be 1 x cols");
  Node* pa = a.node();
  Node* pr = row.node();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_op(std::move(out), {a, row}, [pa, pr](const Matrix& g) {
    flow(pa, g);
    if (pr->requires_grad) pr->accumulate(g.colwise().sum());
  });
}

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Node* pa = a.node();
  Node* pb = b.node();
  return make_op(a.value() * b.value(), {a, b}, [pa, pb](const Matrix& g) {
    if (pa->requires_grad) pa->accumulate(g * pb->value.transpose());
    if (pb->requires_grad) pb->accumulate(pa->value.transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  Node* pa = a.node();
  Node* pb = b.node();
  return make_op(a.value() * b.value().transpose(), {a, b}, [pa, pb](const Matrix& g) {
    if (pa->requires_grad) pa->accumulate(g * pb->value);
    if (pb->requires_grad) pb->accumulate(g.transpose() * pa->value);
  });
}

Var transpose(const Var& a) {
  Node* pa = a.node();
  Matrix t = a.value().transpose();
  return make_op(std::move(t), {a}, [pa](const Matrix& g) {
    if (pa->requires_grad) pa->accumulate(g.transpose());
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require(x.cols() == weight.cols(), "linear: input width " + std::to_string(x.cols()) +
                                         " does not match weight " +
                                         std::to_string(weight.cols()));
  Matrix out = x.value() * weight.value().transpose();
  std::vector<Var> inputs{x, weight};
  Node* pb = nullptr;
  if (bias.defined()) {
    require(bias.rows() == 1 && bias.cols() == weight.rows(), "linear: bias shape");
    out.rowwise() += bias.value().row(0);
    inputs.push_back(bias);
    pb = bias.node();
  }
  Node* px = x.node();
  Node* pw = weight.node();
  return make_op(std::move(out), std::move(inputs), [px, pw, pb](const Matrix& g) {
    if (px->requires_grad) px->accumulate(g * pw->value);
    if (pw->requires_grad) pw->accumulate(g.transpose() * px->value);
    if (pb && pb->requires_grad) pb->accumulate(g.colwise().sum());
  });
}

// ---- nonlinearities ----------------------------------------------------

Var relu(const Var& a) {
  Node* pa = a.node();
  // NaN passes through so that numerical failures stay visible.
  Matrix out = (a.value().array() < 0.0).select(0.0, a.value());
  return make_op(std::move(out), {a}, [pa](const Matrix& g) {
    if (!pa->requires_grad) return;
    Matrix d = (pa->value.array() > 0.0).select(g, 0.0);
    pa->accumulate(d);
  });
}

Var prelu(const Var& a, const Var& slope) {
  require(slope.rows() == 1 && slope.cols() == 1, "prelu: slope must be 1x1");
  const double s = slope.value()(0, 0);
  Matrix out = (a.value().array() > 0.0).select(a.value(), a.value() * s);
  Node* pa = a.node();
  Node* ps = slope.node();
  return make_op(std::move(out), {a, slope}, [pa, ps](const Matrix& g) {
    const double s = ps->value(0, 0);
    auto pos = pa->value.array() > 0.0;
    if (pa->requires_grad) {
      Matrix d = pos.select(g, g * s);
      pa->accumulate(d);
    }
    if (ps->requires_grad) {
      Matrix gx = pos.select(Matrix::Zero(g.rows(), g.cols()), g.cwiseProduct(pa->value));
      Matrix d(1, 1);
      d(0, 0) = gx.sum();
      ps->accumulate(d);
    }
  });
}

Var sigmoid(const Var& a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  Node* pa = a.node();
  auto holder = std::make_shared<Matrix>(out);
  return make_op(std::move(out), {a}, [pa, holder](const Matrix& g) {
    if (!pa->requires_grad) return;
    const Matrix& y = *holder;
    pa->accumulate((g.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh().matrix();
  auto holder = std::make_shared<Matrix>(out);
  Node* pa = a.node();
  return make_op(std::move(out), {a}, [pa, holder](const Matrix& g) {
    if (!pa->requires_grad) return;
    const Matrix& y = *holder;
    pa->accumulate((g.array() * (1.0 - y.array().square())).matrix());
  });
}

Var softmax_rows(const Var& a) {
  Matrix out(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    const double m = a.value().row(r).maxCoeff();
    out.row(r) = (a.value().row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  auto holder = std::make_shared<Matrix>(out);
  Node* pa = a.node();
  return make_op(std::move(out), {a}, [pa, holder](const Matrix& g) {
    if (!pa->requires_grad) return;
    const Matrix& y = *holder;
    Eigen::VectorXd dots = (g.cwiseProduct(y)).rowwise().sum();
    Matrix d = y.cwiseProduct(g.colwise() - dots);
    pa->accumulate(d);
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Index n = x.rows();
  const Index d = x.cols();
  require(gain.rows() == 1 && gain.cols() == d && bias.rows() == 1 && bias.cols() == d,
          "layer_norm: gain/bias must be 1 x width");
  auto xhat = std::make_shared<Matrix>(n, d);
  auto inv_std = std::make_shared<Eigen::VectorXd>(n);
  for (Index r = 0; r < n; ++r) {
    const double mean = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mean).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)(r) = is;
    xhat->row(r) = (x.value().row(r).array() - mean) * is;
  }
  Matrix out = xhat->array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  Node* px = x.node();
  Node* pg = gain.node();
  Node* pb = bias.node();
  return make_op(std::move(out), {x, gain, bias}, [px, pg, pb, xhat, inv_std](const Matrix& g) {
    const Index d = g.cols();
    if (pg->requires_grad) pg->accumulate(g.cwiseProduct(*xhat).colwise().sum());
    if (pb->requires_grad) pb->accumulate(g.colwise().sum());
    if (!px->requires_grad) return;
    Matrix gh = g.array().rowwise() * pg->value.row(0).array();
    Matrix dx(g.rows(), d);
    for (Index r = 0; r < g.rows(); ++r) {
      const double m1 = gh.row(r).mean();
      const double m2 = gh.row(r).dot(xhat->row(r)) / static_cast<double>(d);
      dx.row(r) = (*inv_std)(r) * (gh.row(r).array() - m1 - xhat->row(r).array() * m2);
    }
    px->accumulate(dx);
  });
}

Var dropout(const Var& x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  auto mask = std::make_shared<Matrix>(x.rows(), x.cols());
  const double s = 1.0 / (1.0 - p);
  for (Index i = 0; i < mask->size(); ++i) mask->data()[i] = keep(rng) ? s : 0.0;
  Node* px = x.node();
  return make_op(x.value().cwiseProduct(*mask), {x}, [px, mask](const Matrix& g) {
    if (px->requires_grad) px->accumulate(g.cwiseProduct(*mask));
  });
}

// ---- shape and indexing ------------------------------------------------

Var concat_cols(const Var& a, const Var& b) {
  require(a.rows() == b.rows(), "concat_cols: row counts differ");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  Node* pa = a.node();
  Node* pb = b.node();
  const Index ca = a.cols();
  const Index cb = b.cols();
  return make_op(std::move(out), {a, b}, [pa, pb, ca, cb](const Matrix& g) {
    if (pa->requires_grad) pa->accumulate(g.leftCols(ca));
    if (pb->requires_grad) pb->accumulate(g.rightCols(cb));
  });
}

Var slice_rows(const Var& a, Index begin, Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= a.rows(), "slice_rows: out of range");
  Node* pa = a.node();
  return make_op(a.value().middleRows(begin, count), {a}, [pa, begin, count](const Matrix& g) {
    if (!pa->requires_grad) return;
    pa->grad_buffer().middleRows(begin, count) += g;
  });
}

Var slice_cols(const Var& a, Index begin, Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= a.cols(), "slice_cols: out of range");
  Node* pa = a.node();
  return make_op(a.value().middleCols(begin, count), {a}, [pa, begin, count](const Matrix& g) {
    if (!pa->requires_grad) return;
    pa->grad_buffer().middleCols(begin, count) += g;
  });
}

Var reshape(const Var& a, Index rows, Index cols) {
  require(rows * cols == a.value().size(), "reshape: element count differs");
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  Node* pa = a.node();
  const Index r0 = a.rows();
  const Index c0 = a.cols();
  return make_op(std::move(out), {a}, [pa, r0, c0](const Matrix& g) {
    if (pa->requires_grad) pa->accumulate(Eigen::Map<const Matrix>(g.data(), r0, c0));
  });
}

Var gather_rows(const Var& x, std::vector<Index> index) {
  const Index n = static_cast<Index>(index.size());
  Matrix out = Matrix::Zero(n, x.cols());
  for (Index i = 0; i < n; ++i) {
    const Index src = index[static_cast<size_t>(i)];
    require(src < x.rows(), "gather_rows: index out of range");
    if (src >= 0) out.row(i) = x.value().row(src);
  }
  Node* px = x.node();
  auto idx = std::make_shared<std::vector<Index>>(std::move(index));
  return make_op(std::move(out), {x}, [px, idx](const Matrix& g) {
    if (!px->requires_grad) return;
    Matrix& buf = px->grad_buffer();
    for (size_t i = 0; i < idx->size(); ++i) {
      const Index src = (*idx)[i];
      if (src >= 0) buf.row(src) += g.row(static_cast<Index>(i));
    }
  });
}

Var scatter_add_rows(const Var& x, std::vector<Index> index, Index out_rows) {
  require(static_cast<Index>(index.size()) == x.rows(), "scatter_add_rows: index size");
  Matrix out = Matrix::Zero(out_rows, x.cols());
  for (size_t i = 0; i < index.size(); ++i) {
    const Index dst = index[i];
    require(dst < out_rows, "scatter_add_rows: index out of range");
    if (dst >= 0) out.row(dst) += x.value().row(static_cast<Index>(i));
  }
  Node* px = x.node();
  auto idx = std::make_shared<std::vector<Index>>(std::move(index));
  return make_op(std::move(out), {x}, [px, idx](const Matrix& g) {
    if (!px->requires_grad) return;
    Matrix d = Matrix::Zero(static_cast<Index>(idx->size()), g.cols());
    for (size_t i = 0; i < idx->size(); ++i) {
      const Index dst = (*idx)[i];
      if (dst >= 0) d.row(static_cast<Index>(i)) = g.row(dst);
    }
    px->accumulate(d);
  });
}

Var blend_rows(const Var& x, std::vector<Index> lo, std::vector<Index> hi, std::vector<double> w) {
  require(lo.size() == hi.size() && lo.size() == w.size(), "blend_rows: size mismatch");
  const Index n = static_cast<Index>(lo.size());
  Matrix out(n, x.cols());
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<size_t>(i);
    require(lo[k] >= 0 && lo[k] < x.rows() && hi[k] >= 0 && hi[k] < x.rows(),
            "blend_rows: index out of range");
    out.row(i) = (1.0 - w[k]) * x.value().row(lo[k]) + w[k] * x.value().row(hi[k]);
  }
  Node* px = x.node();
  auto plo = std::make_shared<std::vector<Index>>(std::move(lo));
  auto phi = std::make_shared<std::vector<Index>>(std::move(hi));
  auto pw = std::make_shared<std::vector<double>>(std::move(w));
  return make_op(std::move(out), {x}, [px, plo, phi, pw](const Matrix& g) {
    if (!px->requires_grad) return;
    Matrix& buf = px->grad_buffer();
    for (size_t i = 0; i < plo->size(); ++i) {
      const Index r = static_cast<Index>(i);
      buf.row((*plo)[i]) += (1.0 - (*pw)[i]) * g.row(r);
      buf.row((*phi)[i]) += (*pw)[i] * g.row(r);
    }
  });
}

Var frame(const Var& x, Index kernel, Index stride) {
  require(kernel > 0 && stride > 0, "frame: kernel and stride must be positive");
  const Index t_in = x.rows();
  const Index c = x.cols();
  const Index t_out = conv_output_length(t_in, kernel, stride);
  require(t_out >= 1, "frame: input of length " + std::to_string(t_in) +
                          " is shorter than the kernel (" + std::to_string(kernel) + ")");
  Matrix out(t_out, c * kernel);
  const Matrix& xv = x.value();
  for (Index t = 0; t < t_out; ++t) {
    for (Index ch = 0; ch < c; ++ch) {
      for (Index k = 0; k < kernel; ++k) out(t, ch * kernel + k) = xv(t * stride + k, ch);
    }
  }
  Node* px = x.node();
  return make_op(std::move(out), {x}, [px, kernel, stride, t_in, c](const Matrix& g) {
    if (!px->requires_grad) return;
    Matrix d = Matrix::Zero(t_in, c);
    for (Index t = 0; t < g.rows(); ++t) {
      for (Index ch = 0; ch < c; ++ch) {
        for (Index k = 0; k < kernel; ++k) d(t * stride + k, ch) += g(t, ch * kernel + k);
      }
    }
    px->accumulate(d);
  });
}

Var overlap_add(const Var& frames, Index stride, Index out_len) {
  require(stride > 0 && out_len > 0, "overlap_add: stride and length must be positive");
  const Index n = frames.rows();
  const Index k = frames.cols();
  Matrix out = Matrix::Zero(out_len, 1);
  const Matrix& fv = frames.value();
  for (Index t = 0; t < n; ++t) {
    for (Index j = 0; j < k; ++j) {
      const Index pos = t * stride + j;
      if (pos < out_len) out(pos, 0) += fv(t, j);
    }
  }
  Node* pf = frames.node();
  return make_op(std::move(out), {frames}, [pf, stride, out_len, n, k](const Matrix& g) {
    if (!pf->requires_grad) return;
    Matrix d = Matrix::Zero(n, k);
    for (Index t = 0; t < n; ++t) {
      for (Index j = 0; j < k; ++j) {
        const Index pos = t * stride + j;
        if (pos < out_len) d(t, j) = g(pos, 0);
      }
    }
    pf->accumulate(d);
  });
}

// ---- reductions --------------------------------------------------------

Var row_dot(const Var& a, const Var& b) {
  require_same_shape(a, b, "row_dot");
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  Node* pa = a.node();
  Node* pb = b.node();
  return make_op(std::move(out), {a, b}, [pa, pb](const Matrix& g) {
    if (pa->requires_grad) pa->accumulate(pb->value.array().colwise() * g.col(0).array());
    if (pb->requires_grad) pb->accumulate(pa->value.array().colwise() * g.col(0).array());
  });
}

Var sum_all(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  Node* pa = a.node();
  return make_op(std::move(out), {a}, [pa](const Matrix& g) {
    if (pa->requires_grad) pa->accumulate(Matrix::Constant(pa->value.rows(), pa->value.cols(), g(0, 0)));
  });
}

Var mean_all(const Var& a) {
  require(a.value().size() > 0, "mean_all: empty input");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

}  // namespace neurosteer::ag
