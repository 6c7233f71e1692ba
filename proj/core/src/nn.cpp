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

#include "neurosteer/nn.hpp"

#include <cmath>
#include <memory>

#include "neurosteer/errors.hpp"

namespace neurosteer::nn {

Matrix uniform_init(Index rows, Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// ---- Linear ------------------------------------------------------------

Linear::Linear(Index in, Index out, std::mt19937_64& rng, bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = ag::leaf(uniform_init(out, in, bound, rng));
  if (with_bias) bias = ag::leaf(uniform_init(1, out, bound, rng));
}

Var Linear::operator()(const Var& x) const { return ag::linear(x, weight, bias); }

void Linear::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".weight", &weight});
  if (bias.defined()) out.push_back({prefix + ".bias", &bias});
}

// ---- LayerNorm ---------------------------------------------------------

LayerNorm::LayerNorm(Index width)
    : gain(ag::leaf(Matrix::Ones(1, width))), bias(ag::leaf(Matrix::Zero(1, width))) {}

Var LayerNorm::operator()(const Var& x) const { return ag::layer_norm(x, gain, bias); }

void LayerNorm::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".gain", &gain});
  out.push_back({prefix + ".bias", &bias});
}

// ---- Conv1d ------------------------------------------------------------

Conv1d::Conv1d(Index in_ch, Index out_ch, Index k, Index s, std::mt19937_64& rng, bool with_bias)
    : in_channels(in_ch), out_channels(out_ch), kernel(k), stride(s) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * k));
  weight = ag::leaf(uniform_init(out_ch, in_ch * k, bound, rng));
  if (with_bias) bias = ag::leaf(uniform_init(1, out_ch, bound, rng));
}

Var Conv1d::operator()(const Var& x) const {
  if (x.cols() != in_channels) {
    throw ShapeError("Conv1d: expected " + std::to_string(in_channels) + " input channels, got " +
                     std::to_string(x.cols()));
  }
  return ag::linear(ag::frame(x, kernel, stride), weight, bias);
}

Index Conv1d::output_length(Index input_length) const {
  return ag::conv_output_length(input_length, kernel, stride);
}

void Conv1d::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".weight", &weight});
  if (bias.defined()) out.push_back({prefix + ".bias", &bias});
}

// ---- LSTM --------------------------------------------------------------

Lstm::Lstm(Index input, Index h, std::mt19937_64& rng) : hidden(h) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  w_ih = ag::leaf(uniform_init(4 * h, input, bound, rng));
  w_hh = ag::leaf(uniform_init(4 * h, h, bound, rng));
  bias = ag::leaf(uniform_init(1, 4 * h, bound, rng));
}

namespace {

struct LstmTape {
  Matrix gates;  // activated i, f, g, o per row
  Matrix cells;
  Matrix hiddens;
};

inline double sigm(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Var Lstm::operator()(const Var& x, Index batch, bool reverse) const {
  const Index h = hidden;
  if (batch <= 0 || x.rows() % batch != 0) throw ShapeError("Lstm: rows not divisible by batch");
  if (x.cols() != w_ih.cols()) throw ShapeError("Lstm: input width mismatch");
  const Index steps = x.rows() / batch;

  auto tape = std::make_shared<LstmTape>();
  tape->gates = x.value() * w_ih.value().transpose();
  tape->gates.rowwise() += bias.value().row(0);
  tape->cells.resize(x.rows(), h);
  tape->hiddens.resize(x.rows(), h);

  Matrix h_prev = Matrix::Zero(batch, h);
  Matrix c_prev = Matrix::Zero(batch, h);
  const Matrix w_hh_t = w_hh.value().transpose();
  for (Index s = 0; s < steps; ++s) {
    const Index t = reverse ? steps - 1 - s : s;
    auto g = tape->gates.middleRows(t * batch, batch);
    g.noalias() += h_prev * w_hh_t;
    for (Index b = 0; b < batch; ++b) {
      for (Index j = 0; j < h; ++j) {
        const double ig = sigm(g(b, j));
        const double fg = sigm(g(b, h + j));
        const double gg = std::tanh(g(b, 2 * h + j));
        const double og = sigm(g(b, 3 * h + j));
        g(b, j) = ig;
        g(b, h + j) = fg;
        g(b, 2 * h + j) = gg;
        g(b, 3 * h + j) = og;
        const double c = fg * c_prev(b, j) + ig * gg;
        c_prev(b, j) = c;
        h_prev(b, j) = og * std::tanh(c);
      }
    }
    tape->cells.middleRows(t * batch, batch) = c_prev;
    tape->hiddens.middleRows(t * batch, batch) = h_prev;
  }

  ag::Node* px = x.node();
  ag::Node* pih = w_ih.node();
  ag::Node* phh = w_hh.node();
  ag::Node* pb = bias.node();
  Matrix out = tape->hiddens;
  return ag::make_op(
      std::move(out), {x, w_ih, w_hh, bias},
      [px, pih, phh, pb, tape, batch, steps, h, reverse](const Matrix& grad_out) {
        Matrix d_pre(grad_out.rows(), 4 * h);
        Matrix dh_next = Matrix::Zero(batch, h);
        Matrix dc_next = Matrix::Zero(batch, h);
        Matrix d_whh = Matrix::Zero(4 * h, h);
        const Matrix& whh = phh->value;
        for (Index s = steps - 1; s >= 0; --s) {
          const Index t = reverse ? steps - 1 - s : s;
          const Index prev = reverse ? t + 1 : t - 1;
          const bool has_prev = s > 0;
          auto gates = tape->gates.middleRows(t * batch, batch);
          auto dp = d_pre.middleRows(t * batch, batch);
          for (Index b = 0; b < batch; ++b) {
            for (Index j = 0; j < h; ++j) {
              const double ig = gates(b, j);
              const double fg = gates(b, h + j);
              const double gg = gates(b, 2 * h + j);
              const double og = gates(b, 3 * h + j);
              const double c = tape->cells(t * batch + b, j);
              const double c_old = has_prev ? tape->cells(prev * batch + b, j) : 0.0;
              const double tc = std::tanh(c);
              const double dh = grad_out(t * batch + b, j) + dh_next(b, j);
              const double d_o = dh * tc;
              const double dc = dh * og * (1.0 - tc * tc) + dc_next(b, j);
              dp(b, j) = dc * gg * ig * (1.0 - ig);
              dp(b, h + j) = dc * c_old * fg * (1.0 - fg);
              dp(b, 2 * h + j) = dc * ig * (1.0 - gg * gg);
              dp(b, 3 * h + j) = d_o * og * (1.0 - og);
              dc_next(b, j) = dc * fg;
            }
          }
          dh_next.noalias() = dp * whh;
          if (has_prev) d_whh.noalias() += dp.transpose() * tape->hiddens.middleRows(prev * batch, batch);
        }
        if (px->requires_grad) px->accumulate(d_pre * pih->value);
        if (pih->requires_grad) pih->accumulate(d_pre.transpose() * px->value);
        if (phh->requires_grad) phh->accumulate(d_whh);
        if (pb->requires_grad) pb->accumulate(d_pre.colwise().sum());
      });
}

void Lstm::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".w_ih", &w_ih});
  out.push_back({prefix + ".w_hh", &w_hh});
  out.push_back({prefix + ".bias", &bias});
}

BiLstm::BiLstm(Index input, Index hidden, std::mt19937_64& rng)
    : forward_dir(input, hidden, rng), backward_dir(input, hidden, rng) {}

Var BiLstm::operator()(const Var& x, Index batch) const {
  return ag::concat_cols(forward_dir(x, batch, false), backward_dir(x, batch, true));
}

void BiLstm::collect(const std::string& prefix, ParamList& out) {
  forward_dir.collect(prefix + ".fwd", out);
  backward_dir.collect(prefix + ".bwd", out);
}

// ---- Transformer -------------------------------------------------------

Var maybe_dropout(const Var& x, double p, const ForwardContext& ctx) {
  if (!ctx.training || p <= 0.0) return x;
  if (ctx.rng == nullptr) throw Error("dropout in training mode needs an rng");
  return ag::dropout(x, p, *ctx.rng);
}

TransformerBlock::TransformerBlock(const TransformerConfig& cfg, std::mt19937_64& rng)
    : width_(cfg.width),
      heads_(cfg.heads),
      dropout_(cfg.dropout),
      norm_attn_(cfg.width),
      norm_ff_(cfg.width),
      query_(cfg.width, cfg.width, rng),
      key_(cfg.width, cfg.width, rng),
      value_(cfg.width, cfg.width, rng),
      out_(cfg.width, cfg.width, rng),
      ff_in_(cfg.width, cfg.width * cfg.ff_multiplier, rng),
      ff_out_(cfg.width * cfg.ff_multiplier, cfg.width, rng) {
  if (cfg.heads < 1 || cfg.width % cfg.heads != 0) {
    throw ShapeError("TransformerBlock: width must be divisible by heads");
  }
}

Var TransformerBlock::attention(const Var& x, const ForwardContext& ctx) const {
  Var q = query_(x);
  Var k = key_(x);
  Var v = value_(x);
  const Index head_dim = width_ / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Var merged;
  for (Index hd = 0; hd < heads_; ++hd) {
    Var qh = heads_ == 1 ? q : ag::slice_cols(q, hd * head_dim, head_dim);
    Var kh = heads_ == 1 ? k : ag::slice_cols(k, hd * head_dim, head_dim);
    Var vh = heads_ == 1 ? v : ag::slice_cols(v, hd * head_dim, head_dim);
    Var weights = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt));
    weights = maybe_dropout(weights, dropout_, ctx);
    Var ctx_h = ag::matmul(weights, vh);
    merged = hd == 0 ? ctx_h : ag::concat_cols(merged, ctx_h);
  }
  return out_(merged);
}

Var TransformerBlock::operator()(const Var& x, const ForwardContext& ctx) const {
  Var y = ag::add(x, maybe_dropout(attention(norm_attn_(x), ctx), dropout_, ctx));
  Var ff = ff_out_(maybe_dropout(ag::relu(ff_in_(norm_ff_(y))), dropout_, ctx));
  return ag::add(y, maybe_dropout(ff, dropout_, ctx));
}

void TransformerBlock::collect(const std::string& prefix, ParamList& out) {
  norm_attn_.collect(prefix + ".norm_attn", out);
  query_.collect(prefix + ".query", out);
  key_.collect(prefix + ".key", out);
  value_.collect(prefix + ".value", out);
  out_.collect(prefix + ".out", out);
  norm_ff_.collect(prefix + ".norm_ff", out);
  ff_in_.collect(prefix + ".ff_in", out);
  ff_out_.collect(prefix + ".ff_out", out);
}

TransformerEncoder::TransformerEncoder(const TransformerConfig& cfg, std::mt19937_64& rng)
    : final_norm_(cfg.width) {
  blocks_.reserve(static_cast<size_t>(cfg.layers));
  for (Index i = 0; i < cfg.layers; ++i) blocks_.emplace_back(cfg, rng);
}

Var TransformerEncoder::operator()(const Var& x, const ForwardContext& ctx) const {
  Var h = ag::add(x, ag::constant(sinusoidal_positions(x.rows(), x.cols())));
  for (const auto& block : blocks_) h = block(h, ctx);
  return final_norm_(h);
}

void TransformerEncoder::collect(const std::string& prefix, ParamList& out) {
  for (size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(prefix + ".layer" + std::to_string(i), out);
  final_norm_.collect(prefix + ".final_norm", out);
}

Matrix sinusoidal_positions(Index length, Index width) {
  Matrix pe(length, width);
  for (Index pos = 0; pos < length; ++pos) {
    for (Index i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) * rate;
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

}  // namespace neurosteer::nn
