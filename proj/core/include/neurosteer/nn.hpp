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

// Layer building blocks shared by the encoders, the extractor and the
// attention detector. Sequences are time-major (L x width) matrices.
#pragma once

#include <random>
#include <string>
#include <vector>

#include "neurosteer/autograd.hpp"

namespace neurosteer::nn {

using ag::Index;
using ag::Matrix;
using ag::Var;

struct NamedParam {
  std::string name;
  Var* var;
};
using ParamList = std::vector<NamedParam>;

// Dropout is active only when `training` is set; then `rng` must be non-null.
struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

Matrix uniform_init(Index rows, Index cols, double bound, std::mt19937_64& rng);

class Linear {
 public:
  Linear() = default;
  Linear(Index in, Index out, std::mt19937_64& rng, bool with_bias = true);

  Var operator()(const Var& x) const;
  void collect(const std::string& prefix, ParamList& out);

  Var weight;  // out x in
  Var bias;    // 1 x out, may be undefined
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(Index width);

  Var operator()(const Var& x) const;
  void collect(const std::string& prefix, ParamList& out);

  Var gain;
  Var bias;
};

// Valid (unpadded) strided 1-D convolution over a (T x C_in) sequence.
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(Index in_channels, Index out_channels, Index kernel, Index stride, std::mt19937_64& rng,
         bool with_bias = true);

  Var operator()(const Var& x) const;
  Index output_length(Index input_length) const;
  void collect(const std::string& prefix, ParamList& out);

  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel = 0;
  Index stride = 1;
  Var weight;  // out x (in * kernel)
  Var bias;
};

// Unidirectional LSTM run over B independent sequences at once. Input rows are
// ordered time-major: row t*B + b holds step t of sequence b.
class Lstm {
 public:
  Lstm() = default;
  Lstm(Index input, Index hidden, std::mt19937_64& rng);

  Var operator()(const Var& x, Index batch, bool reverse) const;
  void collect(const std::string& prefix, ParamList& out);

  Index hidden = 0;
  Var w_ih;  // 4H x D, gate order i, f, g, o
  Var w_hh;  // 4H x H
  Var bias;  // 1 x 4H
};

class BiLstm {
 public:
  BiLstm() = default;
  BiLstm(Index input, Index hidden, std::mt19937_64& rng);

  // Returns (T*B x 2H): forward states then backward states.
  Var operator()(const Var& x, Index batch) const;
  void collect(const std::string& prefix, ParamList& out);

  Lstm forward_dir;
  Lstm backward_dir;
};

struct TransformerConfig {
  Index width = 64;
  Index layers = 5;
  Index ff_multiplier = 4;
  Index heads = 1;
  double dropout = 0.1;
};

// Pre-norm residual block: x + Attn(LN(x)), then x + FFN(LN(x)).
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(const TransformerConfig& cfg, std::mt19937_64& rng);

  Var operator()(const Var& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamList& out);

 private:
  Var attention(const Var& x, const ForwardContext& ctx) const;

  Index width_ = 0;
  Index heads_ = 1;
  double dropout_ = 0.0;
  LayerNorm norm_attn_;
  LayerNorm norm_ff_;
  Linear query_;
  Linear key_;
  Linear value_;
  Linear out_;
  Linear ff_in_;
  Linear ff_out_;
};

// Sinusoidal positional encoding followed by a stack of blocks and a final norm.
class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(const TransformerConfig& cfg, std::mt19937_64& rng);

  Var operator()(const Var& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamList& out);

 private:
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_norm_;
};

// Standard sin/cos table, (length x width).
Matrix sinusoidal_positions(Index length, Index width);

Var maybe_dropout(const Var& x, double p, const ForwardContext& ctx);

}  // namespace neurosteer::nn
