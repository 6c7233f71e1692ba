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

#include "neurosteer/eeg_encoder.hpp"

#include "neurosteer/errors.hpp"

namespace neurosteer::model {

EegEncoder::EegEncoder(const EegEncoderConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg),
      input_(cfg.channels, cfg.width, rng),
      transformer_({cfg.width, cfg.layers, cfg.ff_multiplier, cfg.heads, cfg.dropout}, rng) {}

SequenceEmbedding EegEncoder::encode(const Matrix& eeg, double rate, const nn::ForwardContext& ctx) const {
  if (eeg.rows() != cfg_.channels) {
    throw ShapeError("EEG encoder expects " + std::to_string(cfg_.channels) + " channels, got " +
                     std::to_string(eeg.rows()));
  }
  if (eeg.cols() < 1) throw ShapeError("EEG encoder: empty input");
  Var x = ag::constant(eeg.transpose());
  return {transformer_(input_(x), ctx), rate};
}

void EegEncoder::collect(const std::string& prefix, nn::ParamList& out) {
  input_.collect(prefix + ".input", out);
  transformer_.collect(prefix + ".transformer", out);
}

}  // namespace neurosteer::model
