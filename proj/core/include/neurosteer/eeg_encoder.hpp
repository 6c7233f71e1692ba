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

#pragma once

#include <random>
#include <string>

#include "neurosteer/autograd.hpp"
#include "neurosteer/nn.hpp"

namespace neurosteer::model {

using ag::Index;
using ag::Matrix;
using ag::Var;

// Time-major (L x N) feature sequence with its frame rate.
struct SequenceEmbedding {
  Var frames;
  double frame_rate = 0.0;

  Index length() const { return frames.rows(); }
  Index width() const { return frames.cols(); }
};

// Depth, head count, feedforward width and dropout default to the stimulus
// encoder settings; all of them are configurable.
struct EegEncoderConfig {
  Index channels = 64;
  Index width = 64;
  Index layers = 5;
  Index heads = 1;
  Index ff_multiplier = 4;
  double dropout = 0.1;
};

class EegEncoder {
 public:
  EegEncoder() = default;
  EegEncoder(const EegEncoderConfig& cfg, std::mt19937_64& rng);

  // `eeg` is (C x T_r) channel-major; the result has T_r frames of width N.
  SequenceEmbedding encode(const Matrix& eeg, double rate, const nn::ForwardContext& ctx) const;
  void collect(const std::string& prefix, nn::ParamList& out);

  const EegEncoderConfig& config() const { return cfg_; }

 private:
  EegEncoderConfig cfg_;
  nn::Linear input_;
  nn::TransformerEncoder transformer_;
};

}  // namespace neurosteer::model
