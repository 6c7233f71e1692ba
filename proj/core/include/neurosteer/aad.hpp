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

// Auditory attention detector. Two candidate stimuli and the EEG
// representation are mapped into a shared space; frame-wise inner products
// against the EEG give two score sequences, and a small convolutional decoder
// turns them into the probability that the FIRST presented stimulus is the
// attended one.
#pragma once

#include <random>
#include <string>

#include "neurosteer/eeg_encoder.hpp"
#include "neurosteer/nn.hpp"

namespace neurosteer::model {

struct AadConfig {
  Index width = 64;  // N
  Index stim_kernel = 120;
  Index stim_stride = 60;
  Index stim_layers = 5;
  Index heads = 1;
  Index ff_multiplier = 4;
  double dropout = 0.1;
  Index decoder_kernel = 15;
  Index decoder_stride = 7;
};

// Conv1D(1 -> 2N, k120, s60) + ReLU + LayerNorm + Linear(2N -> N), then
// positional encoding and the self-attention stack.
class StimulusEncoder {
 public:
  StimulusEncoder() = default;
  StimulusEncoder(const AadConfig& cfg, std::mt19937_64& rng);

  SequenceEmbedding encode(const Var& wave, const nn::ForwardContext& ctx) const;
  Index output_length(Index samples) const { return conv_.output_length(samples); }
  void collect(const std::string& prefix, nn::ParamList& out);

 private:
  nn::Conv1d conv_;
  nn::LayerNorm norm_;
  nn::Linear proj_;
  nn::TransformerEncoder transformer_;
};

class EegAdapter {
 public:
  EegAdapter() = default;
  EegAdapter(Index width, std::mt19937_64& rng);

  SequenceEmbedding operator()(const SequenceEmbedding& eeg_rep) const;
  void set_identity();
  void collect(const std::string& prefix, nn::ParamList& out);

  nn::Linear& linear() { return linear_; }

 private:
  nn::Linear linear_;
};

// Per-frame inner products of two equal-shape sequences (L x 1).
Var similarity(const Var& eeg_rep, const Var& stim_rep);

// Minimum score length for which both decoder convolutions emit a frame.
Index min_decision_length(const AadConfig& cfg);

class AttentionDecoder {
 public:
  AttentionDecoder() = default;
  AttentionDecoder(const AadConfig& cfg, std::mt19937_64& rng);

  // Pre-sigmoid decision value (1 x 1).
  Var logit(const Var& score_a, const Var& score_b) const;
  // y_hat = sigmoid(logit) (1 x 1).
  Var decide(const Var& score_a, const Var& score_b) const;
  void collect(const std::string& prefix, nn::ParamList& out);

  nn::Conv1d& first() { return conv1_; }
  nn::Conv1d& second() { return conv2_; }
  Var& slope() { return slope_; }

 private:
  Index min_length_ = 0;
  nn::Conv1d conv1_;
  Var slope_;
  nn::Conv1d conv2_;
};

class Aad {
 public:
  Aad() = default;
  Aad(const AadConfig& cfg, std::mt19937_64& rng);

  // Score sequences of both stimuli against the adapted EEG representation,
  // trimmed to their common length.
  struct Scores {
    Var a;
    Var b;
  };
  Scores scores(const SequenceEmbedding& eeg_rep, const Var& stim_a, const Var& stim_b,
                const nn::ForwardContext& ctx) const;

  // Probability that stim_a is the attended stimulus (1 x 1).
  Var forward(const SequenceEmbedding& eeg_rep, const Var& stim_a, const Var& stim_b,
              const nn::ForwardContext& ctx) const;

  void collect(const std::string& prefix, nn::ParamList& out);

  const AadConfig& config() const { return cfg_; }
  StimulusEncoder& stimulus_encoder() { return stim_; }
  EegAdapter& adapter() { return adapter_; }
  AttentionDecoder& decoder() { return decoder_; }

 private:
  AadConfig cfg_;
  EegAdapter adapter_;
  StimulusEncoder stim_;
  AttentionDecoder decoder_;
};

// Full pipeline: EEG encoder -> adapter; shared stimulus encoder on both
// stimuli; similarity; decision.
Var aad_forward(const Matrix& eeg, double eeg_rate, const Var& stim_a, const Var& stim_b,
                const EegEncoder& encoder, const Aad& aad, const nn::ForwardContext& ctx);

}  // namespace neurosteer::model
