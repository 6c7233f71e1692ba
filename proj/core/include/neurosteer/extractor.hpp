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

// Time-domain speech extractor: a convolutional waveform encoder, an
// EEG-fused dual-path recurrent masking network, and an overlap-add decoder
// that emits the target estimate on stream 0 and the interferer on stream 1.
#pragma once

#include <random>
#include <string>
#include <vector>

#include "neurosteer/eeg_encoder.hpp"
#include "neurosteer/nn.hpp"
#include "neurosteer/signals.hpp"

namespace neurosteer::model {

enum class MaskActivation { kRelu, kSigmoid };
enum class Upsampling { kNearest, kLinear };

struct ExtractorConfig {
  Index width = 64;   // N
  Index kernel = 16;  // encoder/decoder kernel in samples
  Index stride = 8;
  Index blocks = 4;   // dual-path blocks
  Index chunk = 100;  // frames per chunk, hop is chunk / 2
  Index hidden = 128; // LSTM units per direction
  bool use_eeg = true;  // false gives the EEG-free separator used for PIT baselines
  MaskActivation mask = MaskActivation::kRelu;
  Upsampling upsample = Upsampling::kNearest;
};

// Both estimates are (T x 1) columns of the input length.
struct ExtractorOutput {
  Var s_hat;
  Var b_hat;
};

Var to_column(const signals::AudioSignal& x);
signals::AudioSignal to_audio(const Var& column, double rate = signals::kAudioRate);

class SpeechEncoder {
 public:
  SpeechEncoder() = default;
  SpeechEncoder(const ExtractorConfig& cfg, std::mt19937_64& rng);

  // Conv1D(1 -> N) + ReLU over a (T x 1) waveform; frame rate 8000 / stride.
  SequenceEmbedding encode(const Var& wave) const;
  // Convolution output before the ReLU.
  Var pre_activation(const Var& wave) const;
  void collect(const std::string& prefix, nn::ParamList& out);

  const nn::Conv1d& conv() const { return conv_; }

 private:
  nn::Conv1d conv_;
};

// Maps each target frame to an EEG frame by time (nearest preceding frame or
// linear interpolation) and clamps past the end of the EEG sequence.
Var upsample_frames(const SequenceEmbedding& source, Index target_length, double target_rate,
                    Upsampling mode);

class Fusion {
 public:
  Fusion() = default;
  Fusion(Index width, Upsampling mode, std::mt19937_64& rng);

  // Upsample EEG to the speech frame grid, concatenate (2N) and project to N.
  SequenceEmbedding operator()(const SequenceEmbedding& eeg_rep, const SequenceEmbedding& speech) const;
  void collect(const std::string& prefix, nn::ParamList& out);

 private:
  Upsampling mode_ = Upsampling::kNearest;
  nn::Linear proj_;
};

// Chunk bookkeeping for the dual-path network.
struct ChunkLayout {
  Index length = 0;  // frames in the sequence
  Index chunk = 0;   // K
  Index hop = 0;     // P
  Index chunks = 0;  // S
  // intra-layout row k*S + s -> sequence frame (or -1 for padding)
  std::vector<Index> frame_of_row;
  // inter-layout row s*K + k -> intra-layout row
  std::vector<Index> intra_to_inter;
  std::vector<Index> inter_to_intra;

  static ChunkLayout make(Index length, Index chunk);
};

class DualPathBlock {
 public:
  DualPathBlock() = default;
  DualPathBlock(Index width, Index hidden, std::mt19937_64& rng);

  // x is in intra layout (K*S x N).
  Var operator()(const Var& x, const ChunkLayout& layout) const;
  void collect(const std::string& prefix, nn::ParamList& out);

 private:
  nn::BiLstm intra_rnn_;
  nn::Linear intra_proj_;
  nn::LayerNorm intra_norm_;
  nn::BiLstm inter_rnn_;
  nn::Linear inter_proj_;
  nn::LayerNorm inter_norm_;
};

class Extractor {
 public:
  Extractor() = default;
  Extractor(const ExtractorConfig& cfg, std::mt19937_64& rng);

  // `mixture` is a (T x 1) column. `eeg_rep` is ignored (and may be null) when
  // the extractor was built without EEG fusion.
  ExtractorOutput extract(const Var& mixture, const SequenceEmbedding* eeg_rep,
                          const nn::ForwardContext& ctx) const;

  // Mask tensors of the last stage (for inspection in tests).
  struct Masks {
    Var target;
    Var interferer;
  };
  ExtractorOutput extract(const Var& mixture, const SequenceEmbedding* eeg_rep,
                          const nn::ForwardContext& ctx, Masks* masks) const;

  void collect(const std::string& prefix, nn::ParamList& out);

  const ExtractorConfig& config() const { return cfg_; }
  const SpeechEncoder& speech_encoder() const { return encoder_; }
  const Fusion& fusion() const { return fusion_; }

 private:
  ExtractorConfig cfg_;
  SpeechEncoder encoder_;
  Fusion fusion_;
  nn::Linear bottleneck_;  // only without EEG
  std::vector<DualPathBlock> blocks_;
  Var out_slope_;  // PReLU before the mask heads
  nn::Linear mask_target_;
  nn::Linear mask_interferer_;
  nn::Linear decoder_;  // N -> kernel, no bias
};

}  // namespace neurosteer::model
