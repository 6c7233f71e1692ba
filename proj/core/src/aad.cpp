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

#include "neurosteer/aad.hpp"

#include <algorithm>

#include "neurosteer/errors.hpp"
#include "neurosteer/signals.hpp"

namespace neurosteer::model {

StimulusEncoder::StimulusEncoder(const AadConfig& cfg, std::mt19937_64& rng)
    : conv_(1, 2 * cfg.width, cfg.stim_kernel, cfg.stim_stride, rng),
      norm_(2 * cfg.width),
      proj_(2 * cfg.width, cfg.width, rng),
      transformer_({cfg.width, cfg.stim_layers, cfg.ff_multiplier, cfg.heads, cfg.dropout}, rng) {}

SequenceEmbedding StimulusEncoder::encode(const Var& wave, const nn::ForwardContext& ctx) const {
  if (wave.cols() != 1) throw ShapeError("stimulus encoder expects a mono (T x 1) waveform");
  if (wave.rows() < conv_.kernel) {
    throw ShapeError("stimulus encoder: input of " + std::to_string(wave.rows()) +
                     " samples is shorter than the kernel (" + std::to_string(conv_.kernel) + ")");
  }
  Var h = proj_(norm_(ag::relu(conv_(wave))));
  return {transformer_(h, ctx), signals::kAudioRate / static_cast<double>(conv_.stride)};
}

void StimulusEncoder::collect(const std::string& prefix, nn::ParamList& out) {
  conv_.collect(prefix + ".conv", out);
  norm_.collect(prefix + ".norm", out);
  proj_.collect(prefix + ".proj", out);
  transformer_.collect(prefix + ".transformer", out);
}

EegAdapter::EegAdapter(Index width, std::mt19937_64& rng) : linear_(width, width, rng) {}

SequenceEmbedding EegAdapter::operator()(const SequenceEmbedding& eeg_rep) const {
  return {linear_(eeg_rep.frames), eeg_rep.frame_rate};
}

void EegAdapter::set_identity() {
  const Index n = linear_.weight.rows();
  linear_.weight.mutable_value() = Matrix::Identity(n, n);
  linear_.bias.mutable_value().setZero();
}

void EegAdapter::collect(const std::string& prefix, nn::ParamList& out) { linear_.collect(prefix + ".linear", out); }

Var similarity(const Var& eeg_rep, const Var& stim_rep) {
  if (eeg_rep.cols() != stim_rep.cols()) {
    throw ShapeError("similarity: width mismatch (" + std::to_string(eeg_rep.cols()) + " vs " +
                     std::to_string(stim_rep.cols()) + ")");
  }
  if (eeg_rep.rows() != stim_rep.rows()) throw ShapeError("similarity: sequences must be trimmed to a common length");
  return ag::row_dot(eeg_rep, stim_rep);
}

Index min_decision_length(const AadConfig& cfg) {
  // Smallest L with one frame after conv2: conv1 must emit decoder_kernel frames.
  return cfg.decoder_kernel + (cfg.decoder_kernel - 1) * cfg.decoder_stride;
}

AttentionDecoder::AttentionDecoder(const AadConfig& cfg, std::mt19937_64& rng)
    : min_length_(min_decision_length(cfg)),
      conv1_(2, 2, cfg.decoder_kernel, cfg.decoder_stride, rng),
      slope_(ag::leaf(Matrix::Constant(1, 1, 0.25))),
      conv2_(2, 1, cfg.decoder_kernel, cfg.decoder_stride, rng) {
  conv1_.bias.mutable_value().setZero();
  conv2_.bias.mutable_value().setZero();
}

Var AttentionDecoder::logit(const Var& score_a, const Var& score_b) const {
  if (score_a.rows() != score_b.rows() || score_a.cols() != 1 || score_b.cols() != 1) {
    throw ShapeError("attention decoder: score sequences must be equal-length columns");
  }
  if (score_a.rows() < min_length_) {
    throw ShapeError("attention decoder: score length " + std::to_string(score_a.rows()) +
                     " is below the minimum of " + std::to_string(min_length_) + " frames");
  }
  Var x = ag::concat_cols(score_a, score_b);  // channel order = presentation order
  Var h = ag::prelu(conv1_(x), slope_);
  return ag::mean_all(conv2_(h));
}

Var AttentionDecoder::decide(const Var& score_a, const Var& score_b) const {
  return ag::sigmoid(logit(score_a, score_b));
}

void AttentionDecoder::collect(const std::string& prefix, nn::ParamList& out) {
  conv1_.collect(prefix + ".conv1", out);
  out.push_back({prefix + ".slope", &slope_});
  conv2_.collect(prefix + ".conv2", out);
}

Aad::Aad(const AadConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg), adapter_(cfg.width, rng), stim_(cfg, rng), decoder_(cfg, rng) {}

Aad::Scores Aad::scores(const SequenceEmbedding& eeg_rep, const Var& stim_a, const Var& stim_b,
                        const nn::ForwardContext& ctx) const {
  SequenceEmbedding eeg = adapter_(eeg_rep);
  SequenceEmbedding ea = stim_.encode(stim_a, ctx);
  SequenceEmbedding eb = stim_.encode(stim_b, ctx);
  const Index len = std::min({eeg.length(), ea.length(), eb.length()});
  auto trim = [len](const Var& v) { return v.rows() == len ? v : ag::slice_rows(v, 0, len); };
  Var e = trim(eeg.frames);
  return {similarity(e, trim(ea.frames)), similarity(e, trim(eb.frames))};
}

Var Aad::forward(const SequenceEmbedding& eeg_rep, const Var& stim_a, const Var& stim_b,
                 const nn::ForwardContext& ctx) const {
  Scores s = scores(eeg_rep, stim_a, stim_b, ctx);
  return decoder_.decide(s.a, s.b);
}

void Aad::collect(const std::string& prefix, nn::ParamList& out) {
  adapter_.collect(prefix + ".adapter", out);
  stim_.collect(prefix + ".stimulus", out);
  decoder_.collect(prefix + ".decoder", out);
}

Var aad_forward(const Matrix& eeg, double eeg_rate, const Var& stim_a, const Var& stim_b,
                const EegEncoder& encoder, const Aad& aad, const nn::ForwardContext& ctx) {
  SequenceEmbedding rep = encoder.encode(eeg, eeg_rate, ctx);
  return aad.forward(rep, stim_a, stim_b, ctx);
}

}  // namespace neurosteer::model
