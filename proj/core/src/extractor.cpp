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

#include "neurosteer/extractor.hpp"

#include <algorithm>
#include <cmath>

#include "neurosteer/errors.hpp"

namespace neurosteer::model {

Var to_column(const signals::AudioSignal& x) {
  Matrix m(static_cast<Index>(x.size()), 1);
  for (size_t i = 0; i < x.size(); ++i) m(static_cast<Index>(i), 0) = x.samples[i];
  return ag::constant(std::move(m));
}

signals::AudioSignal to_audio(const Var& column, double rate) {
  const Matrix& v = column.value();
  std::vector<double> s(v.data(), v.data() + v.size());
  return signals::AudioSignal(std::move(s), rate);
}

// ---- speech encoder ----------------------------------------------------

SpeechEncoder::SpeechEncoder(const ExtractorConfig& cfg, std::mt19937_64& rng)
    : conv_(1, cfg.width, cfg.kernel, cfg.stride, rng) {}

Var SpeechEncoder::pre_activation(const Var& wave) const {
  if (wave.cols() != 1) throw ShapeError("speech encoder expects a mono (T x 1) waveform");
  if (wave.rows() < conv_.kernel) {
    throw ShapeError("speech encoder: input of " + std::to_string(wave.rows()) +
                     " samples is shorter than one kernel (" + std::to_string(conv_.kernel) + ")");
  }
  return conv_(wave);
}

SequenceEmbedding SpeechEncoder::encode(const Var& wave) const {
  return {ag::relu(pre_activation(wave)), signals::kAudioRate / static_cast<double>(conv_.stride)};
}

void SpeechEncoder::collect(const std::string& prefix, nn::ParamList& out) { conv_.collect(prefix + ".conv", out); }

// ---- fusion ------------------------------------------------------------

Var upsample_frames(const SequenceEmbedding& source, Index target_length, double target_rate,
                    Upsampling mode) {
  const Index n = source.length();
  if (n < 1) throw ShapeError("upsample_frames: empty source sequence");
  const double ratio = source.frame_rate / target_rate;
  if (mode == Upsampling::kNearest) {
    std::vector<Index> idx(static_cast<size_t>(target_length));
    for (Index i = 0; i < target_length; ++i) {
      // Small slack keeps exact multiples (e.g. 7.5 * k) from rounding down.
      const auto j = static_cast<Index>(std::floor(static_cast<double>(i) * ratio + 1e-9));
      idx[static_cast<size_t>(i)] = std::min(j, n - 1);
    }
    return ag::gather_rows(source.frames, std::move(idx));
  }
  std::vector<Index> lo(static_cast<size_t>(target_length));
  std::vector<Index> hi(static_cast<size_t>(target_length));
  std::vector<double> w(static_cast<size_t>(target_length));
  for (Index i = 0; i < target_length; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto j = static_cast<Index>(std::floor(pos));
    const auto k = static_cast<size_t>(i);
    if (j >= n - 1) {
      lo[k] = hi[k] = n - 1;
      w[k] = 0.0;
    } else {
      lo[k] = j;
      hi[k] = j + 1;
      w[k] = pos - static_cast<double>(j);
    }
  }
  return ag::blend_rows(source.frames, std::move(lo), std::move(hi), std::move(w));
}

Fusion::Fusion(Index width, Upsampling mode, std::mt19937_64& rng) : mode_(mode), proj_(2 * width, width, rng) {}

SequenceEmbedding Fusion::operator()(const SequenceEmbedding& eeg_rep, const SequenceEmbedding& speech) const {
  if (eeg_rep.width() != speech.width()) {
    throw ShapeError("fusion: EEG width " + std::to_string(eeg_rep.width()) + " != speech width " +
                     std::to_string(speech.width()));
  }
  Var up = upsample_frames(eeg_rep, speech.length(), speech.frame_rate, mode_);
  return {proj_(ag::concat_cols(speech.frames, up)), speech.frame_rate};
}

void Fusion::collect(const std::string& prefix, nn::ParamList& out) { proj_.collect(prefix + ".proj", out); }

// ---- dual-path ---------------------------------------------------------

ChunkLayout ChunkLayout::make(Index length, Index chunk) {
  if (chunk < 2) throw ShapeError("chunk size must be at least 2");
  ChunkLayout l;
  l.length = length;
  l.chunk = chunk;
  l.hop = chunk / 2;
  // Pad one hop on both sides, then up to a whole number of hops.
  Index padded = length + 2 * l.hop;
  if (padded < chunk) padded = chunk;
  const Index rem = (padded - chunk) % l.hop;
  if (rem != 0) padded += l.hop - rem;
  l.chunks = (padded - chunk) / l.hop + 1;

  const Index rows = l.chunk * l.chunks;
  l.frame_of_row.resize(static_cast<size_t>(rows));
  l.intra_to_inter.resize(static_cast<size_t>(rows));
  l.inter_to_intra.resize(static_cast<size_t>(rows));
  for (Index k = 0; k < l.chunk; ++k) {
    for (Index s = 0; s < l.chunks; ++s) {
      const Index intra_row = k * l.chunks + s;
      const Index inter_row = s * l.chunk + k;
      const Index frame = s * l.hop + k - l.hop;
      l.frame_of_row[static_cast<size_t>(intra_row)] = (frame >= 0 && frame < length) ? frame : -1;
      l.intra_to_inter[static_cast<size_t>(inter_row)] = intra_row;
      l.inter_to_intra[static_cast<size_t>(intra_row)] = inter_row;
    }
  }
  return l;
}

DualPathBlock::DualPathBlock(Index width, Index hidden, std::mt19937_64& rng)
    : intra_rnn_(width, hidden, rng),
      intra_proj_(2 * hidden, width, rng),
      intra_norm_(width),
      inter_rnn_(width, hidden, rng),
      inter_proj_(2 * hidden, width, rng),
      inter_norm_(width) {}

Var DualPathBlock::operator()(const Var& x, const ChunkLayout& layout) const {
  // Intra-chunk: K steps, S sequences.
  Var intra = intra_norm_(intra_proj_(intra_rnn_(x, layout.chunks)));
  Var y = ag::add(x, intra);
  // Inter-chunk: S steps, K sequences.
  Var z = ag::gather_rows(y, layout.intra_to_inter);
  Var inter = inter_norm_(inter_proj_(inter_rnn_(z, layout.chunk)));
  z = ag::add(z, inter);
  return ag::gather_rows(z, layout.inter_to_intra);
}

void DualPathBlock::collect(const std::string& prefix, nn::ParamList& out) {
  intra_rnn_.collect(prefix + ".intra_rnn", out);
  intra_proj_.collect(prefix + ".intra_proj", out);
  intra_norm_.collect(prefix + ".intra_norm", out);
  inter_rnn_.collect(prefix + ".inter_rnn", out);
  inter_proj_.collect(prefix + ".inter_proj", out);
  inter_norm_.collect(prefix + ".inter_norm", out);
}

// ---- extractor ---------------------------------------------------------

Extractor::Extractor(const ExtractorConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), encoder_(cfg, rng) {
  if (cfg.use_eeg) {
    fusion_ = Fusion(cfg.width, cfg.upsample, rng);
  } else {
    bottleneck_ = nn::Linear(cfg.width, cfg.width, rng);
  }
  for (Index i = 0; i < cfg.blocks; ++i) blocks_.emplace_back(cfg.width, cfg.hidden, rng);
  out_slope_ = ag::leaf(Matrix::Constant(1, 1, 0.25));
  mask_target_ = nn::Linear(cfg.width, cfg.width, rng);
  mask_interferer_ = nn::Linear(cfg.width, cfg.width, rng);
  decoder_ = nn::Linear(cfg.width, cfg.kernel, rng, /*with_bias=*/false);
}

ExtractorOutput Extractor::extract(const Var& mixture, const SequenceEmbedding* eeg_rep,
                                   const nn::ForwardContext& ctx) const {
  return extract(mixture, eeg_rep, ctx, nullptr);
}

ExtractorOutput Extractor::extract(const Var& mixture, const SequenceEmbedding* eeg_rep,
                                   const nn::ForwardContext& ctx, Masks* masks) const {
  (void)ctx;
  const Index samples = mixture.rows();
  SequenceEmbedding latent = encoder_.encode(mixture);

  Var fused;
  if (cfg_.use_eeg) {
    if (eeg_rep == nullptr) throw ShapeError("extractor: EEG representation required");
    fused = fusion_(*eeg_rep, latent).frames;
  } else {
    fused = bottleneck_(latent.frames);
  }

  const ChunkLayout layout = ChunkLayout::make(latent.length(), cfg_.chunk);
  Var h = ag::gather_rows(fused, layout.frame_of_row);
  for (const auto& block : blocks_) h = block(h, layout);
  h = ag::scatter_add_rows(h, layout.frame_of_row, latent.length());
  h = ag::prelu(h, out_slope_);

  auto activate = [this](const Var& v) {
    return cfg_.mask == MaskActivation::kRelu ? ag::relu(v) : ag::sigmoid(v);
  };
  Var m_target = activate(mask_target_(h));
  Var m_interf = activate(mask_interferer_(h));
  if (masks != nullptr) {
    masks->target = m_target;
    masks->interferer = m_interf;
  }

  auto decode = [&](const Var& mask) {
    Var frames = decoder_(ag::mul(mask, latent.frames));
    return ag::overlap_add(frames, cfg_.stride, samples);
  };
  return {decode(m_target), decode(m_interf)};
}

void Extractor::collect(const std::string& prefix, nn::ParamList& out) {
  encoder_.collect(prefix + ".encoder", out);
  if (cfg_.use_eeg) {
    fusion_.collect(prefix + ".fusion", out);
  } else {
    bottleneck_.collect(prefix + ".bottleneck", out);
  }
  for (size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(prefix + ".block" + std::to_string(i), out);
  out.push_back({prefix + ".out_slope", &out_slope_});
  mask_target_.collect(prefix + ".mask_target", out);
  mask_interferer_.collect(prefix + ".mask_interferer", out);
  decoder_.collect(prefix + ".decoder", out);
}

}  // namespace neurosteer::model
