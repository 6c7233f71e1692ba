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

#include "neurosteer/signals.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "neurosteer/errors.hpp"

namespace neurosteer::signals {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double clamp_db(double v) {
  if (std::isnan(v)) return kFloorDb;
  return std::clamp(v, kFloorDb, kCapDb);
}

void check_pair(std::span<const double> reference, std::span<const double> estimate) {
  if (reference.size() != estimate.size()) {
    throw ShapeError("length mismatch: reference " + std::to_string(reference.size()) +
                     " vs estimate " + std::to_string(estimate.size()));
  }
  if (reference.empty()) throw ShapeError("empty signal");
  if (dot(reference, reference) <= 0.0) throw DataError("degenerate signal: zero-power reference");
}

}  // namespace

void AudioSignal::validate() const {
  if (samples.empty()) throw DataError("audio signal is empty");
  if (!(rate > 0.0)) throw DataError("audio rate must be positive");
  for (double v : samples) {
    if (!std::isfinite(v)) throw DataError("audio signal contains non-finite samples");
  }
}

double mean_power(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return dot(x, x) / static_cast<double>(x.size());
}

double snr_gain(double target_power, double interferer_power, double snr_db) {
  return std::sqrt(target_power / interferer_power) * std::pow(10.0, -snr_db / 20.0);
}

Mixture mix_at_snr(const AudioSignal& target, const AudioSignal& interferer, double snr_db) {
  if (target.size() != interferer.size()) {
    throw ShapeError("mix_at_snr: length mismatch (" + std::to_string(target.size()) + " vs " +
                     std::to_string(interferer.size()) + ")");
  }
  if (target.rate != interferer.rate) throw ShapeError("mix_at_snr: sample rates differ");
  if (!std::isfinite(snr_db)) throw DataError("mix_at_snr: snr must be finite");
  const double pt = mean_power(target.view());
  const double pi = mean_power(interferer.view());
  if (pt <= 0.0 || pi <= 0.0) throw DataError("degenerate signal");

  Mixture out;
  out.gain = snr_gain(pt, pi, snr_db);
  out.scaled_interferer.rate = target.rate;
  out.mixture.rate = target.rate;
  out.scaled_interferer.samples.resize(target.size());
  out.mixture.samples.resize(target.size());
  for (size_t i = 0; i < target.size(); ++i) {
    const double b = out.gain * interferer.samples[i];
    out.scaled_interferer.samples[i] = b;
    out.mixture.samples[i] = target.samples[i] + b;
  }
  return out;
}

double si_sdr(std::span<const double> reference, std::span<const double> estimate) {
  check_pair(reference, estimate);
  const double ref_energy = dot(reference, reference);
  const double est_energy = dot(estimate, estimate);
  const double alpha = dot(estimate, reference) / ref_energy;
  const double target_energy = alpha * alpha * ref_energy;
  double residual_energy = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    const double r = estimate[i] - alpha * reference[i];
    residual_energy += r * r;
  }
  if (target_energy <= 0.0) return kFloorDb;
  return clamp_db(10.0 * std::log10(target_energy / (residual_energy + kEpsilon * est_energy)));
}

double si_sdr(const AudioSignal& reference, const AudioSignal& estimate) {
  return si_sdr(reference.view(), estimate.view());
}

double sdr(std::span<const double> reference, std::span<const double> estimate) {
  check_pair(reference, estimate);
  const double ref_energy = dot(reference, reference);
  double err = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    const double d = reference[i] - estimate[i];
    err += d * d;
  }
  return clamp_db(10.0 * std::log10(ref_energy / (err + kEpsilon * ref_energy)));
}

double sdr(const AudioSignal& reference, const AudioSignal& estimate) {
  return sdr(reference.view(), estimate.view());
}

// ---- WAV ---------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

template <typename T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated WAV file");
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

AudioSignal read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file " + path.string());
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) throw DataError(path.string() + ": not a RIFF file");
  read_le<uint32_t>(in);
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) throw DataError(path.string() + ": not a WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  while (in.read(tag, 4)) {
    const auto size = read_le<uint32_t>(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_le<uint16_t>(in);
      channels = read_le<uint16_t>(in);
      rate = read_le<uint32_t>(in);
      read_le<uint32_t>(in);
      read_le<uint16_t>(in);
      bits = read_le<uint16_t>(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw DataError(path.string() + ": data chunk before fmt chunk");
      if (channels != 1) throw DataError(path.string() + ": only mono WAV is supported");
      AudioSignal sig;
      sig.rate = static_cast<double>(rate);
      if (format == 1 && bits == 16) {
        sig.samples.resize(size / 2);
        for (auto& s : sig.samples) s = static_cast<double>(read_le<int16_t>(in)) / 32768.0;
      } else if (format == 3 && bits == 32) {
        sig.samples.resize(size / 4);
        for (auto& s : sig.samples) s = static_cast<double>(read_le<float>(in));
      } else {
        throw DataError(path.string() + ": unsupported WAV encoding (format " +
                        std::to_string(format) + ", " + std::to_string(bits) + " bits)");
      }
      return sig;
    } else {
      in.seekg(size + (size & 1u), std::ios::cur);
    }
  }
  throw DataError(path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const AudioSignal& signal, WavEncoding encoding) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write WAV file " + path.string());
  const bool pcm = encoding == WavEncoding::kPcm16;
  const uint16_t bits = pcm ? 16 : 32;
  const uint16_t block = bits / 8;
  const auto rate = static_cast<uint32_t>(std::lround(signal.rate));
  const auto data_size = static_cast<uint32_t>(signal.size() * block);
  out.write("RIFF", 4);
  write_le<uint32_t>(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<uint32_t>(out, 16);
  write_le<uint16_t>(out, pcm ? 1 : 3);
  write_le<uint16_t>(out, 1);
  write_le<uint32_t>(out, rate);
  write_le<uint32_t>(out, rate * block);
  write_le<uint16_t>(out, block);
  write_le<uint16_t>(out, bits);
  out.write("data", 4);
  write_le<uint32_t>(out, data_size);
  for (double s : signal.samples) {
    if (pcm) {
      const double c = std::clamp(s, -1.0, 32767.0 / 32768.0);
      write_le<int16_t>(out, static_cast<int16_t>(std::lround(c * 32768.0)));
    } else {
      write_le<float>(out, static_cast<float>(s));
    }
  }
  if (!out) throw DataError("failed writing WAV file " + path.string());
}

}  // namespace neurosteer::signals
