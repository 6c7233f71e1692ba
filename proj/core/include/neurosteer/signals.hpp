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

// Waveform mathematics: SNR mixing and the SI-SDR / SDR family of measures.
#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace neurosteer::signals {

inline constexpr double kAudioRate = 8000.0;

// Relative guard: the error energy in the ratio denominators is increased by
// kEpsilon times the estimate (SI-SDR) or reference (SDR) energy, which keeps
// both measures exactly scale-invariant where they should be. A perfect
// estimate therefore scores -10*log10(kEpsilon) = kCapDb.
inline constexpr double kEpsilon = 1e-10;
// Ratios are clamped to [kFloorDb, kCapDb].
inline constexpr double kCapDb = 100.0;
inline constexpr double kFloorDb = -80.0;

struct AudioSignal {
  std::vector<double> samples;
  double rate = kAudioRate;

  AudioSignal() = default;
  explicit AudioSignal(std::vector<double> s, double r = kAudioRate) : samples(std::move(s)), rate(r) {}

  size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / rate; }
  std::span<const double> view() const { return samples; }
  // Throws DataError unless the signal is non-empty, finite and rate > 0.
  void validate() const;
};

double mean_power(std::span<const double> x);

struct Mixture {
  AudioSignal mixture;
  AudioSignal scaled_interferer;
  double gain = 1.0;
};

// Scales the interferer (never the target) so that the target-to-interferer
// power ratio equals snr_db, then sums.
Mixture mix_at_snr(const AudioSignal& target, const AudioSignal& interferer, double snr_db);

// Interferer gain for a desired SNR: sqrt(P_t / P_i) * 10^(-snr/20).
double snr_gain(double target_power, double interferer_power, double snr_db);

double si_sdr(std::span<const double> reference, std::span<const double> estimate);
double si_sdr(const AudioSignal& reference, const AudioSignal& estimate);

// Plain (not scale-invariant) SDR: 10 log10(|s|^2 / |s - s_hat|^2).
double sdr(std::span<const double> reference, std::span<const double> estimate);
double sdr(const AudioSignal& reference, const AudioSignal& estimate);

enum class WavEncoding { kPcm16, kFloat32 };

// Mono WAV only. PCM16 is normalised to [-1, 1).
AudioSignal read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioSignal& signal,
               WavEncoding encoding = WavEncoding::kFloat32);

}  // namespace neurosteer::signals
