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

// Small signal-processing toolbox used by data synthesis, EEG ingestion and
// the intelligibility metric.
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace neurosteer::dsp {

uint64_t fnv1a(std::string_view bytes);

// Counter-based seeding: a splitmix64 chain over (seed, keys...). Streams
// derived from distinct key tuples are independent of evaluation order.
uint64_t derive_seed(uint64_t seed, std::initializer_list<uint64_t> keys);
std::mt19937_64 stream(uint64_t seed, std::initializer_list<uint64_t> keys);

// RBJ band-pass biquad (constant 0 dB peak gain).
std::vector<double> bandpass(std::span<const double> x, double rate, double center_hz, double q);

// Zeroes every FFT bin outside [lo_hz, hi_hz].
std::vector<double> fft_bandlimit(std::span<const double> x, double rate, double lo_hz, double hi_hz);

// Unit-variance 1/f noise (Kellet's filter over white noise).
std::vector<double> pink_noise(size_t n, std::mt19937_64& rng);

// Windowed-sinc low-pass FIR with the given cutoff (fraction of Nyquist).
std::vector<double> lowpass_fir(size_t taps, double cutoff);

// Rational resampling by up/down: zero insertion, FIR low-pass, decimation.
// Output length is ceil(n * up / down).
std::vector<double> resample(std::span<const double> x, int up, int down);

// Anti-aliased integer-factor decimation.
std::vector<double> decimate(std::span<const double> x, int factor);

// Mean absolute value over consecutive frames of `hop` samples; a fractional
// hop is allowed (frame j covers [j*hop, (j+1)*hop)).
std::vector<double> frame_envelope(std::span<const double> x, double hop, size_t frames);

void standardize(std::vector<double>& x);
double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace neurosteer::dsp
