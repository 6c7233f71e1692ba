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

#include "neurosteer/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include "neurosteer/errors.hpp"

namespace neurosteer::dsp {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

uint64_t fnv1a(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t derive_seed(uint64_t seed, std::initializer_list<uint64_t> keys) {
  uint64_t h = splitmix64(seed);
  for (uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ull));
  return h;
}

std::mt19937_64 stream(uint64_t seed, std::initializer_list<uint64_t> keys) {
  return std::mt19937_64(derive_seed(seed, keys));
}

std::vector<double> bandpass(std::span<const double> x, double rate, double center_hz, double q) {
  const double w0 = 2.0 * std::numbers::pi * center_hz / rate;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b0 = alpha / a0;
  const double b2 = -alpha / a0;
  const double a1 = -2.0 * std::cos(w0) / a0;
  const double a2 = (1.0 - alpha) / a0;
  std::vector<double> y(x.size());
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double v = b0 * x[i] + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x[i];
    y2 = y1;
    y1 = v;
    y[i] = v;
  }
  return y;
}

std::vector<double> fft_bandlimit(std::span<const double> x, double rate, double lo_hz, double hi_hz) {
  Eigen::FFT<double> fft;
  std::vector<double> in(x.begin(), x.end());
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, in);
  const size_t n = in.size();
  for (size_t k = 0; k < spec.size(); ++k) {
    const size_t bin = std::min(k, n - k);
    const double f = static_cast<double>(bin) * rate / static_cast<double>(n);
    if (f < lo_hz || f > hi_hz) spec[k] = 0.0;
  }
  std::vector<double> out;
  fft.inv(out, spec);
  out.resize(n);
  return out;
}

std::vector<double> pink_noise(size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> white(0.0, 1.0);
  std::vector<double> out(n);
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  // Burn in so the filter state is stationary from the first sample.
  for (size_t i = 0; i < n + 256; ++i) {
    const double w = white(rng);
    b0 = 0.99886 * b0 + w * 0.0555179;
    b1 = 0.99332 * b1 + w * 0.0750759;
    b2 = 0.96900 * b2 + w * 0.1538520;
    b3 = 0.86650 * b3 + w * 0.3104856;
    b4 = 0.55000 * b4 + w * 0.5329522;
    b5 = -0.7616 * b5 - w * 0.0168980;
    const double v = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
    b6 = w * 0.115926;
    if (i >= 256) out[i - 256] = v;
  }
  standardize(out);
  return out;
}

std::vector<double> lowpass_fir(size_t taps, double cutoff) {
  std::vector<double> h(taps);
  const double mid = static_cast<double>(taps - 1) / 2.0;
  for (size_t i = 0; i < taps; ++i) {
    const double t = static_cast<double>(i) - mid;
    const double sinc = t == 0.0 ? cutoff : std::sin(std::numbers::pi * cutoff * t) / (std::numbers::pi * t);
    const double window = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(taps - 1));
    h[i] = sinc * window;
  }
  const double sum = std::accumulate(h.begin(), h.end(), 0.0);
  for (double& v : h) v /= sum;
  return h;
}

std::vector<double> resample(std::span<const double> x, int up, int down) {
  if (up < 1 || down < 1) throw Error("resample: factors must be positive");
  const int g = std::gcd(up, down);
  up /= g;
  down /= g;
  if (up == 1 && down == 1) return {x.begin(), x.end()};
  const int factor = std::max(up, down);
  const size_t taps = static_cast<size_t>(20 * factor + 1);
  std::vector<double> h = lowpass_fir(taps, 1.0 / static_cast<double>(factor));
  for (double& v : h) v *= static_cast<double>(up);  // restore zero-insertion gain
  const auto delay = static_cast<long>((taps - 1) / 2);
  const size_t n_up = x.size() * static_cast<size_t>(up);
  const size_t n_out = (n_up + static_cast<size_t>(down) - 1) / static_cast<size_t>(down);
  std::vector<double> y(n_out, 0.0);
  for (size_t o = 0; o < n_out; ++o) {
    // Centre the filter on upsampled index o*down.
    const long centre = static_cast<long>(o) * down;
    double acc = 0.0;
    for (size_t k = 0; k < taps; ++k) {
      const long idx = centre + delay - static_cast<long>(k);
      if (idx < 0 || idx >= static_cast<long>(n_up) || idx % up != 0) continue;
      acc += h[k] * x[static_cast<size_t>(idx / up)];
    }
    y[o] = acc;
  }
  return y;
}

std::vector<double> decimate(std::span<const double> x, int factor) {
  if (factor < 1) throw Error("decimate: factor must be positive");
  if (factor == 1) return {x.begin(), x.end()};
  return resample(x, 1, factor);
}

std::vector<double> frame_envelope(std::span<const double> x, double hop, size_t frames) {
  std::vector<double> env(frames, 0.0);
  for (size_t j = 0; j < frames; ++j) {
    const auto lo = static_cast<size_t>(std::llround(static_cast<double>(j) * hop));
    const auto hi = std::min(x.size(), static_cast<size_t>(std::llround(static_cast<double>(j + 1) * hop)));
    double acc = 0.0;
    for (size_t i = lo; i < hi; ++i) acc += std::abs(x[i]);
    env[j] = hi > lo ? acc / static_cast<double>(hi - lo) : 0.0;
  }
  return env;
}

void standardize(std::vector<double>& x) {
  if (x.empty()) return;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
  for (double& v : x) v = (v - mean) / sd;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const size_t n = std::min(a.size(), b.size());
  if (n < 2) return 0.0;
  double ma = 0, mb = 0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace neurosteer::dsp
