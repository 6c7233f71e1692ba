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

#include "neurosteer/metrics.hpp"

#include <unistd.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <unsupported/Eigen/FFT>

#include "neurosteer/dsp.hpp"
#include "neurosteer/errors.hpp"
#include "neurosteer/log.hpp"
#include "neurosteer/signals.hpp"

namespace neurosteer::metrics {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ag::Index;
using ag::Var;

double si_sdri(std::span<const double> s, std::span<const double> x, std::span<const double> s_hat) {
  return signals::si_sdr(s, s_hat) - signals::si_sdr(s, x);
}

double sdri(std::span<const double> s, std::span<const double> x, std::span<const double> s_hat) {
  return signals::sdr(s, s_hat) - signals::sdr(s, x);
}

// ---- STOI ----------------------------------------------------------------

namespace {

constexpr int kStoiRate = 10000;
constexpr size_t kFrame = 256;
constexpr size_t kHop = 128;
constexpr size_t kNfft = 512;
constexpr size_t kBins = kNfft / 2 + 1;
constexpr int kBands = 15;
constexpr double kMinFreq = 150.0;
constexpr size_t kSegment = 30;
constexpr double kBeta = -15.0;
constexpr double kDynRange = 40.0;
constexpr double kEps = std::numeric_limits<double>::epsilon();

const std::array<double, kFrame>& stoi_window() {
  // Hann of length kFrame + 2 without its zero end points.
  static const auto w = [] {
    std::array<double, kFrame> a{};
    for (size_t n = 0; n < kFrame; ++n) {
      a[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n + 1) / static_cast<double>(kFrame + 1));
    }
    return a;
  }();
  return w;
}

// Frame starts used throughout: 0, hop, ... strictly below len - frame.
size_t frame_count(size_t len) { return len > kFrame ? (len - kFrame + kHop - 1) / kHop : 0; }

std::pair<std::vector<double>, std::vector<double>> remove_silent_frames(const std::vector<double>& x,
                                                                         const std::vector<double>& y) {
  const auto& w = stoi_window();
  const size_t n = frame_count(x.size());
  std::vector<double> energy(n);
  for (size_t f = 0; f < n; ++f) {
    double e = 0.0;
    for (size_t k = 0; k < kFrame; ++k) {
      const double v = w[k] * x[f * kHop + k];
      e += v * v;
    }
    energy[f] = 20.0 * std::log10(std::sqrt(e) + kEps);
  }
  const double top = n ? *std::max_element(energy.begin(), energy.end()) : 0.0;
  std::vector<size_t> keep;
  for (size_t f = 0; f < n; ++f) {
    if (top - kDynRange - energy[f] < 0.0) keep.push_back(f);
  }
  if (keep.empty()) return {};
  const size_t len = (keep.size() - 1) * kHop + kFrame;
  std::vector<double> xs(len, 0.0), ys(len, 0.0);
  for (size_t i = 0; i < keep.size(); ++i) {
    for (size_t k = 0; k < kFrame; ++k) {
      xs[i * kHop + k] += w[k] * x[keep[i] * kHop + k];
      ys[i * kHop + k] += w[k] * y[keep[i] * kHop + k];
    }
  }
  return {std::move(xs), std::move(ys)};
}

// One-third octave band bin ranges [lo, hi).
const std::array<std::pair<size_t, size_t>, kBands>& band_bins() {
  static const auto bands = [] {
    std::array<std::pair<size_t, size_t>, kBands> b{};
    auto nearest = [](double f) {
      size_t best = 0;
      double dist = std::numeric_limits<double>::infinity();
      for (size_t i = 0; i < kBins; ++i) {
        const double d = std::pow(static_cast<double>(i) * kStoiRate / static_cast<double>(kNfft) - f, 2);
        if (d < dist) {
          dist = d;
          best = i;
        }
      }
      return best;
    };
    for (int k = 0; k < kBands; ++k) {
      b[static_cast<size_t>(k)] = {nearest(kMinFreq * std::pow(2.0, (2.0 * k - 1.0) / 6.0)),
                                   nearest(kMinFreq * std::pow(2.0, (2.0 * k + 1.0) / 6.0))};
    }
    return b;
  }();
  return bands;
}

// Band envelopes, kBands x frames (row-major: band * frames + t).
std::vector<double> third_octave(const std::vector<double>& x, size_t& frames) {
  const auto& w = stoi_window();
  const auto& bands = band_bins();
  frames = frame_count(x.size());
  std::vector<double> out(static_cast<size_t>(kBands) * frames);
  Eigen::FFT<double> fft;
  std::vector<double> buf(kNfft, 0.0);
  std::vector<std::complex<double>> spec;
  std::vector<double> power(kBins);
  for (size_t f = 0; f < frames; ++f) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (size_t k = 0; k < kFrame; ++k) buf[k] = w[k] * x[f * kHop + k];
    fft.fwd(spec, buf);
    for (size_t i = 0; i < kBins; ++i) power[i] = std::norm(spec[i]);
    for (size_t b = 0; b < static_cast<size_t>(kBands); ++b) {
      double acc = 0.0;
      for (size_t i = bands[b].first; i < bands[b].second; ++i) acc += power[i];
      out[b * frames + f] = std::sqrt(acc);
    }
  }
  return out;
}

std::vector<double> to_stoi_rate(std::span<const double> x, double rate) {
  const auto r = static_cast<long>(std::llround(rate));
  if (r <= 0 || std::abs(rate - static_cast<double>(r)) > 1e-9) throw ConfigError("stoi: sample rate must be an integer");
  if (r == kStoiRate) return {x.begin(), x.end()};
  const long g = std::gcd(r, static_cast<long>(kStoiRate));
  return dsp::resample(x, static_cast<int>(kStoiRate / g), static_cast<int>(r / g));
}

}  // namespace

double stoi(std::span<const double> s, std::span<const double> s_hat, double rate) {
  if (s.size() != s_hat.size()) throw ShapeError("stoi: signals differ in length");
  auto [x, y] = remove_silent_frames(to_stoi_rate(s, rate), to_stoi_rate(s_hat, rate));
  size_t frames = 0, frames_y = 0;
  const auto xt = third_octave(x, frames);
  const auto yt = third_octave(y, frames_y);
  if (frames < kSegment) {
    throw DataError("stoi: " + std::to_string(frames) + " non-silent frames, need at least " +
                    std::to_string(kSegment));
  }
  const double clip = std::pow(10.0, -kBeta / 20.0);
  double total = 0.0;
  std::array<double, kSegment> xs{}, ys{};
  const size_t segments = frames - kSegment + 1;
  for (size_t m = kSegment; m <= frames; ++m) {
    for (size_t b = 0; b < static_cast<size_t>(kBands); ++b) {
      const double* xr = &xt[b * frames + m - kSegment];
      const double* yr = &yt[b * frames + m - kSegment];
      double nx = 0.0, ny = 0.0;
      for (size_t k = 0; k < kSegment; ++k) {
        nx += xr[k] * xr[k];
        ny += yr[k] * yr[k];
      }
      const double g = std::sqrt(nx) / (std::sqrt(ny) + kEps);
      double mx = 0.0, my = 0.0;
      for (size_t k = 0; k < kSegment; ++k) {
        ys[k] = std::min(yr[k] * g, xr[k] * (1.0 + clip));
        xs[k] = xr[k];
        mx += xs[k];
        my += ys[k];
      }
      mx /= kSegment;
      my /= kSegment;
      double sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (size_t k = 0; k < kSegment; ++k) {
        const double a = xs[k] - mx, c = ys[k] - my;
        sxx += a * a;
        syy += c * c;
        sxy += a * c;
      }
      total += sxy / ((std::sqrt(sxx) + kEps) * (std::sqrt(syy) + kEps));
    }
  }
  return total / static_cast<double>(segments * kBands);
}

double stoii(std::span<const double> s, std::span<const double> x, std::span<const double> s_hat, double rate) {
  return stoi(s, s_hat, rate) - stoi(s, x, rate);
}

// ---- PESQ ----------------------------------------------------------------

namespace {

std::optional<double> run_pesq(const PesqScorer& scorer, std::span<const double> ref, std::span<const double> deg,
                               std::string& reason) {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() /
                       ("neurosteer_pesq_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::create_directories(dir);
  signals::write_wav(dir / "ref.wav", signals::AudioSignal(std::vector<double>(ref.begin(), ref.end())),
                     signals::WavEncoding::kPcm16);
  signals::write_wav(dir / "deg.wav", signals::AudioSignal(std::vector<double>(deg.begin(), deg.end())),
                     signals::WavEncoding::kPcm16);
  const std::string cmd =
      scorer.command + " '" + (dir / "ref.wav").string() + "' '" + (dir / "deg.wav").string() + "' 2>/dev/null";
  std::string out;
  if (FILE* p = ::popen(cmd.c_str(), "r")) {
    std::array<char, 256> buf{};
    while (std::fgets(buf.data(), buf.size(), p)) out += buf.data();
    const int status = ::pclose(p);
    if (status != 0) reason = "PESQ scorer exited with status " + std::to_string(status);
  } else {
    reason = "cannot start PESQ scorer";
  }
  fs::remove_all(dir);
  if (!reason.empty()) return std::nullopt;
  try {
    size_t used = 0;
    const double v = std::stod(out, &used);
    return v;
  } catch (const std::exception&) {
    reason = "PESQ scorer printed no number";
    return std::nullopt;
  }
}

}  // namespace

PesqOutcome pesqi(std::span<const double> s, std::span<const double> x, std::span<const double> s_hat,
                  const PesqScorer* scorer) {
  PesqOutcome out;
  if (scorer == nullptr || scorer->command.empty()) {
    out.reason = "no PESQ scorer configured";
    return out;
  }
  auto est = run_pesq(*scorer, s, s_hat, out.reason);
  if (!est) return out;
  auto mix = run_pesq(*scorer, s, x, out.reason);
  if (!mix) return out;
  out.value = *est - *mix;
  return out;
}

// ---- results ---------------------------------------------------------------

std::optional<double> SampleResult::correct_prob() const {
  if (!aad_prob || !aad_label) return std::nullopt;
  return *aad_label == 1 ? *aad_prob : 1.0 - *aad_prob;
}

json SampleResult::to_json() const {
  json j = {{"subject", subject},
            {"trial", trial},
            {"start_s", start_s},
            {"window_s", window_s},
            {"snr_db", snr_db},
            {"si_sdr", si_sdr},
            {"si_sdri_target", si_sdri_target},
            {"si_sdri_interferer", si_sdri_interferer},
            {"sdri", sdri}};
  j["stoii"] = stoii ? json(*stoii) : json(nullptr);
  j["pesqi"] = pesqi ? json(*pesqi) : json(nullptr);
  j["aad_prob"] = aad_prob ? json(*aad_prob) : json(nullptr);
  j["aad_label"] = aad_label ? json(*aad_label) : json(nullptr);
  return j;
}

SampleResult SampleResult::from_json(const json& j) {
  SampleResult r;
  try {
    r.subject = j.at("subject").get<int>();
    r.trial = j.at("trial").get<int>();
    r.start_s = j.value("start_s", 0.0);
    r.window_s = j.at("window_s").get<double>();
    r.snr_db = j.value("snr_db", 0.0);
    r.si_sdr = j.value("si_sdr", 0.0);
    r.si_sdri_target = j.at("si_sdri_target").get<double>();
    r.si_sdri_interferer = j.at("si_sdri_interferer").get<double>();
    r.sdri = j.value("sdri", 0.0);
    auto opt = [&](const char* k) -> std::optional<double> {
      if (!j.contains(k) || j.at(k).is_null()) return std::nullopt;
      return j.at(k).get<double>();
    };
    r.stoii = opt("stoii");
    r.pesqi = opt("pesqi");
    r.aad_prob = opt("aad_prob");
    if (j.contains("aad_label") && !j.at("aad_label").is_null()) r.aad_label = j.at("aad_label").get<int>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed result record: ") + e.what());
  }
  return r;
}

double ppr(const std::vector<SampleResult>& results) {
  if (results.empty()) throw DataError("ppr: no samples");
  size_t pass = 0;
  for (const auto& r : results) {
    if (r.si_sdri_target > 0.0 && r.si_sdri_target > r.si_sdri_interferer) ++pass;
  }
  return 100.0 * static_cast<double>(pass) / static_cast<double>(results.size());
}

std::vector<ScatterRow> scatter_data(const std::vector<SampleResult>& results) {
  std::vector<ScatterRow> rows;
  for (const auto& r : results) {
    if (auto p = r.correct_prob()) rows.push_back({r.window_s, r.si_sdri_target, *p});
  }
  return rows;
}

Association parse_association(const std::string& name) {
  if (name == "fixed") return Association::kFixedStream;
  if (name == "oracle") return Association::kOracle;
  if (name == "aad") return Association::kAad;
  throw ConfigError("unknown association '" + name + "' (expected fixed, oracle or aad)");
}

const char* association_name(Association a) {
  switch (a) {
    case Association::kFixedStream: return "fixed";
    case Association::kOracle: return "oracle";
    case Association::kAad: return "aad";
  }
  return "";
}

json EvalConfig::to_json() const {
  json j = {{"window_s", window_s},
            {"per_region", per_region},
            {"snr_db", {snr_db.first, snr_db.second}},
            {"association", association_name(association)},
            {"with_aad", with_aad},
            {"with_stoi", with_stoi},
            {"seed", seed}};
  j["pesq_command"] = pesq ? json(pesq->command) : json(nullptr);
  return j;
}

EvalConfig EvalConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("eval must be an object");
  static const char* known[] = {"window_s", "per_region", "snr_db", "association",
                                "with_aad", "with_stoi",  "seed",   "pesq_command"};
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* n) { return k == n; }) == std::end(known)) {
      throw ConfigError("unknown key eval." + k);
    }
  }
  EvalConfig c;
  try {
    if (j.contains("window_s")) c.window_s = j["window_s"].get<std::vector<double>>();
    if (j.contains("per_region")) c.per_region = j["per_region"].get<size_t>();
    if (j.contains("snr_db")) {
      auto r = j["snr_db"].get<std::vector<double>>();
      if (r.size() != 2 || r[0] > r[1]) throw ConfigError("eval.snr_db must be [low, high]");
      c.snr_db = {r[0], r[1]};
    }
    if (j.contains("association")) c.association = parse_association(j["association"].get<std::string>());
    if (j.contains("with_aad")) c.with_aad = j["with_aad"].get<bool>();
    if (j.contains("with_stoi")) c.with_stoi = j["with_stoi"].get<bool>();
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("pesq_command") && !j["pesq_command"].is_null()) {
      c.pesq = PesqScorer{j["pesq_command"].get<std::string>()};
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("eval: wrong type: ") + e.what());
  }
  if (c.window_s.empty()) throw ConfigError("eval.window_s must not be empty");
  return c;
}

int oracle_pick(std::span<const double> s, std::span<const double> o0, std::span<const double> o1) {
  return signals::si_sdr(s, o1) > signals::si_sdr(s, o0) ? 1 : 0;
}

void score_window(const data::PairedSample& w, std::span<const double> s_hat, const EvalConfig& config,
                  SampleResult& r) {
  const auto s = w.target.view();
  const auto b = w.interferer.view();
  const auto x = w.mixture.view();
  r.si_sdr = signals::si_sdr(s, s_hat);
  r.si_sdri_target = si_sdri(s, x, s_hat);
  r.si_sdri_interferer = si_sdri(b, x, s_hat);
  r.sdri = sdri(s, x, s_hat);
  if (config.with_stoi) {
    try {
      r.stoii = stoii(s, x, s_hat);
    } catch (const DataError& e) {
      log::debug(std::string("stoi skipped: ") + e.what());
    }
  }
  if (config.pesq) {
    auto p = pesqi(s, x, s_hat, &*config.pesq);
    r.pesqi = p.value;
    if (!p.value) log::debug("PESQ absent: " + p.reason);
  }
  r.window_s = w.window.duration_s;
  r.start_s = w.window.start_s;
  r.subject = w.subject_id;
  r.trial = w.trial_id;
}

std::vector<SampleResult> evaluate(model::Model& model, const data::Dataset& dataset,
                                   const data::SplitManifest& manifest, data::Split split, const EvalConfig& config) {
  const bool fused = model.config().extractor.use_eeg;
  if (config.association == Association::kFixedStream && !fused) {
    throw ConfigError("fixed-stream evaluation needs an EEG-steered extractor; use oracle or aad association");
  }
  const bool score_aad = config.association == Association::kAad ||
                         (config.with_aad && config.association == Association::kFixedStream);
  const auto need = model::min_decision_length(model.config().aad);

  ag::NoGradGuard guard;
  const nn::ForwardContext eval;
  const auto& regions = manifest.regions(split);
  std::vector<SampleResult> out;
  bool warned_pesq = false;
  for (const auto& ref : data::tile_windows(manifest, split, config.window_s, config.per_region)) {
    std::mt19937_64 rng = dsp::stream(config.seed, {0xE7A1, ref.region, static_cast<uint64_t>(ref.offset),
                                                    static_cast<uint64_t>(ref.frames)});
    std::uniform_real_distribution<double> snr(config.snr_db.first, config.snr_db.second);
    const double snr_db = config.snr_db.first == config.snr_db.second ? config.snr_db.first : snr(rng);
    const int y = std::bernoulli_distribution(0.5)(rng) ? 1 : 0;
    const auto w = data::crop(dataset, regions[ref.region], ref.offset, ref.frames, snr_db);
    const auto s = w.target.view();

    const bool can_decide = ref.frames >= need;
    std::optional<model::SequenceEmbedding> rep;
    if (fused || (score_aad && can_decide)) rep = model.eeg_encoder().encode(w.eeg.channels, w.eeg.rate, eval);
    auto est = model.extractor().extract(model::to_column(w.mixture), fused ? &*rep : nullptr, eval);
    const auto o0 = model::to_audio(est.s_hat);
    const auto o1 = model::to_audio(est.b_hat);

    SampleResult r;
    const signals::AudioSignal* chosen = &o0;
    switch (config.association) {
      case Association::kFixedStream:
        if (score_aad && can_decide) {
          const Var& first = y == 1 ? est.s_hat : est.b_hat;
          const Var& second = y == 1 ? est.b_hat : est.s_hat;
          r.aad_prob = model.aad().forward(*rep, first, second, eval).item();
          r.aad_label = y;
        }
        break;
      case Association::kOracle:
        if (oracle_pick(s, o0.view(), o1.view()) == 1) chosen = &o1;
        break;
      case Association::kAad: {
        const int truth = oracle_pick(s, o0.view(), o1.view()) == 0 ? 1 : 0;
        if (can_decide) {
          const double p = model.aad().forward(*rep, est.s_hat, est.b_hat, eval).item();
          r.aad_prob = p;
          r.aad_label = truth;
          if (p < 0.5) chosen = &o1;
        } else if (std::bernoulli_distribution(0.5)(rng)) {
          chosen = &o1;  // too short for a decision: pick at random
        }
        break;
      }
    }
    score_window(w, chosen->view(), config, r);
    r.snr_db = snr_db;
    if (config.pesq && !r.pesqi && !warned_pesq) {
      log::warn("PESQ absent for at least one sample; see debug log for the reason");
      warned_pesq = true;
    }
    out.push_back(std::move(r));
  }
  return out;
}

json Summary::to_json() const {
  json j = {{"count", count}, {"si_sdri", si_sdri}, {"sdri", sdri}, {"si_sdr", si_sdr}, {"ppr", ppr}};
  j["stoii"] = stoii ? json(*stoii) : json(nullptr);
  j["pesqi"] = pesqi ? json(*pesqi) : json(nullptr);
  if (!pesqi) j["pesqi_absent_reason"] = "no PESQ scores recorded";
  j["aad_accuracy"] = aad_accuracy ? json(*aad_accuracy) : json(nullptr);
  return j;
}

Summary summarize(const std::vector<SampleResult>& results) {
  if (results.empty()) throw DataError("summary: no samples");
  Summary s;
  s.count = results.size();
  double stoi_sum = 0.0, pesq_sum = 0.0, acc = 0.0;
  size_t n_stoi = 0, n_pesq = 0, n_aad = 0;
  for (const auto& r : results) {
    s.si_sdri += r.si_sdri_target;
    s.sdri += r.sdri;
    s.si_sdr += r.si_sdr;
    if (r.stoii) {
      stoi_sum += *r.stoii;
      ++n_stoi;
    }
    if (r.pesqi) {
      pesq_sum += *r.pesqi;
      ++n_pesq;
    }
    if (auto p = r.correct_prob()) {
      acc += *p > 0.5 ? 1.0 : 0.0;
      ++n_aad;
    }
  }
  const auto n = static_cast<double>(results.size());
  s.si_sdri /= n;
  s.sdri /= n;
  s.si_sdr /= n;
  if (n_stoi) s.stoii = stoi_sum / static_cast<double>(n_stoi);
  if (n_pesq) s.pesqi = pesq_sum / static_cast<double>(n_pesq);
  if (n_aad) s.aad_accuracy = acc / static_cast<double>(n_aad);
  s.ppr = ppr(results);
  return s;
}

void write_results(const fs::path& path, const std::vector<SampleResult>& results) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : results) out << r.to_json().dump() << "\n";
}

std::vector<SampleResult> read_results(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<SampleResult> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(SampleResult::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace neurosteer::metrics
