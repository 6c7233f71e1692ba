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

#include "neurosteer/dataio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "neurosteer/dsp.hpp"
#include "neurosteer/errors.hpp"
#include "neurosteer/log.hpp"

namespace neurosteer::data {

namespace fs = std::filesystem;
using Eigen::Index;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "EEGB I/O assumes a little-endian host");

namespace {

constexpr uint8_t kEegbVersion = 1;

std::string trial_name(int subject, int trial) {
  return "subject " + std::to_string(subject) + " trial " + std::to_string(trial);
}

// Frames of EEG covering `samples` audio samples.
Index frames_for(size_t samples, double eeg_rate) {
  return static_cast<Index>(std::floor(static_cast<double>(samples) * eeg_rate / signals::kAudioRate + 1e-9));
}

size_t audio_index(Index frame, double eeg_rate) {
  return static_cast<size_t>(std::llround(static_cast<double>(frame) * signals::kAudioRate / eeg_rate));
}

struct Voice {
  double f0;
  double formant;
};

// Amplitude-modulated, band-shaped harmonic-plus-noise carrier.
std::vector<double> synth_speech(size_t n, const Voice& voice, std::mt19937_64& rng) {
  const double rate = signals::kAudioRate;
  // Syllabic envelope drawn at 100 Hz, band-limited to 2-8 Hz.
  constexpr double kControlRate = 100.0;
  const auto m = static_cast<size_t>(std::ceil(static_cast<double>(n) / rate * kControlRate)) + 2;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> ctrl(m);
  for (double& v : ctrl) v = normal(rng);
  ctrl = dsp::fft_bandlimit(ctrl, kControlRate, 2.0, 8.0);
  dsp::standardize(ctrl);
  for (double& v : ctrl) v = 0.05 + std::max(0.0, v + 0.3);

  std::uniform_real_distribution<double> phase0(0.0, 1.0);
  double phase = phase0(rng);
  const double vibrato_hz = 4.0 + 2.0 * phase0(rng);
  std::vector<double> source(n);
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double f = voice.f0 * (1.0 + 0.03 * std::sin(2.0 * std::numbers::pi * vibrato_hz * t));
    phase += f / rate;
    phase -= std::floor(phase);
    source[i] = (2.0 * phase - 1.0) + 0.5 * normal(rng);
  }
  std::vector<double> low = dsp::bandpass(source, rate, voice.formant, 1.5);
  std::vector<double> high = dsp::bandpass(source, rate, std::min(2.5 * voice.formant, 3600.0), 2.0);

  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) / rate * kControlRate;
    const auto k = static_cast<size_t>(pos);
    const double frac = pos - static_cast<double>(k);
    const double env = ctrl[k] * (1.0 - frac) + ctrl[std::min(k + 1, m - 1)] * frac;
    out[i] = env * (low[i] + 0.5 * high[i]);
  }
  const double rms = std::sqrt(signals::mean_power(out));
  for (double& v : out) v *= 0.05 / rms;
  return out;
}

void require_regular(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw DataError("missing file " + path.string());
}

}  // namespace

void EegSignal::validate() const {
  if (channels.rows() < 1) throw DataError("EEG must have at least one channel");
  if (channels.cols() < 1) throw DataError("EEG has no samples");
  if (!(rate > 0.0)) throw DataError("EEG rate must be positive");
  if (!channels.allFinite()) throw DataError("EEG contains non-finite values");
}

json SynthConfig::to_json() const {
  return {{"n_subjects", n_subjects}, {"n_trials", n_trials},   {"duration_s", duration_s},
          {"eeg_channels", eeg_channels}, {"eeg_rate", eeg_rate}, {"attn_gain", attn_gain},
          {"noise_level", noise_level}};
}

SynthConfig SynthConfig::from_json(const json& j) {
  SynthConfig c;
  c.n_subjects = j.value("n_subjects", c.n_subjects);
  c.n_trials = j.value("n_trials", c.n_trials);
  c.duration_s = j.value("duration_s", c.duration_s);
  c.eeg_channels = j.value("eeg_channels", c.eeg_channels);
  c.eeg_rate = j.value("eeg_rate", c.eeg_rate);
  c.attn_gain = j.value("attn_gain", c.attn_gain);
  c.noise_level = j.value("noise_level", c.noise_level);
  return c;
}

Dataset synth_cocktail(const SynthConfig& config, uint64_t seed) {
  if (!(config.duration_s > 0.0)) throw ConfigError("synth: duration_s must be positive");
  if (config.eeg_channels < 1) throw ConfigError("synth: eeg_channels must be at least 1");
  if (config.n_subjects < 1 || config.n_trials < 1) throw ConfigError("synth: need at least one subject and trial");
  if (config.attn_gain < 0.0 || config.attn_gain > 1.0) throw ConfigError("synth: attn_gain must lie in [0, 1]");
  if (config.noise_level < 0.0) throw ConfigError("synth: noise_level must be non-negative");
  if (!(config.eeg_rate > 0.0) || config.eeg_rate > signals::kAudioRate) {
    throw ConfigError("synth: eeg_rate must lie in (0, 8000]");
  }

  const auto n = static_cast<size_t>(std::llround(config.duration_s * signals::kAudioRate));
  const Index frames = frames_for(n, config.eeg_rate);
  if (frames < 1) throw ConfigError("synth: duration shorter than one EEG frame");
  const auto channels = static_cast<Index>(config.eeg_channels);
  const double hop = signals::kAudioRate / config.eeg_rate;
  const double gain = config.attn_gain;
  const double leak = config.attn_gain / 4.0;

  Dataset out;
  out.reserve(static_cast<size_t>(config.n_subjects * config.n_trials));
  for (int subj = 0; subj < config.n_subjects; ++subj) {
    // Per-subject forward model: channel gains and noise mixing.
    std::mt19937_64 head = dsp::stream(seed, {0x5u, static_cast<uint64_t>(subj)});
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd topography(channels);
    for (Index c = 0; c < channels; ++c) topography(c) = normal(head);
    EegMatrix mixing(channels, channels);
    for (Index r = 0; r < channels; ++r) {
      for (Index c = 0; c < channels; ++c) mixing(r, c) = normal(head);
      mixing.row(r) /= mixing.row(r).norm();
    }

    for (int tr = 0; tr < config.n_trials; ++tr) {
      const auto s = static_cast<uint64_t>(subj);
      const auto t = static_cast<uint64_t>(tr);
      std::mt19937_64 voice_rng = dsp::stream(seed, {0x1u, s, t});
      std::uniform_real_distribution<double> u(0.0, 1.0);
      // Two voices roughly 1.5 octaves apart in both pitch and formant.
      const Voice low{100.0 + 30.0 * u(voice_rng), 350.0 + 150.0 * u(voice_rng)};
      const Voice high{low.f0 * (1.8 + 0.4 * u(voice_rng)), low.formant * (2.6 + 0.6 * u(voice_rng))};
      const int label = u(voice_rng) < 0.5 ? 0 : 1;

      std::mt19937_64 rng_a = dsp::stream(seed, {0x2u, s, t, 0u});
      std::mt19937_64 rng_b = dsp::stream(seed, {0x2u, s, t, 1u});
      std::vector<double> track_a = synth_speech(n, low, rng_a);
      std::vector<double> track_b = synth_speech(n, high, rng_b);
      std::vector<double>& attended = label == 0 ? track_a : track_b;
      std::vector<double>& unattended = label == 0 ? track_b : track_a;

      std::vector<double> env_att = dsp::frame_envelope(attended, hop, static_cast<size_t>(frames));
      std::vector<double> env_un = dsp::frame_envelope(unattended, hop, static_cast<size_t>(frames));
      dsp::standardize(env_att);
      dsp::standardize(env_un);

      std::mt19937_64 noise_rng = dsp::stream(seed, {0x3u, s, t});
      EegMatrix pink(channels, frames);
      for (Index c = 0; c < channels; ++c) {
        std::vector<double> p = dsp::pink_noise(static_cast<size_t>(frames), noise_rng);
        pink.row(c) = Eigen::Map<const Eigen::RowVectorXd>(p.data(), frames);
      }
      const EegMatrix noise = mixing * pink;

      PairedSample sample;
      sample.eeg.rate = config.eeg_rate;
      sample.eeg.channels.resize(channels, frames);
      for (Index c = 0; c < channels; ++c) {
        for (Index f = 0; f < frames; ++f) {
          const auto k = static_cast<size_t>(f);
          sample.eeg.channels(c, f) =
              topography(c) * (gain * env_att[k] + leak * env_un[k]) + config.noise_level * noise(c, f);
        }
      }
      sample.target = signals::AudioSignal(attended);
      sample.interferer = signals::AudioSignal(unattended);
      std::vector<double> mix(n);
      for (size_t i = 0; i < n; ++i) mix[i] = attended[i] + unattended[i];
      sample.mixture = signals::AudioSignal(std::move(mix));
      sample.subject_id = subj;
      sample.trial_id = tr;
      sample.attended_label = label;
      sample.window = {0.0, static_cast<double>(n) / signals::kAudioRate};
      sample.stimulus_key = "synth/" + std::to_string(seed) + "/" + std::to_string(subj) + "/" + std::to_string(tr);
      out.push_back(std::move(sample));
    }
  }
  return out;
}

void write_eegb(const fs::path& path, const EegSignal& eeg) {
  eeg.validate();
  if (eeg.num_channels() > 0xFFFF) throw DataError("EEGB supports at most 65535 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write("EEGB", 4);
  const uint8_t version = kEegbVersion;
  const auto channels = static_cast<uint16_t>(eeg.num_channels());
  const double rate = eeg.rate;
  const auto samples = static_cast<uint64_t>(eeg.num_samples());
  out.write(reinterpret_cast<const char*>(&version), 1);
  out.write(reinterpret_cast<const char*>(&channels), 2);
  out.write(reinterpret_cast<const char*>(&rate), 8);
  out.write(reinterpret_cast<const char*>(&samples), 8);
  std::vector<float> row(samples);
  for (Index c = 0; c < eeg.num_channels(); ++c) {
    for (Index t = 0; t < eeg.num_samples(); ++t) row[static_cast<size_t>(t)] = static_cast<float>(eeg.channels(c, t));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing " + path.string());
}

EegSignal read_eegb(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::array<char, 4> magic{};
  uint8_t version = 0;
  uint16_t channels = 0;
  double rate = 0.0;
  uint64_t samples = 0;
  in.read(magic.data(), 4);
  in.read(reinterpret_cast<char*>(&version), 1);
  in.read(reinterpret_cast<char*>(&channels), 2);
  in.read(reinterpret_cast<char*>(&rate), 8);
  in.read(reinterpret_cast<char*>(&samples), 8);
  if (!in || std::memcmp(magic.data(), "EEGB", 4) != 0) throw DataError(path.string() + ": malformed EEGB header");
  if (version != kEegbVersion) {
    throw DataError(path.string() + ": unsupported EEGB version " + std::to_string(version));
  }
  if (channels == 0 || samples == 0 || !(rate > 0.0) || !std::isfinite(rate)) {
    throw DataError(path.string() + ": malformed EEGB header");
  }
  in.seekg(0, std::ios::end);
  const auto payload = static_cast<uint64_t>(in.tellg()) - 23;
  if (payload != uint64_t{channels} * samples * sizeof(float)) {
    throw DataError(path.string() + ": EEGB payload size does not match its header");
  }
  in.seekg(23);
  EegSignal eeg;
  eeg.rate = rate;
  eeg.channels.resize(channels, static_cast<Index>(samples));
  std::vector<float> row(samples);
  for (Index c = 0; c < channels; ++c) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(samples * sizeof(float)));
    for (Index t = 0; t < static_cast<Index>(samples); ++t) eeg.channels(c, t) = row[static_cast<size_t>(t)];
  }
  if (!in) throw DataError(path.string() + ": truncated EEGB payload");
  return eeg;
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      ManifestEntry e;
      e.subject = j.at("subject").get<int>();
      e.trial = j.at("trial").get<int>();
      e.audio_attended = j.at("audio_attended").get<std::string>();
      e.audio_unattended = j.at("audio_unattended").get<std::string>();
      e.eeg = j.at("eeg").get<std::string>();
      e.attended_label = j.at("attended_label").get<int>();
      if (e.attended_label != 0 && e.attended_label != 1) throw DataError("attended_label must be 0 or 1");
      entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    } catch (const DataError& ex) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return entries;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  for (const auto& e : entries) {
    const json j = {{"subject", e.subject},
                    {"trial", e.trial},
                    {"audio_attended", e.audio_attended},
                    {"audio_unattended", e.audio_unattended},
                    {"eeg", e.eeg},
                    {"attended_label", e.attended_label}};
    out << j.dump() << '\n';
  }
}

void write_dataset(const fs::path& dir, const Dataset& dataset) {
  fs::create_directories(dir / "audio");
  fs::create_directories(dir / "eeg");
  std::vector<ManifestEntry> entries;
  for (const auto& s : dataset) {
    const std::string stem = "s" + std::to_string(s.subject_id) + "_t" + std::to_string(s.trial_id);
    ManifestEntry e;
    e.subject = s.subject_id;
    e.trial = s.trial_id;
    e.audio_attended = "audio/" + stem + "_attended.wav";
    e.audio_unattended = "audio/" + stem + "_unattended.wav";
    e.eeg = "eeg/" + stem + ".eegb";
    e.attended_label = s.attended_label;
    signals::write_wav(dir / e.audio_attended, s.target);
    signals::write_wav(dir / e.audio_unattended, s.interferer);
    write_eegb(dir / e.eeg, s.eeg);
    entries.push_back(std::move(e));
  }
  write_manifest(dir / "manifest.jsonl", entries);
}

IngestResult ingest_interchange(const fs::path& manifest_path, double eeg_rate) {
  if (!(eeg_rate > 0.0)) throw ConfigError("ingest: eeg_rate must be positive");
  const fs::path base = manifest_path.parent_path();
  const std::vector<ManifestEntry> entries = read_manifest(manifest_path);
  IngestResult result;
  size_t lineno = 0;
  for (const auto& e : entries) {
    ++lineno;
    auto reject = [&](const std::string& reason) {
      log::warn("ingest: rejecting " + trial_name(e.subject, e.trial) + ": " + reason);
      result.rejected.push_back({lineno, reason});
    };
    require_regular(base / e.audio_attended);
    require_regular(base / e.audio_unattended);
    require_regular(base / e.eeg);
    signals::AudioSignal att = signals::read_wav(base / e.audio_attended);
    signals::AudioSignal un = signals::read_wav(base / e.audio_unattended);
    EegSignal eeg = read_eegb(base / e.eeg);
    if (att.rate != signals::kAudioRate || un.rate != signals::kAudioRate) {
      reject("audio must be sampled at 8000 Hz");
      continue;
    }
    const double ratio = eeg.rate / eeg_rate;
    const double factor = std::round(ratio);
    if (factor < 1.0 || std::abs(ratio - factor) > 1e-6) {
      reject("EEG rate " + std::to_string(eeg.rate) + " Hz is not an integer multiple of " + std::to_string(eeg_rate) +
             " Hz");
      continue;
    }
    if (factor > 1.0) {
      const auto k = static_cast<int>(factor);
      EegMatrix out;
      for (Index c = 0; c < eeg.num_channels(); ++c) {
        std::vector<double> row(eeg.channels.row(c).data(), eeg.channels.row(c).data() + eeg.num_samples());
        std::vector<double> d = dsp::decimate(row, k);
        if (c == 0) out.resize(eeg.num_channels(), static_cast<Index>(d.size()));
        out.row(c) = Eigen::Map<const Eigen::RowVectorXd>(d.data(), static_cast<Index>(d.size()));
      }
      eeg.channels = std::move(out);
      eeg.rate = eeg_rate;
    }
    const double frame_s = 1.0 / eeg_rate;
    if (std::abs(att.duration() - un.duration()) > frame_s) {
      reject("attended and unattended audio durations differ by more than one frame");
      continue;
    }
    const size_t n = std::min(att.size(), un.size());
    att.samples.resize(n);
    un.samples.resize(n);
    if (std::abs(eeg.duration() - att.duration()) > frame_s) {
      std::ostringstream msg;
      msg << "duration mismatch: audio " << att.duration() << " s, EEG " << eeg.duration() << " s";
      reject(msg.str());
      continue;
    }
    const Index frames = std::min(eeg.num_samples(), frames_for(n, eeg_rate));
    eeg.channels.conservativeResize(Eigen::NoChange, frames);
    try {
      att.validate();
      un.validate();
      eeg.validate();
    } catch (const DataError& ex) {
      reject(ex.what());
      continue;
    }
    PairedSample s;
    std::vector<double> mix(n);
    for (size_t i = 0; i < n; ++i) mix[i] = att.samples[i] + un.samples[i];
    s.mixture = signals::AudioSignal(std::move(mix));
    s.target = std::move(att);
    s.interferer = std::move(un);
    s.eeg = std::move(eeg);
    s.subject_id = e.subject;
    s.trial_id = e.trial;
    s.attended_label = e.attended_label;
    s.window = {0.0, s.target.duration()};
    // The same stimulus pair heard by several subjects shares a key.
    s.stimulus_key = std::min(e.audio_attended, e.audio_unattended) + "|" + std::max(e.audio_attended, e.audio_unattended);
    result.dataset.push_back(std::move(s));
  }
  return result;
}

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "val";
    case Split::kTest: return "test";
  }
  return "";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val" || name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

const std::vector<Region>& SplitManifest::regions(Split split) const {
  switch (split) {
    case Split::kTrain: return train;
    case Split::kValidation: return validation;
    case Split::kTest: return test;
  }
  return train;
}

namespace {

json regions_to_json(const std::vector<Region>& regions) {
  json arr = json::array();
  for (const auto& r : regions) {
    arr.push_back({{"sample", r.sample},
                   {"subject", r.subject},
                   {"trial", r.trial},
                   {"stimulus_key", r.stimulus_key},
                   {"start_frame", r.start_frame},
                   {"frames", r.frames},
                   {"start_s", r.start_s},
                   {"duration_s", r.duration_s}});
  }
  return arr;
}

std::vector<Region> regions_from_json(const json& arr) {
  std::vector<Region> out;
  for (const auto& j : arr) {
    Region r;
    r.sample = j.at("sample").get<size_t>();
    r.subject = j.at("subject").get<int>();
    r.trial = j.at("trial").get<int>();
    r.stimulus_key = j.at("stimulus_key").get<std::string>();
    r.start_frame = j.at("start_frame").get<Index>();
    r.frames = j.at("frames").get<Index>();
    r.start_s = j.at("start_s").get<double>();
    r.duration_s = j.at("duration_s").get<double>();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

json SplitManifest::to_json() const {
  return {{"eeg_rate", eeg_rate},
          {"seed", seed},
          {"train", regions_to_json(train)},
          {"val", regions_to_json(validation)},
          {"test", regions_to_json(test)}};
}

SplitManifest SplitManifest::from_json(const json& j) {
  SplitManifest m;
  m.eeg_rate = j.at("eeg_rate").get<double>();
  m.seed = j.at("seed").get<uint64_t>();
  m.train = regions_from_json(j.at("train"));
  m.validation = regions_from_json(j.at("val"));
  m.test = regions_from_json(j.at("test"));
  return m;
}

SplitManifest make_splits(const Dataset& dataset, SplitRatios ratios, uint64_t seed, double min_window_s) {
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0) throw ConfigError("split ratios must be >= 0");
  const double total = ratios.train + ratios.validation + ratios.test;
  if (!(total > 0.0)) throw ConfigError("split ratios must not all be zero");
  if (dataset.empty()) throw DataError("make_splits: empty dataset");

  SplitManifest manifest;
  manifest.seed = seed;
  manifest.eeg_rate = dataset.front().eeg.rate;
  for (size_t i = 0; i < dataset.size(); ++i) {
    const PairedSample& s = dataset[i];
    if (s.eeg.rate != manifest.eeg_rate) throw DataError("make_splits: all trials must share one EEG rate");
    const double rate = s.eeg.rate;
    const Index n = s.eeg.num_samples();
    const auto n_train = static_cast<Index>(std::llround(static_cast<double>(n) * ratios.train / total));
    const auto n_val = static_cast<Index>(std::llround(static_cast<double>(n) * ratios.validation / total));
    const Index n_test = n - n_train - n_val;
    const auto min_frames = static_cast<Index>(std::ceil(min_window_s * rate - 1e-9));
    if (std::min({n_train, n_val, n_test}) < min_frames) {
      throw DataError("make_splits: " + trial_name(s.subject_id, s.trial_id) + " (" + std::to_string(s.eeg.duration()) +
                      " s) is too short for a " + std::to_string(min_window_s) + " s window in every split");
    }
    std::array<Split, 3> order{Split::kTrain, Split::kValidation, Split::kTest};
    std::mt19937_64 rng = dsp::stream(seed, {dsp::fnv1a(s.stimulus_key)});
    std::shuffle(order.begin(), order.end(), rng);

    Index cursor = 0;
    for (Split split : order) {
      const Index len = split == Split::kTrain ? n_train : split == Split::kValidation ? n_val : n_test;
      Region r;
      r.sample = i;
      r.subject = s.subject_id;
      r.trial = s.trial_id;
      r.stimulus_key = s.stimulus_key;
      r.start_frame = cursor;
      r.frames = len;
      r.start_s = static_cast<double>(cursor) / rate;
      r.duration_s = static_cast<double>(len) / rate;
      cursor += len;
      switch (split) {
        case Split::kTrain: manifest.train.push_back(r); break;
        case Split::kValidation: manifest.validation.push_back(r); break;
        case Split::kTest: manifest.test.push_back(r); break;
      }
    }
  }
  return manifest;
}

PairedSample crop(const Dataset& dataset, const Region& region, Index offset, Index frames, double snr_db) {
  if (region.sample >= dataset.size()) throw DataError("crop: region refers to a missing trial");
  if (offset < 0 || frames < 1 || offset + frames > region.frames) {
    throw DataError("crop: window exceeds the region of " + trial_name(region.subject, region.trial));
  }
  const PairedSample& trial = dataset[region.sample];
  const double rate = trial.eeg.rate;
  const Index f0 = region.start_frame + offset;
  const size_t a0 = audio_index(f0, rate);
  const size_t a1 = std::min(audio_index(f0 + frames, rate), trial.target.size());
  if (a1 <= a0) throw DataError("crop: empty audio interval");

  signals::AudioSignal target(std::vector<double>(trial.target.samples.begin() + static_cast<long>(a0),
                                                  trial.target.samples.begin() + static_cast<long>(a1)));
  signals::AudioSignal interferer(std::vector<double>(trial.interferer.samples.begin() + static_cast<long>(a0),
                                                      trial.interferer.samples.begin() + static_cast<long>(a1)));
  signals::Mixture mix = signals::mix_at_snr(target, interferer, snr_db);

  PairedSample out;
  out.target = std::move(target);
  out.interferer = std::move(mix.scaled_interferer);
  out.mixture = std::move(mix.mixture);
  out.eeg.rate = rate;
  out.eeg.channels = trial.eeg.channels.middleCols(f0, frames);
  out.subject_id = trial.subject_id;
  out.trial_id = trial.trial_id;
  out.attended_label = trial.attended_label;
  out.window = {static_cast<double>(f0) / rate, static_cast<double>(a1 - a0) / signals::kAudioRate};
  out.stimulus_key = trial.stimulus_key;
  return out;
}

PairedSample sample_training_window(const Dataset& dataset, const SplitManifest& manifest, Split split,
                                    double window_s, std::pair<double, double> snr_range, std::mt19937_64& rng) {
  if (!(window_s > 0.0)) throw ConfigError("window length must be positive");
  if (snr_range.first > snr_range.second) throw ConfigError("snr range is inverted");
  const auto& regions = manifest.regions(split);
  const auto w = static_cast<Index>(std::llround(window_s * manifest.eeg_rate));
  std::vector<double> weights(regions.size(), 0.0);
  double total = 0.0;
  for (size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].frames >= w) weights[i] = static_cast<double>(regions[i].frames - w + 1);
    total += weights[i];
  }
  if (total <= 0.0) {
    throw DataError("window of " + std::to_string(window_s) + " s exceeds the remainder of every " + split_name(split) +
                    " region");
  }
  std::discrete_distribution<size_t> pick(weights.begin(), weights.end());
  const Region& r = regions[pick(rng)];
  std::uniform_int_distribution<Index> start(0, r.frames - w);
  const Index offset = start(rng);
  std::uniform_real_distribution<double> snr(snr_range.first, snr_range.second);
  const double snr_db = snr_range.first == snr_range.second ? snr_range.first : snr(rng);
  return crop(dataset, r, offset, w, snr_db);
}

std::vector<WindowRef> tile_windows(const SplitManifest& manifest, Split split, const std::vector<double>& window_s,
                                    size_t per_region) {
  std::vector<WindowRef> out;
  const auto& regions = manifest.regions(split);
  for (double len : window_s) {
    const auto w = static_cast<Index>(std::llround(len * manifest.eeg_rate));
    if (w < 1) throw ConfigError("evaluation window too short");
    for (size_t i = 0; i < regions.size(); ++i) {
      size_t count = 0;
      for (Index off = 0; off + w <= regions[i].frames; off += w) {
        if (per_region > 0 && count == per_region) break;
        out.push_back({i, off, w});
        ++count;
      }
    }
  }
  return out;
}

}  // namespace neurosteer::data
