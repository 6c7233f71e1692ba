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

// Paired speech/EEG data: synthetic generation, on-disk interchange files,
// per-trial splitting and window sampling.
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurosteer/signals.hpp"

namespace neurosteer::data {

using EegMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// 8000 / 60: one EEG frame per stimulus-encoder frame.
inline constexpr double kDefaultEegRate = 8000.0 / 60.0;

struct EegSignal {
  EegMatrix channels;  // C x T_r
  double rate = kDefaultEegRate;

  Eigen::Index num_channels() const { return channels.rows(); }
  Eigen::Index num_samples() const { return channels.cols(); }
  double duration() const { return static_cast<double>(channels.cols()) / rate; }
  void validate() const;
};

struct Window {
  double start_s = 0.0;
  double duration_s = 0.0;
};

// `interferer` is already scaled, so mixture == target + interferer.
struct PairedSample {
  signals::AudioSignal mixture;
  signals::AudioSignal target;
  signals::AudioSignal interferer;
  EegSignal eeg;
  int subject_id = 0;
  int trial_id = 0;
  int attended_label = 0;
  Window window;
  std::string stimulus_key;  // identifies the stimulus pair; splits never share a region of it
};

using Dataset = std::vector<PairedSample>;

struct SynthConfig {
  int n_subjects = 2;
  int n_trials = 4;
  double duration_s = 60.0;
  int eeg_channels = 16;
  double eeg_rate = kDefaultEegRate;
  double attn_gain = 1.0;
  double noise_level = 0.1;

  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

// Full-length trials with mixture = attended + unattended at natural levels.
Dataset synth_cocktail(const SynthConfig& config, uint64_t seed);

// Binary EEG interchange file.
void write_eegb(const std::filesystem::path& path, const EegSignal& eeg);
EegSignal read_eegb(const std::filesystem::path& path);

struct ManifestEntry {
  int subject = 0;
  int trial = 0;
  std::string audio_attended;
  std::string audio_unattended;
  std::string eeg;
  int attended_label = 0;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

// Writes WAV/EEGB files plus manifest.jsonl under `dir`.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);

struct Rejection {
  size_t line = 0;
  std::string reason;
};

struct IngestResult {
  Dataset dataset;
  std::vector<Rejection> rejected;
};

// Paths in the manifest are relative to its directory. EEG is decimated by an
// integer factor to `eeg_rate`.
IngestResult ingest_interchange(const std::filesystem::path& manifest_path, double eeg_rate = kDefaultEegRate);

enum class Split { kTrain, kValidation, kTest };
const char* split_name(Split split);
Split parse_split(const std::string& name);

// A contiguous stretch of one trial, in EEG frames.
struct Region {
  size_t sample = 0;  // index into the dataset
  int subject = 0;
  int trial = 0;
  std::string stimulus_key;
  Eigen::Index start_frame = 0;
  Eigen::Index frames = 0;
  double start_s = 0.0;
  double duration_s = 0.0;
};

struct SplitManifest {
  std::vector<Region> train;
  std::vector<Region> validation;
  std::vector<Region> test;
  double eeg_rate = kDefaultEegRate;
  uint64_t seed = 0;

  const std::vector<Region>& regions(Split split) const;
  nlohmann::json to_json() const;
  static SplitManifest from_json(const nlohmann::json& j);
};

struct SplitRatios {
  double train = 0.75;
  double validation = 0.125;
  double test = 0.125;
};

// Per trial, cuts three contiguous regions whose order is drawn from the
// seed and the stimulus key. Every region must hold `min_window_s`.
SplitManifest make_splits(const Dataset& dataset, SplitRatios ratios, uint64_t seed, double min_window_s = 1.0);

// Crops `frames` EEG frames from `region` starting `offset` frames in, with
// the matching audio interval, and remixes at `snr_db`.
PairedSample crop(const Dataset& dataset, const Region& region, Eigen::Index offset, Eigen::Index frames,
                  double snr_db);

PairedSample sample_training_window(const Dataset& dataset, const SplitManifest& manifest, Split split,
                                    double window_s, std::pair<double, double> snr_range, std::mt19937_64& rng);

struct WindowRef {
  size_t region = 0;  // index into manifest.regions(split)
  Eigen::Index offset = 0;
  Eigen::Index frames = 0;
};

// Non-overlapping tiling of every region, for each requested length; at most
// `per_region` windows of each length per region (0 means no limit).
std::vector<WindowRef> tile_windows(const SplitManifest& manifest, Split split, const std::vector<double>& window_s,
                                    size_t per_region = 0);

}  // namespace neurosteer::data
