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

// Evaluation metrics and the evaluation loop.
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurosteer/dataio.hpp"
#include "neurosteer/model.hpp"

namespace neurosteer::metrics {

// si_sdr(s, s_hat) - si_sdr(s, x)
double si_sdri(std::span<const double> s, std::span<const double> x, std::span<const double> s_hat);
double sdri(std::span<const double> s, std::span<const double> x, std::span<const double> s_hat);

// Classic STOI. Input at `rate` is resampled to 10 kHz first. Throws
// DataError when fewer than 30 non-silent frames remain.
double stoi(std::span<const double> s, std::span<const double> s_hat, double rate = 8000.0);
double stoii(std::span<const double> s, std::span<const double> x, std::span<const double> s_hat,
             double rate = 8000.0);

// External PESQ scorer: `command ref.wav deg.wav` must print one number.
struct PesqScorer {
  std::string command;
};

struct PesqOutcome {
  std::optional<double> value;
  std::string reason;  // why `value` is absent
};

PesqOutcome pesqi(std::span<const double> s, std::span<const double> x, std::span<const double> s_hat,
                  const PesqScorer* scorer);

struct SampleResult {
  double si_sdri_target = 0.0;
  double si_sdri_interferer = 0.0;
  double sdri = 0.0;
  double si_sdr = 0.0;  // si_sdr(s, s_hat)
  std::optional<double> stoii;
  std::optional<double> pesqi;
  std::optional<double> aad_prob;  // probability that the first presented stream is attended
  std::optional<int> aad_label;    // 1 when the extracted target was presented first
  double window_s = 0.0;
  double start_s = 0.0;
  double snr_db = 0.0;
  int subject = 0;
  int trial = 0;

  // aad_prob if the label is 1, else 1 - aad_prob.
  std::optional<double> correct_prob() const;

  nlohmann::json to_json() const;
  static SampleResult from_json(const nlohmann::json& j);
};

// Percentage of samples with si_sdri_target > 0 and si_sdri_target > si_sdri_interferer.
double ppr(const std::vector<SampleResult>& results);

struct ScatterRow {
  double window_s = 0.0;
  double si_sdri_target = 0.0;
  double aad_prob = 0.0;  // probability of the correct association
};
// Samples without an AAD probability are skipped.
std::vector<ScatterRow> scatter_data(const std::vector<SampleResult>& results);

enum class Association {
  kFixedStream,  // stream 0 is the target (EEG-steered extractors)
  kOracle,       // stream with the higher SI-SDR against the target
  kAad,          // stream the AAD branch prefers
};
Association parse_association(const std::string& name);
const char* association_name(Association a);

struct EvalConfig {
  std::vector<double> window_s{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
  size_t per_region = 2;  // windows of each length per region; 0 keeps all
  std::pair<double, double> snr_db{0.0, 0.0};
  Association association = Association::kFixedStream;
  bool with_aad = true;  // score the AAD branch as well
  bool with_stoi = true;
  std::optional<PesqScorer> pesq;
  uint64_t seed = 0;

  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& j);
};

// 1 when o1 has the higher SI-SDR against s, else 0.
int oracle_pick(std::span<const double> s, std::span<const double> o0, std::span<const double> o1);

// Fills the metric fields and window metadata of `r` for the chosen estimate.
// snr_db and the AAD fields are left to the caller.
void score_window(const data::PairedSample& w, std::span<const double> s_hat, const EvalConfig& config,
                  SampleResult& r);

// Window lengths that fit no region are skipped. Eval mode, no gradients.
std::vector<SampleResult> evaluate(model::Model& model, const data::Dataset& dataset,
                                   const data::SplitManifest& manifest, data::Split split, const EvalConfig& config);

struct Summary {
  size_t count = 0;
  double si_sdri = 0.0;
  double sdri = 0.0;
  double si_sdr = 0.0;
  std::optional<double> stoii;
  std::optional<double> pesqi;
  std::optional<double> aad_accuracy;
  double ppr = 0.0;

  nlohmann::json to_json() const;
};
Summary summarize(const std::vector<SampleResult>& results);

void write_results(const std::filesystem::path& path, const std::vector<SampleResult>& results);
std::vector<SampleResult> read_results(const std::filesystem::path& path);

}  // namespace neurosteer::metrics
