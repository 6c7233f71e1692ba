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

// One config file for a whole run. Every seed is derived from `seed`.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "neurosteer/dataio.hpp"
#include "neurosteer/metrics.hpp"
#include "neurosteer/model.hpp"
#include "neurosteer/training.hpp"

namespace neurosteer {

struct RunConfig {
  uint64_t seed = 0;
  data::SynthConfig synth;
  data::SplitRatios splits;
  model::ModelConfig model;
  // Per-stage settings without "stage" or "seed"; absent stages use defaults.
  std::map<train::Stage, train::StageConfig> stages;
  metrics::EvalConfig eval;

  // Unknown keys, per-section seeds and malformed values raise ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  // FNV-1a of the canonical JSON, 16 hex digits.
  std::string hash() const;

  uint64_t derive(const std::string& purpose, uint64_t index = 0) const;
  uint64_t synth_seed() const { return derive("synth"); }
  uint64_t split_seed() const { return derive("splits"); }
  uint64_t model_seed() const { return derive("model"); }

  // Stage settings with `stage` and a derived seed filled in. `index`
  // separates runs of the same stage, e.g. ablation systems.
  train::StageConfig stage(train::Stage stage, uint64_t index = 0) const;
  // Model config for the stage: PIT stages drop the EEG fusion.
  model::ModelConfig model_for(train::Stage stage) const;
  metrics::EvalConfig evaluation() const;
};

}  // namespace neurosteer
