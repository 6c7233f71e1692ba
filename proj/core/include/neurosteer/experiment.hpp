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

// Multi-stage pipelines: the ablation grids and the cascade baselines.
#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurosteer/run_config.hpp"

namespace neurosteer::experiment {

struct SystemResult {
  int sys = 0;
  std::string stage;
  double alpha = 0.0;
  bool init_se_ee = false;
  bool init_aad = false;
  bool fix_aad = false;
  bool fix_ee = false;
  bool fix_se = false;
  std::string association;
  double si_sdr = 0.0;  // mean over the evaluated windows
  double si_sdri = 0.0;
  double ppr = 0.0;
  int best_epoch = 0;
  long steps = 0;
  std::string checkpoint;

  nlohmann::json to_json() const;
};

struct PipelineOptions {
  std::filesystem::path work_dir;  // checkpoints and logs
  data::Split eval_split = data::Split::kValidation;
  std::set<int> systems;           // empty: every system of the grid
  // Reuse pretrained checkpoints instead of training them.
  std::string se_checkpoint;
  std::string aad_checkpoint;
};

// Pretrains SE (Sys 1) and AAD, then trains and scores the requested
// systems. Sys 1 always runs unless `se_checkpoint` is given.
std::vector<SystemResult> run_ablation(const RunConfig& config, train::Grid grid, const data::Dataset& dataset,
                                       const data::SplitManifest& manifest, const PipelineOptions& options);

// Sys 13: PIT separator with oracle association. Sys 14: the same separator
// with the pretrained AAD picking the stream. Sys 15: separator and AAD
// fine-tuned together. Needs `aad_checkpoint` from the main pipeline.
std::vector<SystemResult> run_cascade_baseline(const RunConfig& config, const data::Dataset& dataset,
                                               const data::SplitManifest& manifest, const PipelineOptions& options);

std::string results_markdown(const std::vector<SystemResult>& rows);

}  // namespace neurosteer::experiment
