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

// Staged training: schedule, optimizer, checkpoints and the stage runner.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurosteer/dataio.hpp"
#include "neurosteer/model.hpp"

namespace neurosteer::train {

using ag::Matrix;
using model::Module;

enum class Stage { kSe, kAad, kJoint, kPit, kPitAadJoint };
const char* stage_name(Stage stage);
Stage parse_stage(const std::string& name);

struct ScheduleConfig {
  long warmup_steps = 15000;
  double lr_factor = 0.1;
  int halving_patience = 6;
  int stop_patience = 10;
};

// lr_factor * N^-0.5 * n * warmup^-1.5 during warm-up, then the peak value.
// Plateau halving is applied on top by the caller.
double lr_at(long step, long model_dim, const ScheduleConfig& schedule = {});

// Tracks the best validation loss and decides on halving and stopping.
class PlateauController {
 public:
  explicit PlateauController(int halving_patience = 6, int stop_patience = 10);

  struct Decision {
    bool improved = false;
    bool halve = false;
    bool stop = false;
  };
  // Halving needs `warmup_done`; stopping does not.
  Decision observe(double val_loss, bool warmup_done);

  double best() const { return best_; }
  int since_best() const { return since_best_; }
  int since_halving() const { return since_halving_; }
  double scale() const { return scale_; }

  nlohmann::json to_json() const;
  static PlateauController from_json(const nlohmann::json& j);

 private:
  int halving_patience_;
  int stop_patience_;
  double best_;
  int since_best_ = 0;
  int since_halving_ = 0;
  double scale_ = 1.0;
};

struct StageConfig {
  Stage stage = Stage::kSe;
  std::map<Module, std::string> init;  // checkpoint per module; absent means fresh
  std::set<Module> freeze;
  double alpha = 1.0;
  int batch_size = 4;
  int max_epochs = 100;
  long max_steps = 0;  // 0: no step limit
  int windows_per_epoch = 2000;
  // Each batch uses one window length, drawn in whole seconds from this range.
  double min_window_s = 1.0;
  double max_window_s = 15.0;
  std::pair<double, double> snr_db{-10.0, 10.0};
  double val_window_s = 4.0;
  int val_windows_per_region = 4;
  ScheduleConfig schedule;
  double clip_norm = 5.0;  // 0 disables clipping
  uint64_t seed = 0;
  int log_every = 1;

  // Modules that take part in this stage's forward pass.
  std::set<Module> graph() const;
  // Adds the implied eeg_encoder freeze for the aad stage and checks the
  // config against the model. Throws ConfigError.
  StageConfig validated(const model::ModelConfig& model) const;

  nlohmann::json to_json() const;
  static StageConfig from_json(const nlohmann::json& j);
};

// Named blobs plus free-form metadata.
struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Matrix>> blobs;

  const Matrix* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Parameter blobs are named "param/<parameter name>".
void add_parameters(Checkpoint& ckpt, model::Model& model);
// Copies one module's parameters; a missing blob or shape mismatch is a ConfigError.
void load_parameters(model::Model& model, const Checkpoint& ckpt, Module module);

class Adam {
 public:
  Adam(nn::ParamList params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // Rescales gradients to `clip_norm` if their global norm exceeds it and
  // returns the norm before clipping.
  double clip(double clip_norm);
  void step(double lr);

  long steps() const { return t_; }
  void save(Checkpoint& ckpt) const;
  void load(const Checkpoint& ckpt);

 private:
  nn::ParamList params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  long step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // the selection quantity of the stage
  double val_se = 0.0;
  double val_aad = 0.0;
  double val_accuracy = 0.0;
  double lr = 0.0;
  bool improved = false;
  bool halved = false;
};

struct StageOptions {
  std::filesystem::path log_path;         // JSON lines; empty disables
  std::filesystem::path checkpoint_path;  // best checkpoint; empty disables
  std::filesystem::path dump_dir;         // NaN diagnostics; empty logs instead
};

struct StageResult {
  Checkpoint best;
  std::vector<EpochRecord> epochs;
  std::vector<double> lr_trace;
  long steps = 0;
  int best_epoch = 0;
  double best_val = 0.0;
  bool stopped_early = false;
};

// Loads `init`, applies `freeze`, trains with Adam, and leaves the model at
// its best validation checkpoint. NaN losses raise NumericalError after the
// batch has been dumped.
StageResult run_stage(const StageConfig& config, const data::Dataset& dataset, const data::SplitManifest& manifest,
                      model::Model& model, const StageOptions& options = {});

// One row of the ablation tables.
struct SystemSpec {
  int sys = 0;
  StageConfig config;
  bool init_se_ee = false;
  bool init_aad = false;
  bool fix_aad = false;
  bool fix_ee = false;
  bool fix_se = false;
};

enum class Grid { kTable1, kTable2 };
Grid parse_grid(const std::string& name);

// table1: initialisation and freezing grid, systems 1-7. table2: alpha sweep, systems 8, 9, 10, 4, 11, 12.
// `se_checkpoint` holds the pretrained extractor and EEG encoder,
// `aad_checkpoint` the pretrained AAD branch.
std::vector<SystemSpec> ablation_grid(const StageConfig& base, Grid grid, const std::string& se_checkpoint,
                                      const std::string& aad_checkpoint);

}  // namespace neurosteer::train
