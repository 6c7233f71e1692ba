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

#include "neurosteer/experiment.hpp"

#include <cstdio>
#include <sstream>

#include "neurosteer/errors.hpp"
#include "neurosteer/log.hpp"

namespace neurosteer::experiment {

namespace fs = std::filesystem;
using json = nlohmann::json;
using model::Module;
using train::Stage;

namespace {

struct Trained {
  train::StageResult result;
  std::string checkpoint;
};

Trained train_one(const train::StageConfig& stage, const data::Dataset& dataset, const data::SplitManifest& manifest,
                  const fs::path& work_dir, const std::string& name, model::Model& out) {
  train::StageOptions opt;
  opt.log_path = work_dir / (name + ".jsonl");
  opt.checkpoint_path = work_dir / (name + ".ckpt");
  opt.dump_dir = work_dir;
  log::info("training " + name + " (" + train::stage_name(stage.stage) + ")");
  Trained t{train::run_stage(stage, dataset, manifest, out, opt), opt.checkpoint_path.string()};
  return t;
}

void score(SystemResult& row, model::Model& m, const RunConfig& cfg, const data::Dataset& dataset,
           const data::SplitManifest& manifest, data::Split split, metrics::Association association) {
  metrics::EvalConfig e = cfg.evaluation();
  e.association = association;
  e.with_aad = false;
  e.with_stoi = false;
  e.pesq.reset();
  const auto results = metrics::evaluate(m, dataset, manifest, split, e);
  const auto summary = metrics::summarize(results);
  row.si_sdr = summary.si_sdr;
  row.si_sdri = summary.si_sdri;
  row.ppr = summary.ppr;
  row.association = metrics::association_name(association);
}

}  // namespace

json SystemResult::to_json() const {
  return {{"sys", sys},
          {"stage", stage},
          {"alpha", alpha},
          {"init_se_ee", init_se_ee},
          {"init_aad", init_aad},
          {"fix_aad", fix_aad},
          {"fix_ee", fix_ee},
          {"fix_se", fix_se},
          {"association", association},
          {"si_sdr", si_sdr},
          {"si_sdri", si_sdri},
          {"ppr", ppr},
          {"best_epoch", best_epoch},
          {"steps", steps},
          {"checkpoint", checkpoint}};
}

std::vector<SystemResult> run_ablation(const RunConfig& cfg, train::Grid grid, const data::Dataset& dataset,
                                       const data::SplitManifest& manifest, const PipelineOptions& options) {
  if (options.work_dir.empty()) throw ConfigError("ablation needs a work directory");
  fs::create_directories(options.work_dir);
  const auto want = [&](int sys) { return options.systems.empty() || options.systems.count(sys) > 0; };
  const auto joint_model = cfg.model_for(Stage::kJoint);

  std::vector<SystemResult> rows;
  std::string se_ckpt = options.se_checkpoint;
  if (se_ckpt.empty()) {
    model::Model m(joint_model, cfg.model_seed());
    auto t = train_one(cfg.stage(Stage::kSe, 1), dataset, manifest, options.work_dir, "sys1", m);
    se_ckpt = t.checkpoint;
    if (grid == train::Grid::kTable1 && want(1)) {
      SystemResult row;
      row.sys = 1;
      row.stage = "se";
      row.best_epoch = t.result.best_epoch;
      row.steps = t.result.steps;
      row.checkpoint = t.checkpoint;
      score(row, m, cfg, dataset, manifest, options.eval_split, metrics::Association::kFixedStream);
      rows.push_back(row);
    }
  }

  auto specs = train::ablation_grid(cfg.stage(Stage::kJoint), grid, se_ckpt, options.aad_checkpoint);
  bool need_aad = false;
  for (const auto& s : specs) need_aad = need_aad || (s.sys != 1 && want(s.sys) && s.init_aad);
  std::string aad_ckpt = options.aad_checkpoint;
  if (need_aad && aad_ckpt.empty()) {
    model::Model m(joint_model, cfg.model_seed());
    auto stage = cfg.stage(Stage::kAad);
    stage.init = {{Module::kEegEncoder, se_ckpt}};
    aad_ckpt = train_one(stage, dataset, manifest, options.work_dir, "aad_pretrain", m).checkpoint;
  }

  for (auto& spec : specs) {
    if (spec.sys == 1 || !want(spec.sys)) continue;
    if (spec.init_aad) spec.config.init[Module::kAad] = aad_ckpt;
    spec.config.seed = cfg.derive("stage/joint", static_cast<uint64_t>(spec.sys));
    model::Model m(joint_model, cfg.model_seed());
    const std::string name = "sys" + std::to_string(spec.sys);
    auto t = train_one(spec.config, dataset, manifest, options.work_dir, name, m);
    SystemResult row;
    row.sys = spec.sys;
    row.stage = train::stage_name(spec.config.stage);
    row.alpha = spec.config.alpha;
    row.init_se_ee = spec.init_se_ee;
    row.init_aad = spec.init_aad;
    row.fix_aad = spec.fix_aad;
    row.fix_ee = spec.fix_ee;
    row.fix_se = spec.fix_se;
    row.best_epoch = t.result.best_epoch;
    row.steps = t.result.steps;
    row.checkpoint = t.checkpoint;
    score(row, m, cfg, dataset, manifest, options.eval_split, metrics::Association::kFixedStream);
    rows.push_back(row);
  }
  return rows;
}

std::vector<SystemResult> run_cascade_baseline(const RunConfig& cfg, const data::Dataset& dataset,
                                               const data::SplitManifest& manifest, const PipelineOptions& options) {
  if (options.work_dir.empty()) throw ConfigError("cascade baseline needs a work directory");
  const auto want = [&](int sys) { return options.systems.empty() || options.systems.count(sys) > 0; };
  if ((want(14) || want(15)) && options.aad_checkpoint.empty()) {
    throw ConfigError("systems 14 and 15 need the pretrained AAD checkpoint (aad_checkpoint)");
  }
  fs::create_directories(options.work_dir);
  const auto pit_model = cfg.model_for(Stage::kPit);

  model::Model sep(pit_model, cfg.model_seed());
  auto pit = train_one(cfg.stage(Stage::kPit, 13), dataset, manifest, options.work_dir, "pit", sep);
  std::vector<SystemResult> rows;
  auto base_row = [&](int sys, const std::string& stage) {
    SystemResult row;
    row.sys = sys;
    row.stage = stage;
    return row;
  };
  if (want(13)) {
    auto row = base_row(13, "pit");
    row.best_epoch = pit.result.best_epoch;
    row.steps = pit.result.steps;
    row.checkpoint = pit.checkpoint;
    score(row, sep, cfg, dataset, manifest, options.eval_split, metrics::Association::kOracle);
    rows.push_back(row);
  }
  if (want(14)) {
    model::Model m(pit_model, cfg.model_seed());
    const auto pit_ckpt = train::load_checkpoint(pit.checkpoint);
    const auto aad_ckpt = train::load_checkpoint(options.aad_checkpoint);
    train::load_parameters(m, pit_ckpt, Module::kExtractor);
    train::load_parameters(m, aad_ckpt, Module::kEegEncoder);
    train::load_parameters(m, aad_ckpt, Module::kAad);
    auto row = base_row(14, "pit+aad");
    row.init_aad = true;
    row.checkpoint = pit.checkpoint;
    score(row, m, cfg, dataset, manifest, options.eval_split, metrics::Association::kAad);
    rows.push_back(row);
  }
  if (want(15)) {
    auto stage = cfg.stage(Stage::kPitAadJoint, 15);
    stage.init = {{Module::kExtractor, pit.checkpoint},
                  {Module::kEegEncoder, options.aad_checkpoint},
                  {Module::kAad, options.aad_checkpoint}};
    model::Model m(pit_model, cfg.model_seed());
    auto t = train_one(stage, dataset, manifest, options.work_dir, "sys15", m);
    auto row = base_row(15, "pit_aad_joint");
    row.alpha = stage.alpha;
    row.init_aad = true;
    row.best_epoch = t.result.best_epoch;
    row.steps = t.result.steps;
    row.checkpoint = t.checkpoint;
    score(row, m, cfg, dataset, manifest, options.eval_split, metrics::Association::kAad);
    rows.push_back(row);
  }
  return rows;
}

std::string results_markdown(const std::vector<SystemResult>& rows) {
  auto mark = [](bool b) { return b ? "x" : " "; };
  std::ostringstream out;
  out << "| Sys | Stage | alpha | Init SE&EE | Init AAD | Fix AAD | Fix EE | Fix SE | SI-SDR (dB) | SI-SDRi (dB) | PPR (%) |\n";
  out << "|---|---|---|---|---|---|---|---|---|---|---|\n";
  char buf[64];
  for (const auto& r : rows) {
    out << "| " << r.sys << " | " << r.stage << " | ";
    std::snprintf(buf, sizeof buf, "%g", r.alpha);
    out << buf << " | " << mark(r.init_se_ee) << " | " << mark(r.init_aad) << " | " << mark(r.fix_aad) << " | "
        << mark(r.fix_ee) << " | " << mark(r.fix_se) << " | ";
    std::snprintf(buf, sizeof buf, "%.3f | %.3f | %.1f", r.si_sdr, r.si_sdri, r.ppr);
    out << buf << " |\n";
  }
  return out.str();
}

}  // namespace neurosteer::experiment
