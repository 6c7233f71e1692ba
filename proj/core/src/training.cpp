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

#include "neurosteer/training.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "neurosteer/dsp.hpp"
#include "neurosteer/errors.hpp"
#include "neurosteer/log.hpp"
#include "neurosteer/losses.hpp"

namespace neurosteer::train {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ag::Index;
using ag::Var;

namespace {

constexpr char kMagic[4] = {'N', 'H', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
void read_key(const json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("stage.") + key + ": wrong type");
  }
}

void reject_unknown(const json& j, const char* section, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError(std::string(section) + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw ConfigError(std::string("unknown key ") + section + "." + k);
  }
}

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const fs::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError(path.string() + ": truncated checkpoint");
  return v;
}

bool has_aad(Stage s) { return s == Stage::kAad || s == Stage::kJoint || s == Stage::kPitAadJoint; }

}  // namespace

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::kSe: return "se";
    case Stage::kAad: return "aad";
    case Stage::kJoint: return "joint";
    case Stage::kPit: return "pit";
    case Stage::kPitAadJoint: return "pit_aad_joint";
  }
  return "";
}

Stage parse_stage(const std::string& name) {
  for (Stage s : {Stage::kSe, Stage::kAad, Stage::kJoint, Stage::kPit, Stage::kPitAadJoint}) {
    if (name == stage_name(s)) return s;
  }
  throw ConfigError("unknown stage '" + name + "' (expected se, aad, joint, pit or pit_aad_joint)");
}

double lr_at(long step, long model_dim, const ScheduleConfig& schedule) {
  if (step < 0) throw ConfigError("lr_at: step must be non-negative");
  if (model_dim < 1 || schedule.warmup_steps < 1) throw ConfigError("lr_at: model_dim and warmup_steps must be positive");
  const double n = static_cast<double>(std::min(step, schedule.warmup_steps));
  return schedule.lr_factor / std::sqrt(static_cast<double>(model_dim)) * n *
         std::pow(static_cast<double>(schedule.warmup_steps), -1.5);
}

// ---- plateau -------------------------------------------------------------

PlateauController::PlateauController(int halving_patience, int stop_patience)
    : halving_patience_(halving_patience),
      stop_patience_(stop_patience),
      best_(std::numeric_limits<double>::infinity()) {
  if (halving_patience < 1 || stop_patience < 1) throw ConfigError("patience values must be at least 1");
}

PlateauController::Decision PlateauController::observe(double val_loss, bool warmup_done) {
  Decision d;
  if (val_loss < best_) {
    best_ = val_loss;
    since_best_ = 0;
    since_halving_ = 0;
    d.improved = true;
    return d;
  }
  ++since_best_;
  ++since_halving_;
  if (warmup_done && since_halving_ >= halving_patience_) {
    scale_ *= 0.5;
    since_halving_ = 0;
    d.halve = true;
  }
  d.stop = since_best_ >= stop_patience_;
  return d;
}

json PlateauController::to_json() const {
  return {{"halving_patience", halving_patience_},
          {"stop_patience", stop_patience_},
          {"best", std::isfinite(best_) ? json(best_) : json(nullptr)},
          {"since_best", since_best_},
          {"since_halving", since_halving_},
          {"scale", scale_}};
}

PlateauController PlateauController::from_json(const json& j) {
  PlateauController p(j.at("halving_patience").get<int>(), j.at("stop_patience").get<int>());
  if (!j.at("best").is_null()) p.best_ = j.at("best").get<double>();
  p.since_best_ = j.at("since_best").get<int>();
  p.since_halving_ = j.at("since_halving").get<int>();
  p.scale_ = j.at("scale").get<double>();
  return p;
}

// ---- stage config --------------------------------------------------------

std::set<Module> StageConfig::graph() const {
  switch (stage) {
    case Stage::kSe: return {Module::kEegEncoder, Module::kExtractor};
    case Stage::kAad: return {Module::kEegEncoder, Module::kAad};
    case Stage::kPit: return {Module::kExtractor};
    case Stage::kJoint:
    case Stage::kPitAadJoint: return {Module::kEegEncoder, Module::kExtractor, Module::kAad};
  }
  return {};
}

StageConfig StageConfig::validated(const model::ModelConfig& model) const {
  StageConfig c = *this;
  if (c.stage == Stage::kAad) c.freeze.insert(Module::kEegEncoder);
  const auto g = c.graph();
  for (Module m : c.freeze) {
    if (!g.count(m)) {
      throw ConfigError(std::string("cannot freeze ") + model::module_name(m) + ": not part of the " +
                        stage_name(c.stage) + " stage");
    }
  }
  for (const auto& [m, path] : c.init) {
    if (!g.count(m)) {
      throw ConfigError(std::string("cannot initialise ") + model::module_name(m) + ": not part of the " +
                        stage_name(c.stage) + " stage");
    }
  }
  if (c.freeze.size() == g.size()) throw ConfigError("every module of the stage is frozen; nothing to train");
  const bool pit = c.stage == Stage::kPit || c.stage == Stage::kPitAadJoint;
  if (pit == model.extractor.use_eeg) {
    throw ConfigError(pit ? "PIT stages need an extractor without EEG fusion (extractor.use_eeg = false)"
                          : "this stage needs an extractor with EEG fusion (extractor.use_eeg = true)");
  }
  if (c.batch_size < 1 || c.max_epochs < 1 || c.windows_per_epoch < 1 || c.max_steps < 0 || c.log_every < 1) {
    throw ConfigError("batch_size, max_epochs, windows_per_epoch and log_every must be positive");
  }
  if (!(c.min_window_s >= 1.0) || c.max_window_s < c.min_window_s || std::ceil(c.min_window_s) > c.max_window_s) {
    throw ConfigError("window range must hold at least one whole second >= 1 s");
  }
  if (c.snr_db.first > c.snr_db.second) throw ConfigError("snr range is inverted");
  if (!(c.val_window_s > 0.0) || c.val_windows_per_region < 1) throw ConfigError("invalid validation windows");
  if (c.alpha < 0.0) throw ConfigError("alpha must be non-negative");
  if (c.clip_norm < 0.0) throw ConfigError("clip_norm must be non-negative");
  if (c.schedule.warmup_steps < 1 || !(c.schedule.lr_factor > 0.0)) throw ConfigError("invalid lr schedule");
  return c;
}

json StageConfig::to_json() const {
  json init_j = json::object();
  for (const auto& [m, path] : init) init_j[model::module_name(m)] = path;
  json freeze_j = json::array();
  for (Module m : freeze) freeze_j.push_back(model::module_name(m));
  return {{"stage", stage_name(stage)},
          {"init", init_j},
          {"freeze", freeze_j},
          {"alpha", alpha},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"max_steps", max_steps},
          {"windows_per_epoch", windows_per_epoch},
          {"min_window_s", min_window_s},
          {"max_window_s", max_window_s},
          {"snr_db", {snr_db.first, snr_db.second}},
          {"val_window_s", val_window_s},
          {"val_windows_per_region", val_windows_per_region},
          {"schedule",
           {{"warmup_steps", schedule.warmup_steps},
            {"lr_factor", schedule.lr_factor},
            {"halving_patience", schedule.halving_patience},
            {"stop_patience", schedule.stop_patience}}},
          {"clip_norm", clip_norm},
          {"seed", seed},
          {"log_every", log_every}};
}

StageConfig StageConfig::from_json(const json& j) {
  reject_unknown(j, "stage",
                 {"stage", "init", "freeze", "alpha", "batch_size", "max_epochs", "max_steps", "windows_per_epoch",
                  "min_window_s", "max_window_s", "snr_db", "val_window_s", "val_windows_per_region", "schedule",
                  "clip_norm", "seed", "log_every"});
  StageConfig c;
  if (j.contains("stage")) {
    std::string s;
    read_key(j, "stage", s);
    c.stage = parse_stage(s);
  }
  if (j.contains("init")) {
    if (!j["init"].is_object()) throw ConfigError("stage.init must map module names to checkpoint paths");
    for (const auto& [k, v] : j["init"].items()) {
      if (!v.is_string()) throw ConfigError("stage.init." + k + " must be a path");
      c.init[model::parse_module(k)] = v.get<std::string>();
    }
  }
  if (j.contains("freeze")) {
    if (!j["freeze"].is_array()) throw ConfigError("stage.freeze must be a list of module names");
    for (const auto& v : j["freeze"]) {
      if (!v.is_string()) throw ConfigError("stage.freeze entries must be module names");
      c.freeze.insert(model::parse_module(v.get<std::string>()));
    }
  }
  read_key(j, "alpha", c.alpha);
  read_key(j, "batch_size", c.batch_size);
  read_key(j, "max_epochs", c.max_epochs);
  read_key(j, "max_steps", c.max_steps);
  read_key(j, "windows_per_epoch", c.windows_per_epoch);
  read_key(j, "min_window_s", c.min_window_s);
  read_key(j, "max_window_s", c.max_window_s);
  if (j.contains("snr_db")) {
    std::vector<double> r;
    read_key(j, "snr_db", r);
    if (r.size() != 2) throw ConfigError("stage.snr_db must be [low, high]");
    c.snr_db = {r[0], r[1]};
  }
  read_key(j, "val_window_s", c.val_window_s);
  read_key(j, "val_windows_per_region", c.val_windows_per_region);
  if (j.contains("schedule")) {
    const json& s = j["schedule"];
    reject_unknown(s, "stage.schedule", {"warmup_steps", "lr_factor", "halving_patience", "stop_patience"});
    read_key(s, "warmup_steps", c.schedule.warmup_steps);
    read_key(s, "lr_factor", c.schedule.lr_factor);
    read_key(s, "halving_patience", c.schedule.halving_patience);
    read_key(s, "stop_patience", c.schedule.stop_patience);
  }
  read_key(j, "clip_norm", c.clip_norm);
  read_key(j, "seed", c.seed);
  read_key(j, "log_every", c.log_every);
  return c;
}

// ---- checkpoints ---------------------------------------------------------

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : blobs) {
    if (n == name) return &m;
  }
  return nullptr;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  write_pod<uint32_t>(out, kVersion);
  const std::string meta = ckpt.meta.dump();
  write_pod<uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  write_pod<uint32_t>(out, static_cast<uint32_t>(ckpt.blobs.size()));
  for (const auto& [name, m] : ckpt.blobs) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint64_t>(out, static_cast<uint64_t>(m.rows()));
    write_pod<uint64_t>(out, static_cast<uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const auto size = static_cast<uint64_t>(fs::file_size(path));
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw DataError(path.string() + ": not a checkpoint");
  const auto version = read_pod<uint32_t>(in, path);
  if (version != kVersion) throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const auto meta_len = read_pod<uint64_t>(in, path);
  if (meta_len > size) throw DataError(path.string() + ": truncated checkpoint");
  std::string meta(meta_len, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw DataError(path.string() + ": truncated checkpoint");
  Checkpoint ckpt;
  try {
    ckpt.meta = json::parse(meta);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": corrupt checkpoint metadata: " + e.what());
  }
  const auto n = read_pod<uint32_t>(in, path);
  for (uint32_t i = 0; i < n; ++i) {
    const auto len = read_pod<uint32_t>(in, path);
    if (len > size) throw DataError(path.string() + ": truncated checkpoint");
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = read_pod<uint64_t>(in, path);
    const auto cols = read_pod<uint64_t>(in, path);
    if (rows * cols * sizeof(double) > size) throw DataError(path.string() + ": truncated checkpoint");
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw DataError(path.string() + ": truncated checkpoint");
    ckpt.blobs.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

void add_parameters(Checkpoint& ckpt, model::Model& model) {
  for (const auto& p : model.parameters()) ckpt.blobs.emplace_back("param/" + p.name, p.var->value());
}

void load_parameters(model::Model& model, const Checkpoint& ckpt, Module module) {
  for (const auto& p : model.parameters(module)) {
    const Matrix* m = ckpt.find("param/" + p.name);
    if (!m) throw ConfigError("checkpoint lacks parameter " + p.name);
    if (m->rows() != p.var->rows() || m->cols() != p.var->cols()) {
      throw ConfigError("checkpoint parameter " + p.name + " has shape " + std::to_string(m->rows()) + "x" +
                        std::to_string(m->cols()) + ", model expects " + std::to_string(p.var->rows()) + "x" +
                        std::to_string(p.var->cols()));
    }
    p.var->mutable_value() = *m;
  }
}

// ---- Adam ----------------------------------------------------------------

Adam::Adam(nn::ParamList params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.var->rows(), p.var->cols()));
    v_.push_back(Matrix::Zero(p.var->rows(), p.var->cols()));
  }
}

double Adam::clip(double clip_norm) {
  double sq = 0.0;
  for (const auto& p : params_) {
    if (p.var->grad().size()) sq += p.var->grad().squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (clip_norm > 0.0 && norm > clip_norm && std::isfinite(norm)) {
    const double f = clip_norm / norm;
    for (const auto& p : params_) {
      if (p.var->grad().size()) p.var->node()->grad *= f;
    }
  }
  return norm;
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    const Matrix& g = params_[i].var->grad();
    if (!g.size()) continue;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    params_[i].var->mutable_value().array() -=
        lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

void Adam::save(Checkpoint& ckpt) const {
  for (size_t i = 0; i < params_.size(); ++i) {
    ckpt.blobs.emplace_back("adam.m/" + params_[i].name, m_[i]);
    ckpt.blobs.emplace_back("adam.v/" + params_[i].name, v_[i]);
  }
  ckpt.meta["adam_steps"] = t_;
}

void Adam::load(const Checkpoint& ckpt) {
  for (size_t i = 0; i < params_.size(); ++i) {
    const Matrix* m = ckpt.find("adam.m/" + params_[i].name);
    const Matrix* v = ckpt.find("adam.v/" + params_[i].name);
    if (!m || !v) throw ConfigError("checkpoint lacks optimizer state for " + params_[i].name);
    m_[i] = *m;
    v_[i] = *v;
  }
  t_ = ckpt.meta.value("adam_steps", 0L);
}

// ---- stage runner --------------------------------------------------------

namespace {

struct SampleLoss {
  Var total;
  double se = std::numeric_limits<double>::quiet_NaN();
  double aad = std::numeric_limits<double>::quiet_NaN();
  bool correct = false;
};

// `y` is 1 when the target-side stream is presented first to the AAD branch.
SampleLoss forward_sample(const StageConfig& cfg, model::Model& m, const data::PairedSample& w, int y,
                          const nn::ForwardContext& ctx) {
  const Matrix s = loss::column(w.target);
  const Matrix b = loss::column(w.interferer);
  SampleLoss out;
  auto decide = [&](const model::SequenceEmbedding& rep, const Var& target_side, const Var& other) {
    Var p = y == 1 ? m.aad().forward(rep, target_side, other, ctx) : m.aad().forward(rep, other, target_side, ctx);
    out.correct = (p.item() > 0.5) == (y == 1);
    Var l = loss::aad_loss(y, p);
    out.aad = l.item();
    return l;
  };
  switch (cfg.stage) {
    case Stage::kSe: {
      auto rep = m.eeg_encoder().encode(w.eeg.channels, w.eeg.rate, ctx);
      auto est = m.extractor().extract(model::to_column(w.mixture), &rep, ctx);
      out.total = loss::se_loss(s, b, est.s_hat, est.b_hat);
      out.se = out.total.item();
      break;
    }
    case Stage::kPit: {
      auto est = m.extractor().extract(model::to_column(w.mixture), nullptr, ctx);
      out.total = loss::pit_loss(s, b, est.s_hat, est.b_hat).loss;
      out.se = out.total.item();
      break;
    }
    case Stage::kAad: {
      auto rep = m.eeg_encoder().encode(w.eeg.channels, w.eeg.rate, ctx);
      out.total = decide(rep, ag::constant(s), ag::constant(b));
      break;
    }
    case Stage::kJoint: {
      auto rep = m.eeg_encoder().encode(w.eeg.channels, w.eeg.rate, ctx);
      auto est = m.extractor().extract(model::to_column(w.mixture), &rep, ctx);
      Var se = loss::se_loss(s, b, est.s_hat, est.b_hat);
      out.se = se.item();
      if (cfg.alpha == 0.0) {
        out.total = se;
      } else {
        out.total = loss::finetune_loss(se, decide(rep, est.s_hat, est.b_hat), cfg.alpha);
      }
      break;
    }
    case Stage::kPitAadJoint: {
      auto est = m.extractor().extract(model::to_column(w.mixture), nullptr, ctx);
      auto pit = loss::pit_loss(s, b, est.s_hat, est.b_hat);
      out.se = pit.loss.item();
      const bool identity = pit.permutation == loss::Permutation::kIdentity;
      const Var& target_side = identity ? est.s_hat : est.b_hat;
      const Var& other = identity ? est.b_hat : est.s_hat;
      auto rep = m.eeg_encoder().encode(w.eeg.channels, w.eeg.rate, ctx);
      out.total = cfg.alpha == 0.0 ? pit.loss : loss::finetune_loss(pit.loss, decide(rep, target_side, other), cfg.alpha);
      break;
    }
  }
  return out;
}

// The quantity that drives checkpoint selection and the plateau rules.
double selection_value(Stage stage, double se, double aad) { return stage == Stage::kAad ? aad : se; }

json window_json(const data::PairedSample& w, double snr_db) {
  return {{"subject", w.subject_id},
          {"trial", w.trial_id},
          {"start_s", w.window.start_s},
          {"duration_s", w.window.duration_s},
          {"snr_db", snr_db}};
}

double measured_snr(const data::PairedSample& w) {
  return 10.0 * std::log10(signals::mean_power(w.target.view()) / signals::mean_power(w.interferer.view()));
}

[[noreturn]] void abort_numerical(const StageOptions& opt, const StageConfig& cfg, long step, int epoch,
                                  const std::vector<json>& batch, const std::string& what) {
  json dump = {{"error", what},
               {"stage", stage_name(cfg.stage)},
               {"step", step},
               {"epoch", epoch},
               {"batch", batch},
               {"config", cfg.to_json()}};
  std::string where;
  if (!opt.dump_dir.empty()) {
    fs::create_directories(opt.dump_dir);
    const fs::path p = opt.dump_dir / ("nan_dump_step" + std::to_string(step) + ".json");
    std::ofstream(p) << dump.dump(2) << "\n";
    where = "; batch dumped to " + p.string();
  } else {
    log::error("numerical failure dump: " + dump.dump());
  }
  throw NumericalError(what + " at step " + std::to_string(step) + where);
}

struct Validation {
  double se = 0.0;
  double aad = 0.0;
  double accuracy = 0.0;
};

Validation validate(const StageConfig& cfg, model::Model& m, const data::Dataset& dataset,
                    const data::SplitManifest& manifest, const std::vector<data::WindowRef>& windows) {
  ag::NoGradGuard guard;
  const nn::ForwardContext eval;
  const auto& regions = manifest.regions(data::Split::kValidation);
  Validation v;
  for (const auto& ref : windows) {
    std::mt19937_64 rng = dsp::stream(cfg.seed, {0x7A1, ref.region, static_cast<uint64_t>(ref.offset),
                                                 static_cast<uint64_t>(ref.frames)});
    std::uniform_real_distribution<double> snr(cfg.snr_db.first, cfg.snr_db.second);
    const double snr_db = cfg.snr_db.first == cfg.snr_db.second ? cfg.snr_db.first : snr(rng);
    const int y = std::bernoulli_distribution(0.5)(rng) ? 1 : 0;
    auto w = data::crop(dataset, regions[ref.region], ref.offset, ref.frames, snr_db);
    auto r = forward_sample(cfg, m, w, y, eval);
    v.se += std::isnan(r.se) ? 0.0 : r.se;
    v.aad += std::isnan(r.aad) ? 0.0 : r.aad;
    v.accuracy += r.correct ? 1.0 : 0.0;
  }
  const auto n = static_cast<double>(windows.size());
  v.se /= n;
  v.aad /= n;
  v.accuracy /= n;
  return v;
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

}  // namespace

StageResult run_stage(const StageConfig& config, const data::Dataset& dataset, const data::SplitManifest& manifest,
                      model::Model& model, const StageOptions& options) {
  const StageConfig cfg = config.validated(model.config());
  for (const auto& [mod, path] : cfg.init) load_parameters(model, load_checkpoint(path), mod);

  const auto graph = cfg.graph();
  nn::ParamList trainable;
  for (Module mod : {Module::kEegEncoder, Module::kExtractor, Module::kAad}) {
    const bool on = graph.count(mod) && !cfg.freeze.count(mod);
    model.set_trainable(mod, on);
    if (on) {
      auto ps = model.parameters(mod);
      trainable.insert(trainable.end(), ps.begin(), ps.end());
    }
  }
  Adam adam(trainable);
  PlateauController plateau(cfg.schedule.halving_patience, cfg.schedule.stop_patience);

  if (has_aad(cfg.stage)) {
    const auto need = model::min_decision_length(model.config().aad);
    if (std::llround(cfg.min_window_s * manifest.eeg_rate) < need ||
        std::llround(cfg.val_window_s * manifest.eeg_rate) < need) {
      throw ConfigError("AAD stages need windows of at least " + std::to_string(need) + " EEG frames");
    }
  }
  const auto val_windows = data::tile_windows(manifest, data::Split::kValidation, {cfg.val_window_s},
                                              static_cast<size_t>(cfg.val_windows_per_region));
  if (val_windows.empty()) throw DataError("no validation window of " + std::to_string(cfg.val_window_s) + " s fits");

  std::ofstream log_out;
  if (!options.log_path.empty()) {
    if (options.log_path.has_parent_path()) fs::create_directories(options.log_path.parent_path());
    log_out.open(options.log_path, std::ios::trunc);
    if (!log_out) throw DataError("cannot write training log " + options.log_path.string());
    log_out << json{{"type", "config"}, {"stage", cfg.to_json()}, {"model", model.config().to_json()}}.dump() << "\n";
  }

  std::mt19937_64 data_rng = dsp::stream(cfg.seed, {0xDA7A});
  std::mt19937_64 drop_rng = dsp::stream(cfg.seed, {0xD0});
  const nn::ForwardContext train_ctx{true, &drop_rng};
  const auto lo_s = static_cast<int>(std::ceil(cfg.min_window_s));
  const auto hi_s = static_cast<int>(std::floor(cfg.max_window_s));
  std::uniform_int_distribution<int> length_s(lo_s, hi_s);
  const long steps_per_epoch = (cfg.windows_per_epoch + cfg.batch_size - 1) / cfg.batch_size;
  const long n_dim = model.config().extractor.width;

  StageResult result;
  long step = 0;
  bool out_of_steps = false;
  for (int epoch = 1; epoch <= cfg.max_epochs && !out_of_steps; ++epoch) {
    double train_sum = 0.0;
    long train_n = 0;
    for (long k = 0; k < steps_per_epoch; ++k) {
      model.zero_grad();
      const double win_s = length_s(data_rng);
      double batch_loss = 0.0, batch_se = 0.0, batch_aad = 0.0;
      std::vector<json> batch_info;
      std::vector<int> labels;
      for (int i = 0; i < cfg.batch_size; ++i) {
        auto w = data::sample_training_window(dataset, manifest, data::Split::kTrain, win_s, cfg.snr_db, data_rng);
        const int y = std::bernoulli_distribution(0.5)(data_rng) ? 1 : 0;
        labels.push_back(y);
        auto r = forward_sample(cfg, model, w, y, train_ctx);
        json info = window_json(w, measured_snr(w));
        info["label"] = y;
        info["loss"] = r.total.item();
        batch_info.push_back(std::move(info));
        if (!std::isfinite(r.total.item())) {
          abort_numerical(options, cfg, step + 1, epoch, batch_info, "non-finite loss");
        }
        ag::backward(ag::scale(r.total, 1.0 / cfg.batch_size));
        batch_loss += r.total.item() / cfg.batch_size;
        batch_se += r.se / cfg.batch_size;
        batch_aad += r.aad / cfg.batch_size;
      }
      const double norm = adam.clip(cfg.clip_norm);
      if (!std::isfinite(norm)) abort_numerical(options, cfg, step + 1, epoch, batch_info, "non-finite gradient");
      ++step;
      const double lr = lr_at(step, n_dim, cfg.schedule) * plateau.scale();
      adam.step(lr);
      result.lr_trace.push_back(lr);
      train_sum += batch_loss;
      ++train_n;
      if (log_out.is_open() && step % cfg.log_every == 0) {
        json rec = {{"type", "step"}, {"step", step}, {"epoch", epoch}, {"lr", lr},
                    {"loss", batch_loss}, {"grad_norm", norm}, {"window_s", win_s}};
        if (std::isfinite(batch_se)) rec["se"] = batch_se;
        if (std::isfinite(batch_aad)) {
          rec["aad"] = batch_aad;
          rec["labels"] = labels;
        }
        log_out << rec.dump() << "\n";
      }
      if (cfg.max_steps > 0 && step >= cfg.max_steps) {
        out_of_steps = true;
        break;
      }
    }

    const Validation v = validate(cfg, model, dataset, manifest, val_windows);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.step = step;
    rec.train_loss = train_sum / static_cast<double>(std::max(1L, train_n));
    rec.val_se = v.se;
    rec.val_aad = v.aad;
    rec.val_accuracy = v.accuracy;
    rec.val_loss = selection_value(cfg.stage, v.se, v.aad);
    rec.lr = result.lr_trace.empty() ? 0.0 : result.lr_trace.back();
    if (!std::isfinite(rec.val_loss)) {
      abort_numerical(options, cfg, step, epoch, {}, "non-finite validation loss");
    }
    const auto d = plateau.observe(rec.val_loss, step >= cfg.schedule.warmup_steps);
    rec.improved = d.improved;
    rec.halved = d.halve;
    if (d.improved) {
      Checkpoint best;
      best.meta = {{"format", "neurosteer-checkpoint"},
                   {"model", model.config().to_json()},
                   {"stage", cfg.to_json()},
                   {"epoch", epoch},
                   {"step", step},
                   {"best_val", rec.val_loss},
                   {"plateau", plateau.to_json()},
                   {"rng", rng_state(data_rng)}};
      add_parameters(best, model);
      adam.save(best);
      result.best = std::move(best);
      result.best_epoch = epoch;
      result.best_val = rec.val_loss;
    }
    result.epochs.push_back(rec);
    if (log_out.is_open()) {
      log_out << json{{"type", "epoch"},
                      {"epoch", epoch},
                      {"step", step},
                      {"train_loss", rec.train_loss},
                      {"val_loss", rec.val_loss},
                      {"val_se", rec.val_se},
                      {"val_aad", rec.val_aad},
                      {"val_accuracy", rec.val_accuracy},
                      {"bvl", plateau.best()},
                      {"since_best", plateau.since_best()},
                      {"since_halving", plateau.since_halving()},
                      {"lr_scale", plateau.scale()},
                      {"improved", d.improved},
                      {"halved", d.halve},
                      {"stop", d.stop}}
                     .dump()
              << "\n";
    }
    log::info(std::string(stage_name(cfg.stage)) + " epoch " + std::to_string(epoch) + ": train " +
              std::to_string(rec.train_loss) + ", val " + std::to_string(rec.val_loss) +
              (d.improved ? " (best)" : ""));
    if (d.stop) {
      result.stopped_early = true;
      break;
    }
  }
  result.steps = step;

  for (Module mod : {Module::kEegEncoder, Module::kExtractor, Module::kAad}) {
    load_parameters(model, result.best, mod);
  }
  if (!options.checkpoint_path.empty()) save_checkpoint(options.checkpoint_path, result.best);
  return result;
}

// ---- ablation grid -------------------------------------------------------

Grid parse_grid(const std::string& name) {
  if (name == "table1") return Grid::kTable1;
  if (name == "table2") return Grid::kTable2;
  throw ConfigError("unknown grid '" + name + "' (expected table1 or table2)");
}

std::vector<SystemSpec> ablation_grid(const StageConfig& base, Grid grid, const std::string& se_checkpoint,
                                      const std::string& aad_checkpoint) {
  auto joint = [&](int sys, double alpha, bool init_se_ee, bool init_aad, bool fix_aad, bool fix_ee, bool fix_se) {
    SystemSpec s{sys, base, init_se_ee, init_aad, fix_aad, fix_ee, fix_se};
    s.config.stage = Stage::kJoint;
    s.config.alpha = alpha;
    s.config.init.clear();
    s.config.freeze.clear();
    if (init_se_ee) {
      s.config.init[Module::kExtractor] = se_checkpoint;
      s.config.init[Module::kEegEncoder] = se_checkpoint;
    }
    if (init_aad) s.config.init[Module::kAad] = aad_checkpoint;
    if (fix_aad) s.config.freeze.insert(Module::kAad);
    if (fix_ee) s.config.freeze.insert(Module::kEegEncoder);
    if (fix_se) s.config.freeze.insert(Module::kExtractor);
    return s;
  };
  std::vector<SystemSpec> out;
  if (grid == Grid::kTable1) {
    SystemSpec sys1{1, base};
    sys1.config.stage = Stage::kSe;
    sys1.config.alpha = 0.0;
    sys1.config.init.clear();
    sys1.config.freeze.clear();
    out.push_back(sys1);
    out.push_back(joint(2, 1.0, false, false, false, false, false));
    out.push_back(joint(3, 1.0, true, false, false, false, false));
    out.push_back(joint(4, 1.0, true, true, false, false, false));
    out.push_back(joint(5, 1.0, true, true, true, false, false));
    out.push_back(joint(6, 1.0, true, true, true, true, false));
    out.push_back(joint(7, 1.0, true, true, true, false, true));
  } else {
    const std::pair<int, double> sweep[] = {{8, 0.001}, {9, 0.01}, {10, 0.1}, {4, 1.0}, {11, 10.0}, {12, 100.0}};
    for (auto [sys, alpha] : sweep) out.push_back(joint(sys, alpha, true, true, false, false, false));
  }
  return out;
}

}  // namespace neurosteer::train
