#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "neurosteer/errors.hpp"
#include "neurosteer/log.hpp"
#include "neurosteer/training.hpp"

namespace neurosteer {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ag::Matrix;
using model::Module;
using train::Stage;
using train::StageConfig;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("neurosteer_training_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

model::ModelConfig toy_model(bool use_eeg = true) {
  model::ModelConfig c;
  c.eeg = {4, 8, 1, 1, 2, 0.0};
  c.extractor.width = 8;
  c.extractor.blocks = 1;
  c.extractor.chunk = 20;
  c.extractor.hidden = 4;
  c.extractor.use_eeg = use_eeg;
  c.aad.width = 8;
  c.aad.stim_layers = 1;
  c.aad.ff_multiplier = 2;
  c.aad.dropout = 0.0;
  return c;
}

struct ToyData {
  data::Dataset dataset;
  data::SplitManifest manifest;
};

const ToyData& toy_data() {
  static const ToyData d = [] {
    data::SynthConfig sc;
    sc.n_subjects = 1;
    sc.n_trials = 2;
    sc.duration_s = 24.0;
    sc.eeg_channels = 4;
    ToyData t;
    t.dataset = data::synth_cocktail(sc, 5);
    t.manifest = data::make_splits(t.dataset, {}, 5);
    return t;
  }();
  return d;
}

StageConfig toy_stage(Stage stage) {
  StageConfig c;
  c.stage = stage;
  c.batch_size = 2;
  c.max_epochs = 2;
  c.windows_per_epoch = 4;
  c.min_window_s = 1.0;
  c.max_window_s = 2.0;
  c.val_window_s = 1.0;
  c.val_windows_per_region = 1;
  c.schedule.warmup_steps = 10;
  c.schedule.lr_factor = 1.0;
  c.seed = 3;
  return c;
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::ifstream in(p);
  std::vector<json> out;
  for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
  return out;
}

class Quiet : public ::testing::Environment {
 public:
  void SetUp() override { log::set_level(log::Level::kWarn); }
};
const auto* const kQuiet = ::testing::AddGlobalTestEnvironment(new Quiet);

// ---- schedule --------------------------------------------------------------

TEST(Schedule, PeakValueAtEndOfWarmup) {
  EXPECT_NEAR(train::lr_at(15000, 64), 1.0206e-4, 1e-8);
  EXPECT_EQ(train::lr_at(0, 64), 0.0);
  EXPECT_DOUBLE_EQ(train::lr_at(40000, 64), train::lr_at(15000, 64));
}

TEST(Schedule, LinearDuringWarmup) {
  const double peak = 0.1 / 8.0 / std::sqrt(15000.0);
  for (long n : {1L, 10L, 7500L, 14999L}) {
    EXPECT_NEAR(train::lr_at(n, 64), peak * static_cast<double>(n) / 15000.0, 1e-15);
  }
  EXPECT_THROW(train::lr_at(-1, 64), ConfigError);
  EXPECT_THROW(train::lr_at(1, 0), ConfigError);
}

TEST(Plateau, HalvesAfterSixAndStopsAfterTen) {
  train::PlateauController p;
  EXPECT_TRUE(p.observe(1.0, true).improved);
  for (int e = 1; e <= 5; ++e) {
    auto d = p.observe(1.0, true);
    EXPECT_FALSE(d.halve || d.stop || d.improved) << e;
  }
  auto sixth = p.observe(1.5, true);
  EXPECT_TRUE(sixth.halve);
  EXPECT_FALSE(sixth.stop);
  EXPECT_DOUBLE_EQ(p.scale(), 0.5);
  for (int e = 7; e <= 9; ++e) EXPECT_FALSE(p.observe(1.0, true).stop) << e;
  auto tenth = p.observe(1.0, true);
  EXPECT_TRUE(tenth.stop);
  EXPECT_FALSE(tenth.halve);
  EXPECT_DOUBLE_EQ(p.scale(), 0.5);
}

TEST(Plateau, ImprovementResetsCounters) {
  train::PlateauController p;
  p.observe(1.0, true);
  for (int e = 0; e < 5; ++e) p.observe(2.0, true);
  EXPECT_TRUE(p.observe(0.5, true).improved);
  EXPECT_EQ(p.since_best(), 0);
  EXPECT_EQ(p.since_halving(), 0);
  for (int e = 0; e < 5; ++e) EXPECT_FALSE(p.observe(0.5, true).halve);
  EXPECT_TRUE(p.observe(0.5, true).halve);
}

TEST(Plateau, NoHalvingDuringWarmup) {
  train::PlateauController p;
  p.observe(1.0, false);
  for (int e = 0; e < 9; ++e) EXPECT_FALSE(p.observe(1.0, false).halve);
  EXPECT_DOUBLE_EQ(p.scale(), 1.0);
  EXPECT_TRUE(p.observe(1.0, false).stop);
}

TEST(Plateau, JsonRoundTrip) {
  train::PlateauController p(3, 5);
  p.observe(2.0, true);
  p.observe(3.0, true);
  auto q = train::PlateauController::from_json(p.to_json());
  EXPECT_EQ(q.to_json(), p.to_json());
}

// ---- stage config ----------------------------------------------------------

TEST(StageConfig, JsonRoundTripAndStrictness) {
  StageConfig c = toy_stage(Stage::kJoint);
  c.init[Module::kAad] = "aad.ckpt";
  c.freeze.insert(Module::kEegEncoder);
  c.alpha = 0.01;
  auto back = StageConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());

  json bad = c.to_json();
  bad["learning_rate"] = 1.0;
  EXPECT_THROW(StageConfig::from_json(bad), ConfigError);
  bad = c.to_json();
  bad["stage"] = "finetune";
  EXPECT_THROW(StageConfig::from_json(bad), ConfigError);
}

TEST(StageConfig, AadStageFreezesEegEncoder) {
  auto v = toy_stage(Stage::kAad).validated(toy_model());
  EXPECT_TRUE(v.freeze.count(Module::kEegEncoder));
}

TEST(StageConfig, RejectsInconsistentSetups) {
  const auto m = toy_model();
  auto c = toy_stage(Stage::kSe);
  c.freeze.insert(Module::kAad);
  EXPECT_THROW(c.validated(m), ConfigError);

  c = toy_stage(Stage::kSe);
  c.init[Module::kAad] = "x";
  EXPECT_THROW(c.validated(m), ConfigError);

  c = toy_stage(Stage::kJoint);
  c.freeze = {Module::kAad, Module::kEegEncoder, Module::kExtractor};
  EXPECT_THROW(c.validated(m), ConfigError);

  c = toy_stage(Stage::kAad);
  c.freeze.insert(Module::kAad);
  EXPECT_THROW(c.validated(m), ConfigError);

  EXPECT_THROW(toy_stage(Stage::kPit).validated(m), ConfigError);
  EXPECT_THROW(toy_stage(Stage::kSe).validated(toy_model(false)), ConfigError);
  EXPECT_NO_THROW(toy_stage(Stage::kPit).validated(toy_model(false)));

  c = toy_stage(Stage::kSe);
  c.min_window_s = 0.5;
  EXPECT_THROW(c.validated(m), ConfigError);
  c = toy_stage(Stage::kSe);
  c.snr_db = {5, -5};
  EXPECT_THROW(c.validated(m), ConfigError);
  c = toy_stage(Stage::kJoint);
  c.alpha = -1;
  EXPECT_THROW(c.validated(m), ConfigError);
}

// ---- checkpoints and optimizer -------------------------------------------

TEST(Checkpoint, RoundTrip) {
  const auto dir = scratch("ckpt");
  train::Checkpoint c;
  c.meta = {{"epoch", 3}, {"note", "x"}};
  Matrix a(2, 3);
  a << 1, 2, 3, 4, 5, std::numeric_limits<double>::denorm_min();
  c.blobs.emplace_back("a", a);
  c.blobs.emplace_back("empty", Matrix(0, 4));
  train::save_checkpoint(dir / "c.ckpt", c);
  auto back = train::load_checkpoint(dir / "c.ckpt");
  EXPECT_EQ(back.meta, c.meta);
  ASSERT_NE(back.find("a"), nullptr);
  EXPECT_EQ(*back.find("a"), a);
  EXPECT_EQ(back.find("empty")->cols(), 4);
  EXPECT_EQ(back.find("missing"), nullptr);
}

TEST(Checkpoint, MalformedFilesAreDataErrors) {
  const auto dir = scratch("bad_ckpt");
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  EXPECT_THROW(train::load_checkpoint(dir / "junk.ckpt"), DataError);
  EXPECT_THROW(train::load_checkpoint(dir / "absent.ckpt"), DataError);

  train::Checkpoint c;
  c.blobs.emplace_back("a", Matrix::Ones(8, 8));
  train::save_checkpoint(dir / "full.ckpt", c);
  const auto size = fs::file_size(dir / "full.ckpt");
  fs::resize_file(dir / "full.ckpt", size - 16);
  EXPECT_THROW(train::load_checkpoint(dir / "full.ckpt"), DataError);
}

TEST(Checkpoint, ParameterShapesAreChecked) {
  model::Model a(toy_model(), 1);
  train::Checkpoint c;
  train::add_parameters(c, a);
  auto cfg = toy_model();
  cfg.aad.width = 12;
  model::Model b(cfg, 2);
  EXPECT_NO_THROW(train::load_parameters(b, c, Module::kExtractor));
  EXPECT_EQ(b.parameter_hash(Module::kExtractor), a.parameter_hash(Module::kExtractor));
  EXPECT_THROW(train::load_parameters(b, c, Module::kAad), ConfigError);
}

TEST(Adam, MinimisesQuadratic) {
  ag::Var w = ag::leaf(Matrix::Constant(1, 3, 4.0));
  train::Adam opt({{"w", &w}});
  for (int i = 0; i < 2000; ++i) {
    w.zero_grad();
    ag::backward(ag::sum_all(ag::mul(w, w)));
    opt.step(0.01);
  }
  EXPECT_LT(w.value().cwiseAbs().maxCoeff(), 1e-2);
  EXPECT_EQ(opt.steps(), 2000);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ag::Var w = ag::leaf(Matrix::Constant(1, 2, 1.0));
  train::Adam opt({{"w", &w}});
  w.zero_grad();
  ag::backward(ag::sum_all(ag::scale(w, 3.0)));
  opt.step(0.1);
  EXPECT_NEAR(w.value()(0, 0), 0.9, 1e-8);
}

TEST(Adam, ClipRescalesToGlobalNorm) {
  ag::Var a = ag::leaf(Matrix::Zero(1, 1)), b = ag::leaf(Matrix::Zero(1, 1));
  train::Adam opt({{"a", &a}, {"b", &b}});
  ag::backward(ag::add(ag::scale(a, 3.0), ag::scale(b, 4.0)));
  EXPECT_DOUBLE_EQ(opt.clip(1.0), 5.0);
  EXPECT_NEAR(a.grad()(0, 0), 0.6, 1e-12);
  EXPECT_NEAR(b.grad()(0, 0), 0.8, 1e-12);
  EXPECT_DOUBLE_EQ(opt.clip(2.0), 1.0);
  EXPECT_NEAR(a.grad()(0, 0), 0.6, 1e-12);
}

TEST(Adam, StateRoundTrip) {
  ag::Var w = ag::leaf(Matrix::Constant(1, 2, 1.0));
  train::Adam opt({{"w", &w}});
  ag::backward(ag::sum_all(ag::mul(w, w)));
  opt.step(0.1);
  train::Checkpoint c;
  opt.save(c);
  ag::Var w2 = ag::leaf(w.value());
  train::Adam opt2({{"w", &w2}});
  opt2.load(c);
  EXPECT_EQ(opt2.steps(), 1);
  for (auto* v : {&w, &w2}) {
    v->zero_grad();
    ag::backward(ag::sum_all(ag::mul(*v, *v)));
  }
  opt.step(0.1);
  opt2.step(0.1);
  EXPECT_EQ(w.value(), w2.value());
}

// ---- stage runner ----------------------------------------------------------

TEST(RunStage, EveryStageRuns) {
  const auto& d = toy_data();
  for (Stage s : {Stage::kSe, Stage::kAad, Stage::kJoint, Stage::kPit, Stage::kPitAadJoint}) {
    const bool pit = s == Stage::kPit || s == Stage::kPitAadJoint;
    model::Model m(toy_model(!pit), 1);
    auto r = train::run_stage(toy_stage(s), d.dataset, d.manifest, m);
    EXPECT_EQ(r.steps, 4) << train::stage_name(s);
    EXPECT_EQ(r.epochs.size(), 2u);
    EXPECT_TRUE(std::isfinite(r.best_val));
    EXPECT_TRUE(r.epochs.front().improved);
  }
}

TEST(RunStage, DeterministicTraceAndLog) {
  const auto& d = toy_data();
  const auto dir = scratch("determinism");
  std::vector<std::string> logs;
  std::vector<std::vector<double>> traces;
  std::vector<uint64_t> hashes;
  for (int run = 0; run < 2; ++run) {
    model::Model m(toy_model(), 1);
    train::StageOptions opt;
    opt.log_path = dir / ("run" + std::to_string(run) + ".jsonl");
    auto r = train::run_stage(toy_stage(Stage::kJoint), d.dataset, d.manifest, m, opt);
    traces.push_back(r.lr_trace);
    hashes.push_back(m.parameter_hash(Module::kExtractor));
    std::ifstream in(opt.log_path);
    logs.emplace_back(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  EXPECT_EQ(traces[0], traces[1]);
  EXPECT_EQ(hashes[0], hashes[1]);
  EXPECT_EQ(logs[0], logs[1]);
  for (size_t i = 0; i < traces[0].size(); ++i) {
    EXPECT_DOUBLE_EQ(traces[0][i], train::lr_at(static_cast<long>(i) + 1, 8, toy_stage(Stage::kJoint).schedule));
  }
}

TEST(RunStage, LogHasConfigStepAndEpochRecords) {
  const auto& d = toy_data();
  const auto dir = scratch("log");
  model::Model m(toy_model(), 1);
  train::StageOptions opt;
  opt.log_path = dir / "train.jsonl";
  opt.checkpoint_path = dir / "best.ckpt";
  train::run_stage(toy_stage(Stage::kJoint), d.dataset, d.manifest, m, opt);
  auto lines = read_jsonl(opt.log_path);
  ASSERT_EQ(lines.size(), 1u + 4u + 2u);
  EXPECT_EQ(lines[0]["type"], "config");
  EXPECT_EQ(lines[0]["stage"]["stage"], "joint");
  EXPECT_EQ(lines[1]["type"], "step");
  for (const char* k : {"lr", "loss", "grad_norm", "window_s", "se", "aad", "labels"}) {
    EXPECT_TRUE(lines[1].contains(k)) << k;
  }
  EXPECT_EQ(lines.back()["type"], "epoch");
  for (const char* k : {"val_loss", "bvl", "since_best", "since_halving", "lr_scale"}) {
    EXPECT_TRUE(lines.back().contains(k)) << k;
  }
  auto ckpt = train::load_checkpoint(opt.checkpoint_path);
  EXPECT_EQ(ckpt.meta["stage"]["stage"], "joint");
  EXPECT_NE(ckpt.find("param/aad.decoder.conv1.weight"), nullptr);
}

TEST(RunStage, FrozenModulesKeepTheirWeights) {
  const auto& d = toy_data();
  const auto dir = scratch("freeze");
  model::Model pre(toy_model(), 7);
  train::Checkpoint c;
  train::add_parameters(c, pre);
  train::save_checkpoint(dir / "pre.ckpt", c);

  // Initialise everything, fix the AAD branch and the EEG encoder.
  auto specs = train::ablation_grid(toy_stage(Stage::kJoint), train::Grid::kTable1, (dir / "pre.ckpt").string(),
                                    (dir / "pre.ckpt").string());
  const auto& sys6 = specs[5];
  ASSERT_EQ(sys6.sys, 6);
  model::Model m(toy_model(), 1);
  train::run_stage(sys6.config, d.dataset, d.manifest, m);
  EXPECT_EQ(m.parameter_hash(Module::kAad), pre.parameter_hash(Module::kAad));
  EXPECT_EQ(m.parameter_hash(Module::kEegEncoder), pre.parameter_hash(Module::kEegEncoder));
  EXPECT_NE(m.parameter_hash(Module::kExtractor), pre.parameter_hash(Module::kExtractor));
}

TEST(RunStage, AadStageLeavesEegEncoderAlone) {
  const auto& d = toy_data();
  model::Model m(toy_model(), 1);
  const auto ee = m.parameter_hash(Module::kEegEncoder);
  const auto se = m.parameter_hash(Module::kExtractor);
  const auto aad = m.parameter_hash(Module::kAad);
  train::run_stage(toy_stage(Stage::kAad), d.dataset, d.manifest, m);
  EXPECT_EQ(m.parameter_hash(Module::kEegEncoder), ee);
  EXPECT_EQ(m.parameter_hash(Module::kExtractor), se);
  EXPECT_NE(m.parameter_hash(Module::kAad), aad);
}

TEST(RunStage, ShuffleLabelsAreBalanced) {
  const auto& d = toy_data();
  const auto dir = scratch("shuffle");
  auto c = toy_stage(Stage::kAad);
  c.batch_size = 1;
  c.windows_per_epoch = 1200;
  c.max_epochs = 1;
  c.max_window_s = 1.0;
  model::Model m(toy_model(), 1);
  train::StageOptions opt;
  opt.log_path = dir / "train.jsonl";
  train::run_stage(c, d.dataset, d.manifest, m, opt);
  long ones = 0, n = 0;
  for (const auto& rec : read_jsonl(opt.log_path)) {
    if (rec["type"] != "step") continue;
    for (int y : rec["labels"]) {
      ones += y;
      ++n;
    }
  }
  ASSERT_GE(n, 1000);
  EXPECT_NEAR(static_cast<double>(ones) / static_cast<double>(n), 0.5, 0.03);
}

TEST(RunStage, ShortWindowsRejectedForAadStages) {
  const auto& d = toy_data();
  model::Model m(toy_model(), 1);
  auto c = toy_stage(Stage::kAad);
  c.val_window_s = 0.5;
  try {
    train::run_stage(c, d.dataset, d.manifest, m);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("113"), std::string::npos);
  }
}

TEST(RunStage, NonFiniteLossDumpsTheBatch) {
  const auto& d = toy_data();
  const auto dir = scratch("nan");
  model::Model m(toy_model(), 1);
  auto params = m.parameters(Module::kExtractor);
  params.front().var->mutable_value().setConstant(std::numeric_limits<double>::quiet_NaN());
  train::StageOptions opt;
  opt.dump_dir = dir;
  EXPECT_THROW(train::run_stage(toy_stage(Stage::kSe), d.dataset, d.manifest, m, opt), NumericalError);
  const auto dump_path = dir / "nan_dump_step1.json";
  ASSERT_TRUE(fs::exists(dump_path));
  json dump;
  std::ifstream(dump_path) >> dump;
  ASSERT_FALSE(dump["batch"].empty());
  for (const char* k : {"subject", "trial", "start_s", "duration_s", "snr_db"}) {
    EXPECT_TRUE(dump["batch"][0].contains(k)) << k;
  }
}

TEST(RunStage, InitLoadsCheckpoint) {
  const auto& d = toy_data();
  const auto dir = scratch("init");
  model::Model pre(toy_model(), 9);
  train::Checkpoint c;
  train::add_parameters(c, pre);
  train::save_checkpoint(dir / "pre.ckpt", c);
  auto cfg = toy_stage(Stage::kJoint);
  cfg.init[Module::kAad] = (dir / "pre.ckpt").string();
  cfg.freeze = {Module::kAad};
  model::Model m(toy_model(), 1);
  train::run_stage(cfg, d.dataset, d.manifest, m);
  EXPECT_EQ(m.parameter_hash(Module::kAad), pre.parameter_hash(Module::kAad));
}

// ---- ablation grid ---------------------------------------------------------

TEST(AblationGrid, TableOnePatterns) {
  auto specs = train::ablation_grid(toy_stage(Stage::kJoint), train::Grid::kTable1, "se", "aad");
  ASSERT_EQ(specs.size(), 7u);
  EXPECT_EQ(specs[0].config.stage, Stage::kSe);
  EXPECT_EQ(specs[0].config.alpha, 0.0);
  struct Row {
    bool init_se_ee, init_aad, fix_aad, fix_ee, fix_se;
  };
  const Row rows[] = {{false, false, false, false, false}, {true, false, false, false, false},
                      {true, true, false, false, false},    {true, true, true, false, false},
                      {true, true, true, true, false},      {true, true, true, false, true}};
  for (int i = 0; i < 6; ++i) {
    const auto& s = specs[static_cast<size_t>(i) + 1];
    EXPECT_EQ(s.sys, i + 2);
    EXPECT_EQ(s.config.stage, Stage::kJoint);
    EXPECT_EQ(s.config.alpha, 1.0);
    EXPECT_EQ(s.config.init.count(Module::kExtractor) == 1, rows[i].init_se_ee) << s.sys;
    EXPECT_EQ(s.config.init.count(Module::kEegEncoder) == 1, rows[i].init_se_ee) << s.sys;
    EXPECT_EQ(s.config.init.count(Module::kAad) == 1, rows[i].init_aad) << s.sys;
    EXPECT_EQ(s.config.freeze.count(Module::kAad) == 1, rows[i].fix_aad) << s.sys;
    EXPECT_EQ(s.config.freeze.count(Module::kEegEncoder) == 1, rows[i].fix_ee) << s.sys;
    EXPECT_EQ(s.config.freeze.count(Module::kExtractor) == 1, rows[i].fix_se) << s.sys;
    EXPECT_NO_THROW(s.config.validated(toy_model()));
  }
}

TEST(AblationGrid, TableTwoAlphaSweep) {
  auto specs = train::ablation_grid(toy_stage(Stage::kJoint), train::Grid::kTable2, "se", "aad");
  const std::pair<int, double> want[] = {{8, 0.001}, {9, 0.01}, {10, 0.1}, {4, 1.0}, {11, 10.0}, {12, 100.0}};
  ASSERT_EQ(specs.size(), 6u);
  for (size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(specs[i].sys, want[i].first);
    EXPECT_DOUBLE_EQ(specs[i].config.alpha, want[i].second);
    EXPECT_TRUE(specs[i].init_se_ee && specs[i].init_aad);
    EXPECT_TRUE(specs[i].config.freeze.empty());
  }
  EXPECT_THROW(train::parse_grid("table3"), ConfigError);
}

}  // namespace
}  // namespace neurosteer
