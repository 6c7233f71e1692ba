#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "neurosteer/errors.hpp"
#include "neurosteer/experiment.hpp"
#include "neurosteer/log.hpp"
#include "neurosteer/run_config.hpp"

namespace neurosteer {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using train::Stage;

RunConfig toy_config() {
  RunConfig c;
  c.seed = 11;
  c.synth.n_subjects = 1;
  c.synth.n_trials = 2;
  c.synth.duration_s = 24.0;
  c.synth.eeg_channels = 4;
  c.model.eeg = {4, 8, 1, 1, 2, 0.0};
  c.model.extractor.width = 8;
  c.model.extractor.blocks = 1;
  c.model.extractor.chunk = 20;
  c.model.extractor.hidden = 4;
  c.model.aad.width = 8;
  c.model.aad.stim_layers = 1;
  c.model.aad.ff_multiplier = 2;
  c.model.aad.dropout = 0.0;
  for (Stage s : {Stage::kSe, Stage::kAad, Stage::kJoint, Stage::kPit, Stage::kPitAadJoint}) {
    train::StageConfig sc;
    sc.stage = s;
    sc.batch_size = 2;
    sc.max_epochs = 1;
    sc.windows_per_epoch = 2;
    sc.min_window_s = 1.0;
    sc.max_window_s = 1.5;
    sc.val_window_s = 1.0;
    sc.val_windows_per_region = 1;
    sc.schedule.warmup_steps = 10;
    sc.schedule.lr_factor = 1.0;
    c.stages[s] = sc;
  }
  c.eval.window_s = {1.0};
  c.eval.per_region = 1;
  c.eval.with_stoi = false;
  return c;
}

TEST(RunConfig, RoundTripKeepsHash) {
  const auto c = toy_config();
  const auto back = RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_EQ(c.hash().size(), 16u);
}

TEST(RunConfig, HashTracksContent) {
  auto a = toy_config();
  auto b = toy_config();
  b.stages[Stage::kJoint].alpha = 0.5;
  EXPECT_NE(a.hash(), b.hash());
  b = toy_config();
  b.seed = 12;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(RunConfig, DefaultsFillEveryStage) {
  const auto j = RunConfig{}.to_json();
  for (const char* s : {"se", "aad", "joint", "pit", "pit_aad_joint"}) {
    ASSERT_TRUE(j["stages"].contains(s)) << s;
    EXPECT_FALSE(j["stages"][s].contains("seed"));
    EXPECT_FALSE(j["stages"][s].contains("stage"));
  }
  EXPECT_FALSE(j["eval"].contains("seed"));
}

TEST(RunConfig, RejectsSectionSeedsAndUnknownKeys) {
  EXPECT_THROW(RunConfig::from_json({{"data", {{"synth", {{"seed", 1}}}}}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json({{"stages", {{"se", {{"seed", 1}}}}}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json({{"stages", {{"se", {{"stage", "aad"}}}}}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json({{"eval", {{"seed", 1}}}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json({{"seeds", 1}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json({{"seed", -1}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json({{"stages", {{"bogus", json::object()}}}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json({{"data", {{"splits", {{"train", "a"}}}}}}), ConfigError);
}

TEST(RunConfig, LoadReportsMissingAndMalformedFiles) {
  const fs::path dir = fs::temp_directory_path() / "neurosteer_run_config";
  fs::create_directories(dir);
  EXPECT_THROW(RunConfig::load(dir / "absent.json"), ConfigError);
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(RunConfig::load(dir / "bad.json"), ConfigError);
  std::ofstream(dir / "ok.json") << toy_config().to_json().dump();
  EXPECT_EQ(RunConfig::load(dir / "ok.json").hash(), toy_config().hash());
}

TEST(RunConfig, DerivedSeedsAreDistinctAndStable) {
  const auto c = toy_config();
  std::set<uint64_t> seen{c.synth_seed(), c.split_seed(), c.model_seed(), c.evaluation().seed};
  for (Stage s : {Stage::kSe, Stage::kAad, Stage::kJoint, Stage::kPit, Stage::kPitAadJoint}) {
    seen.insert(c.stage(s).seed);
    seen.insert(c.stage(s, 1).seed);
  }
  EXPECT_EQ(seen.size(), 14u);
  EXPECT_EQ(c.stage(Stage::kJoint, 3).seed, toy_config().stage(Stage::kJoint, 3).seed);
  auto d = toy_config();
  d.seed = 12;
  EXPECT_NE(c.model_seed(), d.model_seed());
}

TEST(RunConfig, StageAndModelForStage) {
  const auto c = toy_config();
  EXPECT_EQ(c.stage(Stage::kAad).stage, Stage::kAad);
  EXPECT_EQ(c.stage(Stage::kAad).batch_size, 2);
  EXPECT_TRUE(c.model_for(Stage::kJoint).extractor.use_eeg);
  EXPECT_FALSE(c.model_for(Stage::kPit).extractor.use_eeg);
  EXPECT_FALSE(c.model_for(Stage::kPitAadJoint).extractor.use_eeg);
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { log::set_level(log::Level::kWarn); }

  void SetUp() override {
    cfg_ = toy_config();
    dataset_ = data::synth_cocktail(cfg_.synth, cfg_.synth_seed());
    manifest_ = data::make_splits(dataset_, cfg_.splits, cfg_.split_seed());
  }

  RunConfig cfg_;
  data::Dataset dataset_;
  data::SplitManifest manifest_;
};

TEST_F(Pipeline, AblationRunsRequestedSystems) {
  experiment::PipelineOptions opt;
  opt.work_dir = fs::temp_directory_path() / "neurosteer_pipeline_ablation";
  fs::remove_all(opt.work_dir);
  opt.systems = {1, 2, 6};
  const auto rows = experiment::run_ablation(cfg_, train::Grid::kTable1, dataset_, manifest_, opt);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].sys, 1);
  EXPECT_EQ(rows[1].sys, 2);
  EXPECT_EQ(rows[2].sys, 6);
  for (const auto& r : rows) {
    EXPECT_TRUE(std::isfinite(r.si_sdri)) << r.sys;
    EXPECT_TRUE(fs::exists(r.checkpoint)) << r.sys;
    EXPECT_EQ(r.association, "fixed");
  }
  EXPECT_TRUE(fs::exists(opt.work_dir / "aad_pretrain.ckpt"));
  const auto md = experiment::results_markdown(rows);
  EXPECT_EQ(std::count(md.begin(), md.end(), '\n'), 5);
}

TEST_F(Pipeline, AblationIsDeterministic) {
  experiment::PipelineOptions opt;
  opt.systems = {1};
  opt.work_dir = fs::temp_directory_path() / "neurosteer_pipeline_det_a";
  fs::remove_all(opt.work_dir);
  const auto a = experiment::run_ablation(cfg_, train::Grid::kTable1, dataset_, manifest_, opt);
  opt.work_dir = fs::temp_directory_path() / "neurosteer_pipeline_det_b";
  fs::remove_all(opt.work_dir);
  const auto b = experiment::run_ablation(cfg_, train::Grid::kTable1, dataset_, manifest_, opt);
  ASSERT_EQ(a.size(), 1u);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(a[0].si_sdri, b[0].si_sdri);
  EXPECT_EQ(a[0].steps, b[0].steps);
}

TEST_F(Pipeline, CascadeNeedsAadCheckpoint) {
  experiment::PipelineOptions opt;
  opt.work_dir = fs::temp_directory_path() / "neurosteer_pipeline_cascade_missing";
  EXPECT_THROW(experiment::run_cascade_baseline(cfg_, dataset_, manifest_, opt), ConfigError);
}

TEST_F(Pipeline, CascadeRunsWithPretrainedAad) {
  experiment::PipelineOptions opt;
  opt.work_dir = fs::temp_directory_path() / "neurosteer_pipeline_cascade";
  fs::remove_all(opt.work_dir);
  // Sys 4 starts from the pretrained AAD, so the ablation leaves one behind.
  opt.systems = {4};
  experiment::run_ablation(cfg_, train::Grid::kTable1, dataset_, manifest_, opt);
  opt.aad_checkpoint = (opt.work_dir / "aad_pretrain.ckpt").string();
  opt.systems = {13, 14, 15};
  const auto rows = experiment::run_cascade_baseline(cfg_, dataset_, manifest_, opt);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].association, "oracle");
  EXPECT_EQ(rows[1].association, "aad");
  EXPECT_EQ(rows[2].association, "aad");
  EXPECT_EQ(rows[2].stage, "pit_aad_joint");
  for (const auto& r : rows) EXPECT_TRUE(std::isfinite(r.si_sdr)) << r.sys;
}

}  // namespace
}  // namespace neurosteer
