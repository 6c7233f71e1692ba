// neurosteer command line: data synthesis, staged training, ablation grids,
// evaluation and scatter plots.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "neurosteer/dataio.hpp"
#include "neurosteer/errors.hpp"
#include "neurosteer/experiment.hpp"
#include "neurosteer/log.hpp"
#include "neurosteer/metrics.hpp"
#include "neurosteer/run_config.hpp"
#include "neurosteer/runtime.hpp"
#include "neurosteer/training.hpp"
#include "scatter_plot.hpp"

namespace ns = neurosteer;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumerical = 4 };

ns::RunConfig load_config(const std::string& path, const std::optional<uint64_t>& seed) {
  ns::RunConfig c = path.empty() ? ns::RunConfig{} : ns::RunConfig::load(path);
  if (seed) c.seed = *seed;
  ns::log::info("config hash " + c.hash());
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ns::DataError("cannot write " + path.string());
  out << text;
}

json config_echo(const ns::RunConfig& c) { return {{"config", c.to_json()}, {"config_hash", c.hash()}}; }

struct Data {
  ns::data::Dataset dataset;
  ns::data::SplitManifest manifest;
};

// Reads DIR/manifest.jsonl and DIR/splits.json; without a splits file the
// splits are cut from the config seed.
Data load_data(const fs::path& dir, const ns::RunConfig& cfg) {
  auto ingest = ns::data::ingest_interchange(dir / "manifest.jsonl", cfg.synth.eeg_rate);
  if (ingest.dataset.empty()) throw ns::DataError("no usable trials in " + (dir / "manifest.jsonl").string());
  Data d{std::move(ingest.dataset), {}};
  const fs::path splits = dir / "splits.json";
  if (fs::exists(splits)) {
    std::ifstream in(splits);
    try {
      d.manifest = ns::data::SplitManifest::from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw ns::DataError(splits.string() + ": " + e.what());
    }
  } else {
    d.manifest = ns::data::make_splits(d.dataset, cfg.splits, cfg.split_seed());
  }
  return d;
}

std::set<ns::model::Module> parse_modules(const std::string& list) {
  std::set<ns::model::Module> out;
  std::stringstream ss(list);
  for (std::string tok; std::getline(ss, tok, ',');) {
    if (!tok.empty()) out.insert(ns::model::parse_module(tok));
  }
  return out;
}

std::set<int> parse_systems(const std::string& list) {
  std::set<int> out;
  std::stringstream ss(list);
  for (std::string tok; std::getline(ss, tok, ',');) {
    if (tok.empty()) continue;
    try {
      out.insert(std::stoi(tok));
    } catch (const std::exception&) {
      throw ns::ConfigError("bad system number '" + tok + "'");
    }
  }
  return out;
}

// ---- commands ----------------------------------------------------------------

struct Common {
  std::string config;
  std::optional<uint64_t> seed;
};

int cmd_synth_data(const Common& common, const std::string& out) {
  const auto cfg = load_config(common.config, common.seed);
  const auto dataset = ns::data::synth_cocktail(cfg.synth, cfg.synth_seed());
  const fs::path dir(out);
  ns::data::write_dataset(dir, dataset);
  const auto splits = ns::data::make_splits(dataset, cfg.splits, cfg.split_seed());
  write_text(dir / "splits.json", splits.to_json().dump(2) + "\n");
  write_text(dir / "config.json", config_echo(cfg).dump(2) + "\n");
  ns::log::info("wrote " + std::to_string(dataset.size()) + " trials to " + dir.string());
  return kOk;
}

struct TrainArgs {
  std::string stage;
  std::string data;
  std::vector<std::string> init;
  std::string freeze;
  std::string out;
  std::string log;
  int max_epochs = 0;
};

int cmd_train(const Common& common, const TrainArgs& a) {
  const auto cfg = load_config(common.config, common.seed);
  const auto stage = ns::train::parse_stage(a.stage);
  auto sc = cfg.stage(stage);
  if (a.max_epochs > 0) sc.max_epochs = a.max_epochs;
  for (const auto& spec : a.init) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
      for (auto m : sc.graph()) sc.init[m] = spec;
    } else {
      sc.init[ns::model::parse_module(spec.substr(0, eq))] = spec.substr(eq + 1);
    }
  }
  if (!a.freeze.empty()) sc.freeze = parse_modules(a.freeze);
  const auto data = load_data(a.data, cfg);
  ns::model::Model model(cfg.model_for(stage), cfg.model_seed());
  ns::train::StageOptions opt;
  opt.checkpoint_path = a.out;
  opt.log_path = a.log.empty() ? fs::path(a.out + ".log.jsonl") : fs::path(a.log);
  opt.dump_dir = fs::path(a.out).parent_path();
  if (opt.dump_dir.empty()) opt.dump_dir = ".";
  write_text(a.out + ".config.json", config_echo(cfg).dump(2) + "\n");
  const auto r = ns::train::run_stage(sc, data.dataset, data.manifest, model, opt);
  std::printf("%s: %ld steps, best epoch %d, best validation loss %.4f%s\n", ns::train::stage_name(stage), r.steps,
              r.best_epoch, r.best_val, r.stopped_early ? " (early stop)" : "");
  return kOk;
}

struct AblateArgs {
  std::string grid;
  std::string data;
  std::string out;
  std::string systems;
  std::string se_ckpt;
  std::string aad_ckpt;
  std::string split = "val";
};

void write_rows(const fs::path& dir, const ns::RunConfig& cfg, const std::vector<ns::experiment::SystemResult>& rows,
                const std::string& title) {
  json j = config_echo(cfg);
  j["systems"] = json::array();
  for (const auto& r : rows) j["systems"].push_back(r.to_json());
  write_text(dir / "results.json", j.dump(2) + "\n");
  const std::string md = "# " + title + "\n\nconfig hash `" + cfg.hash() + "`\n\n" + ns::experiment::results_markdown(rows);
  write_text(dir / "results.md", md);
  std::cout << md;
}

int cmd_ablate(const Common& common, const AblateArgs& a) {
  const auto cfg = load_config(common.config, common.seed);
  const auto grid = ns::train::parse_grid(a.grid);
  const auto data = load_data(a.data, cfg);
  ns::experiment::PipelineOptions opt;
  opt.work_dir = a.out;
  opt.systems = parse_systems(a.systems);
  opt.se_checkpoint = a.se_ckpt;
  opt.aad_checkpoint = a.aad_ckpt;
  opt.eval_split = ns::data::parse_split(a.split);
  const auto rows = ns::experiment::run_ablation(cfg, grid, data.dataset, data.manifest, opt);
  write_rows(a.out, cfg, rows, std::string(grid == ns::train::Grid::kTable1 ? "Initialisation and freezing grid" : "Alpha sweep"));
  return kOk;
}

int cmd_cascade(const Common& common, const AblateArgs& a) {
  const auto cfg = load_config(common.config, common.seed);
  const auto data = load_data(a.data, cfg);
  ns::experiment::PipelineOptions opt;
  opt.work_dir = a.out;
  opt.systems = parse_systems(a.systems);
  opt.aad_checkpoint = a.aad_ckpt;
  opt.eval_split = ns::data::parse_split(a.split);
  const auto rows = ns::experiment::run_cascade_baseline(cfg, data.dataset, data.manifest, opt);
  write_rows(a.out, cfg, rows, "Separate-then-select baselines");
  return kOk;
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  std::string out;
  std::string summary;
  std::string association;
  std::string pesq_command;
};

int cmd_evaluate(const Common& common, const EvalArgs& a) {
  const auto cfg = load_config(common.config, common.seed);
  const auto ckpt = ns::train::load_checkpoint(a.ckpt);
  if (!ckpt.meta.contains("model")) throw ns::DataError(a.ckpt + ": checkpoint has no model config");
  const auto mc = ns::model::ModelConfig::from_json(ckpt.meta.at("model"));
  ns::model::Model model(mc, cfg.model_seed());
  for (auto m : {ns::model::Module::kEegEncoder, ns::model::Module::kExtractor, ns::model::Module::kAad}) {
    ns::train::load_parameters(model, ckpt, m);
  }
  auto ec = cfg.evaluation();
  if (!a.association.empty()) {
    ec.association = ns::metrics::parse_association(a.association);
  } else if (!mc.extractor.use_eeg) {
    ec.association = ns::metrics::Association::kOracle;
  }
  if (!a.pesq_command.empty()) ec.pesq = ns::metrics::PesqScorer{a.pesq_command};
  const auto split = ns::data::parse_split(a.split);
  const auto data = load_data(a.data, cfg);
  const auto results = ns::metrics::evaluate(model, data.dataset, data.manifest, split, ec);
  ns::metrics::write_results(a.out, results);
  const auto summary = ns::metrics::summarize(results);
  json j = config_echo(cfg);
  j["summary"] = summary.to_json();
  j["checkpoint"] = fs::path(a.ckpt).filename().string();
  j["split"] = ns::data::split_name(split);
  j["association"] = ns::metrics::association_name(ec.association);
  const fs::path summary_path = a.summary.empty() ? fs::path(a.out + ".summary.json") : fs::path(a.summary);
  write_text(summary_path, j.dump(2) + "\n");
  std::cout << summary.to_json().dump(2) << "\n";
  return kOk;
}

struct PlotArgs {
  std::string metrics;
  std::string out;
  std::string csv;
};

int cmd_plot_scatter(const Common& common, const PlotArgs& a) {
  const uint64_t seed = common.seed.value_or(0);
  const auto results = ns::metrics::read_results(a.metrics);
  if (results.empty()) throw ns::DataError(a.metrics + ": no samples");
  const auto rows = ns::metrics::scatter_data(results);
  if (rows.empty()) throw ns::DataError(a.metrics + ": no samples carry an AAD probability");
  const auto points = ns::plot::layout(rows, seed);
  write_text(a.out, ns::plot::render_svg(points));
  const fs::path csv = a.csv.empty() ? fs::path(a.out).replace_extension(".csv") : fs::path(a.csv);
  write_text(csv, ns::plot::render_csv(points));
  ns::log::info("plotted " + std::to_string(points.size()) + " points");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  ns::tune_allocator();
  CLI::App app{"neurosteer: EEG-steered speaker extraction with auditory attention detection"};
  app.require_subcommand(1);
  std::string level = "info";
  app.add_option("--log-level", level, "debug, info, warn or error")
      ->check(CLI::IsMember({"debug", "info", "warn", "error"}));

  Common common;
  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* opt = sub->add_option("--config", common.config, "run config (JSON)");
    if (need_config) opt->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "override the root seed");
  };

  std::string synth_out;
  auto* synth = app.add_subcommand("synth-data", "synthesise a cocktail-party dataset");
  add_common(synth, true);
  synth->add_option("--out", synth_out, "output directory")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "run one training stage");
  add_common(train, true);
  train->add_option("--stage", ta.stage, "se, aad, joint, pit or pit_aad_joint")->required();
  train->add_option("--data", ta.data, "dataset directory")->required();
  train->add_option("--init", ta.init, "checkpoint, or module=checkpoint (repeatable)");
  train->add_option("--freeze", ta.freeze, "comma-separated modules: eeg_encoder, extractor, aad");
  train->add_option("--out", ta.out, "best checkpoint")->required();
  train->add_option("--log", ta.log, "training log (JSON lines)");
  train->add_option("--max-epochs", ta.max_epochs, "override the stage's epoch limit");

  AblateArgs aa;
  auto* ablate = app.add_subcommand("ablate", "train and score an ablation grid");
  add_common(ablate, true);
  ablate->add_option("--grid", aa.grid, "table1 or table2")->required();
  ablate->add_option("--data", aa.data, "dataset directory")->required();
  ablate->add_option("--out", aa.out, "work directory")->required();
  ablate->add_option("--systems", aa.systems, "comma-separated subset of system numbers");
  ablate->add_option("--se-ckpt", aa.se_ckpt, "reuse a pretrained SE checkpoint");
  ablate->add_option("--aad-ckpt", aa.aad_ckpt, "reuse a pretrained AAD checkpoint");
  ablate->add_option("--split", aa.split, "val or test");

  AblateArgs ca;
  auto* cascade = app.add_subcommand("cascade", "train and score the separate-then-select baselines");
  add_common(cascade, true);
  cascade->add_option("--data", ca.data, "dataset directory")->required();
  cascade->add_option("--out", ca.out, "work directory")->required();
  cascade->add_option("--aad-ckpt", ca.aad_ckpt, "pretrained AAD checkpoint (systems 14 and 15)");
  cascade->add_option("--systems", ca.systems, "comma-separated subset of 13, 14, 15");
  cascade->add_option("--split", ca.split, "val or test");

  EvalArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint");
  add_common(evaluate, false);
  evaluate->add_option("--ckpt", ea.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", ea.data, "dataset directory")->required();
  evaluate->add_option("--split", ea.split, "val or test");
  evaluate->add_option("--out", ea.out, "per-sample metrics (JSON lines)")->required();
  evaluate->add_option("--summary", ea.summary, "summary JSON (default: OUT.summary.json)");
  evaluate->add_option("--association", ea.association, "fixed, oracle or aad");
  evaluate->add_option("--pesq-command", ea.pesq_command, "external PESQ scorer: CMD ref.wav deg.wav");

  PlotArgs pa;
  auto* plot = app.add_subcommand("plot-scatter", "length vs SI-SDRi scatter coloured by AAD probability");
  plot->add_option("--metrics", pa.metrics, "per-sample metrics (JSON lines)")->required();
  plot->add_option("--out", pa.out, "SVG file")->required();
  plot->add_option("--csv", pa.csv, "CSV twin (default: OUT with .csv)");
  plot->add_option("--seed", common.seed, "jitter seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  const std::map<std::string, ns::log::Level> levels = {{"debug", ns::log::Level::kDebug},
                                                        {"info", ns::log::Level::kInfo},
                                                        {"warn", ns::log::Level::kWarn},
                                                        {"error", ns::log::Level::kError}};
  ns::log::set_level(levels.at(level));

  try {
    if (*synth) return cmd_synth_data(common, synth_out);
    if (*train) return cmd_train(common, ta);
    if (*ablate) return cmd_ablate(common, aa);
    if (*cascade) return cmd_cascade(common, ca);
    if (*evaluate) return cmd_evaluate(common, ea);
    if (*plot) return cmd_plot_scatter(common, pa);
  } catch (const ns::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ns::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ns::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
