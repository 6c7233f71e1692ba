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

#include "neurosteer/run_config.hpp"

#include <cstdio>
#include <fstream>

#include "neurosteer/dsp.hpp"
#include "neurosteer/errors.hpp"

namespace neurosteer {

using json = nlohmann::json;
using train::Stage;

namespace {

constexpr Stage kStages[] = {Stage::kSe, Stage::kAad, Stage::kJoint, Stage::kPit, Stage::kPitAadJoint};

void reject_unknown(const json& j, const std::string& section, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError(section + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw ConfigError("unknown key " + section + "." + k);
  }
}

json stage_section(const train::StageConfig& c) {
  json j = c.to_json();
  j.erase("stage");
  j.erase("seed");
  return j;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  reject_unknown(j, "config", {"seed", "data", "model", "stages", "eval"});
  RunConfig c;
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("config.seed must be a non-negative integer");
    c.seed = j["seed"].get<uint64_t>();
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    reject_unknown(d, "data", {"synth", "splits"});
    if (d.contains("synth")) {
      if (d["synth"].contains("seed")) throw ConfigError("data.synth.seed: seeds derive from config.seed");
      c.synth = data::SynthConfig::from_json(d["synth"]);
    }
    if (d.contains("splits")) {
      const json& s = d["splits"];
      reject_unknown(s, "data.splits", {"train", "validation", "test"});
      try {
        c.splits.train = s.value("train", c.splits.train);
        c.splits.validation = s.value("validation", c.splits.validation);
        c.splits.test = s.value("test", c.splits.test);
      } catch (const json::exception&) {
        throw ConfigError("data.splits values must be numbers");
      }
    }
  }
  if (j.contains("model")) c.model = model::ModelConfig::from_json(j["model"]);
  if (j.contains("stages")) {
    const json& st = j["stages"];
    if (!st.is_object()) throw ConfigError("stages must be an object");
    for (const auto& [name, section] : st.items()) {
      const Stage s = train::parse_stage(name);
      if (!section.is_object()) throw ConfigError("stages." + name + " must be an object");
      if (section.contains("seed")) throw ConfigError("stages." + name + ".seed: seeds derive from config.seed");
      if (section.contains("stage")) throw ConfigError("stages." + name + ".stage: implied by the section name");
      auto sc = train::StageConfig::from_json(section);
      sc.stage = s;
      c.stages[s] = sc;
    }
  }
  if (j.contains("eval")) {
    if (j["eval"].contains("seed")) throw ConfigError("eval.seed: seeds derive from config.seed");
    c.eval = metrics::EvalConfig::from_json(j["eval"]);
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  json stages_j = json::object();
  for (Stage s : kStages) stages_j[train::stage_name(s)] = stage_section(stage(s));
  json eval_j = eval.to_json();
  eval_j.erase("seed");
  return {{"seed", seed},
          {"data",
           {{"synth", synth.to_json()},
            {"splits", {{"train", splits.train}, {"validation", splits.validation}, {"test", splits.test}}}}},
          {"model", model.to_json()},
          {"stages", stages_j},
          {"eval", eval_j}};
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(dsp::fnv1a(to_json().dump())));
  return buf;
}

uint64_t RunConfig::derive(const std::string& purpose, uint64_t index) const {
  return dsp::derive_seed(seed, {dsp::fnv1a(purpose), index});
}

train::StageConfig RunConfig::stage(Stage s, uint64_t index) const {
  auto it = stages.find(s);
  train::StageConfig c = it == stages.end() ? train::StageConfig{} : it->second;
  c.stage = s;
  c.seed = derive(std::string("stage/") + train::stage_name(s), index);
  return c;
}

model::ModelConfig RunConfig::model_for(Stage s) const {
  model::ModelConfig m = model;
  m.extractor.use_eeg = !(s == Stage::kPit || s == Stage::kPitAadJoint);
  return m;
}

metrics::EvalConfig RunConfig::evaluation() const {
  metrics::EvalConfig e = eval;
  e.seed = derive("eval");
  return e;
}

}  // namespace neurosteer
