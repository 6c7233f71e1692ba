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

// The three trainable modules bundled together, with named parameter access.
#pragma once

#include <cstdint>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "neurosteer/aad.hpp"
#include "neurosteer/eeg_encoder.hpp"
#include "neurosteer/extractor.hpp"

namespace neurosteer::model {

enum class Module { kEegEncoder, kExtractor, kAad };
const char* module_name(Module m);
Module parse_module(const std::string& name);

struct ModelConfig {
  EegEncoderConfig eeg;
  ExtractorConfig extractor;
  AadConfig aad;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys raise ConfigError.
  static ModelConfig from_json(const nlohmann::json& j);
};

// Parameter names are prefixed with "eeg_encoder.", "extractor." or "aad.".
class Model {
 public:
  Model(const ModelConfig& cfg, uint64_t seed);
  // Parameters are shared handles, so a copy would alias the weights.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  EegEncoder& eeg_encoder() { return eeg_; }
  const EegEncoder& eeg_encoder() const { return eeg_; }
  Extractor& extractor() { return extractor_; }
  const Extractor& extractor() const { return extractor_; }
  Aad& aad() { return aad_; }
  const Aad& aad() const { return aad_; }

  nn::ParamList parameters();
  nn::ParamList parameters(Module m);

  void set_trainable(Module m, bool trainable);
  void zero_grad();

  // FNV-1a over the raw parameter bytes of one module.
  uint64_t parameter_hash(Module m);

 private:
  ModelConfig cfg_;
  EegEncoder eeg_;
  Extractor extractor_;
  Aad aad_;
};

}  // namespace neurosteer::model
