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

#include "neurosteer/model.hpp"

#include "neurosteer/dsp.hpp"
#include "neurosteer/errors.hpp"

namespace neurosteer::model {

using json = nlohmann::json;

namespace {

template <typename T>
void read_key(const json& j, const char* section, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("model.") + section + "." + key + ": wrong type");
  }
}

void reject_unknown(const json& j, const char* section, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError(std::string("model.") + section + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw ConfigError(std::string("unknown key model.") + section + "." + k);
  }
}

}  // namespace

const char* module_name(Module m) {
  switch (m) {
    case Module::kEegEncoder: return "eeg_encoder";
    case Module::kExtractor: return "extractor";
    case Module::kAad: return "aad";
  }
  return "";
}

Module parse_module(const std::string& name) {
  if (name == "eeg_encoder" || name == "ee") return Module::kEegEncoder;
  if (name == "extractor" || name == "se") return Module::kExtractor;
  if (name == "aad") return Module::kAad;
  throw ConfigError("unknown module '" + name + "' (expected eeg_encoder, extractor or aad)");
}

json ModelConfig::to_json() const {
  return {
      {"eeg",
       {{"channels", eeg.channels},
        {"width", eeg.width},
        {"layers", eeg.layers},
        {"heads", eeg.heads},
        {"ff_multiplier", eeg.ff_multiplier},
        {"dropout", eeg.dropout}}},
      {"extractor",
       {{"width", extractor.width},
        {"kernel", extractor.kernel},
        {"stride", extractor.stride},
        {"blocks", extractor.blocks},
        {"chunk", extractor.chunk},
        {"hidden", extractor.hidden},
        {"use_eeg", extractor.use_eeg},
        {"mask", extractor.mask == MaskActivation::kRelu ? "relu" : "sigmoid"},
        {"upsample", extractor.upsample == Upsampling::kNearest ? "nearest" : "linear"}}},
      {"aad",
       {{"width", aad.width},
        {"stim_kernel", aad.stim_kernel},
        {"stim_stride", aad.stim_stride},
        {"stim_layers", aad.stim_layers},
        {"heads", aad.heads},
        {"ff_multiplier", aad.ff_multiplier},
        {"dropout", aad.dropout},
        {"decoder_kernel", aad.decoder_kernel},
        {"decoder_stride", aad.decoder_stride}}},
  };
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  if (!j.is_object()) throw ConfigError("model must be an object");
  for (const auto& [k, v] : j.items()) {
    if (k != "eeg" && k != "extractor" && k != "aad") throw ConfigError("unknown key model." + k);
  }
  if (j.contains("eeg")) {
    const json& e = j.at("eeg");
    reject_unknown(e, "eeg", {"channels", "width", "layers", "heads", "ff_multiplier", "dropout"});
    read_key(e, "eeg", "channels", c.eeg.channels);
    read_key(e, "eeg", "width", c.eeg.width);
    read_key(e, "eeg", "layers", c.eeg.layers);
    read_key(e, "eeg", "heads", c.eeg.heads);
    read_key(e, "eeg", "ff_multiplier", c.eeg.ff_multiplier);
    read_key(e, "eeg", "dropout", c.eeg.dropout);
  }
  if (j.contains("extractor")) {
    const json& e = j.at("extractor");
    reject_unknown(e, "extractor",
                   {"width", "kernel", "stride", "blocks", "chunk", "hidden", "use_eeg", "mask", "upsample"});
    read_key(e, "extractor", "width", c.extractor.width);
    read_key(e, "extractor", "kernel", c.extractor.kernel);
    read_key(e, "extractor", "stride", c.extractor.stride);
    read_key(e, "extractor", "blocks", c.extractor.blocks);
    read_key(e, "extractor", "chunk", c.extractor.chunk);
    read_key(e, "extractor", "hidden", c.extractor.hidden);
    read_key(e, "extractor", "use_eeg", c.extractor.use_eeg);
    std::string mask = "relu";
    std::string up = "nearest";
    read_key(e, "extractor", "mask", mask);
    read_key(e, "extractor", "upsample", up);
    if (mask != "relu" && mask != "sigmoid") throw ConfigError("model.extractor.mask must be relu or sigmoid");
    if (up != "nearest" && up != "linear") throw ConfigError("model.extractor.upsample must be nearest or linear");
    c.extractor.mask = mask == "relu" ? MaskActivation::kRelu : MaskActivation::kSigmoid;
    c.extractor.upsample = up == "nearest" ? Upsampling::kNearest : Upsampling::kLinear;
  }
  if (j.contains("aad")) {
    const json& e = j.at("aad");
    reject_unknown(e, "aad",
                   {"width", "stim_kernel", "stim_stride", "stim_layers", "heads", "ff_multiplier", "dropout",
                    "decoder_kernel", "decoder_stride"});
    read_key(e, "aad", "width", c.aad.width);
    read_key(e, "aad", "stim_kernel", c.aad.stim_kernel);
    read_key(e, "aad", "stim_stride", c.aad.stim_stride);
    read_key(e, "aad", "stim_layers", c.aad.stim_layers);
    read_key(e, "aad", "heads", c.aad.heads);
    read_key(e, "aad", "ff_multiplier", c.aad.ff_multiplier);
    read_key(e, "aad", "dropout", c.aad.dropout);
    read_key(e, "aad", "decoder_kernel", c.aad.decoder_kernel);
    read_key(e, "aad", "decoder_stride", c.aad.decoder_stride);
  }
  if (c.eeg.width != c.aad.width) throw ConfigError("model.eeg.width and model.aad.width must match");
  if (c.extractor.use_eeg && c.eeg.width != c.extractor.width) {
    throw ConfigError("model.eeg.width and model.extractor.width must match when EEG fusion is on");
  }
  for (Index v : {c.eeg.channels, c.eeg.width, c.eeg.heads, c.extractor.width, c.extractor.kernel,
                  c.extractor.stride, c.extractor.blocks, c.extractor.chunk, c.extractor.hidden, c.aad.width,
                  c.aad.stim_kernel, c.aad.stim_stride, c.aad.heads, c.aad.decoder_kernel, c.aad.decoder_stride}) {
    if (v < 1) throw ConfigError("model dimensions must be positive");
  }
  if (c.extractor.chunk < 2) throw ConfigError("model.extractor.chunk must be at least 2");
  if (c.eeg.width % c.eeg.heads != 0 || c.aad.width % c.aad.heads != 0) {
    throw ConfigError("model width must be divisible by the head count");
  }
  return c;
}

Model::Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  // Independent streams per module: changing one module's size leaves the
  // other modules' initial weights untouched.
  std::mt19937_64 rng_eeg = dsp::stream(seed, {0xEE});
  std::mt19937_64 rng_se = dsp::stream(seed, {0x5E});
  std::mt19937_64 rng_aad = dsp::stream(seed, {0xAAD});
  eeg_ = EegEncoder(cfg.eeg, rng_eeg);
  extractor_ = Extractor(cfg.extractor, rng_se);
  aad_ = Aad(cfg.aad, rng_aad);
}

nn::ParamList Model::parameters() {
  nn::ParamList out;
  eeg_.collect("eeg_encoder", out);
  extractor_.collect("extractor", out);
  aad_.collect("aad", out);
  return out;
}

nn::ParamList Model::parameters(Module m) {
  nn::ParamList out;
  switch (m) {
    case Module::kEegEncoder: eeg_.collect("eeg_encoder", out); break;
    case Module::kExtractor: extractor_.collect("extractor", out); break;
    case Module::kAad: aad_.collect("aad", out); break;
  }
  return out;
}

void Model::set_trainable(Module m, bool trainable) {
  for (auto& p : parameters(m)) {
    p.var->set_requires_grad(trainable);
    p.var->zero_grad();
  }
}

void Model::zero_grad() {
  for (auto& p : parameters()) p.var->zero_grad();
}

uint64_t Model::parameter_hash(Module m) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (auto& p : parameters(m)) {
    for (char c : p.name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    const Matrix& v = p.var->value();
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
    for (size_t i = 0; i < static_cast<size_t>(v.size()) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

}  // namespace neurosteer::model
