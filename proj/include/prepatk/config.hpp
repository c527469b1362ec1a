#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "prepatk/image.hpp"
#include "prepatk/oracle.hpp"
#include "prepatk/preproc.hpp"

namespace prepatk {

using json = nlohmann::json;

/// Config document form of a spec; field names: kind, target, interp, bits,
/// quality, stages.
json spec_to_json(const PreprocessorSpec& spec);
PreprocessorSpec spec_from_json(const json& j);

/// Lossless array-of-arrays debug format (channels x rows x cols of doubles).
json image_to_json(const Image& x);
Image image_from_json(const json& j);

struct ModelConfig {
  std::string variant = "linear";  // "linear" | "mlp"
  uint64_t seed = 0;
  int input_size = 16;
  int classes = 10;
  int channels = 1;

  ToyModel build() const;
};

json model_to_json(const ModelConfig& m);
ModelConfig model_from_json(const json& j);

struct ServiceConfig {
  PreprocessorSpec pipeline = PreprocessorSpec::identity();
  ModelConfig model;
  std::string host = "127.0.0.1";
  int port = 8787;
  size_t max_body_bytes = 8ull << 20;
  long query_cap = -1;  // < 0: unlimited
};

/// Env overrides: PREPATK_BIND ("host:port") and PREPATK_SEED.
ServiceConfig service_config_from_json(const json& j, bool apply_env = true);

json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const json& j);

}  // namespace prepatk
