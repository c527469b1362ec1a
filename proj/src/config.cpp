#include "prepatk/config.hpp"

#include <cstdlib>
#include <fstream>

namespace prepatk {

json spec_to_json(const PreprocessorSpec& spec) {
  json j;
  switch (spec.kind) {
    case PreprocessorSpec::Kind::kCenterCrop:
      j["kind"] = "center_crop";
      j["target"] = spec.target;
      break;
    case PreprocessorSpec::Kind::kResize:
      j["kind"] = "resize";
      j["target"] = spec.target;
      j["interp"] = to_string(spec.interp);
      break;
    case PreprocessorSpec::Kind::kQuantize:
      j["kind"] = "quantize";
      j["bits"] = spec.bits;
      break;
    case PreprocessorSpec::Kind::kJpeg:
      j["kind"] = "jpeg";
      j["quality"] = spec.quality;
      break;
    case PreprocessorSpec::Kind::kPipeline: {
      j["kind"] = "pipeline";
      json stages = json::array();
      for (const auto& st : spec.stages) stages.push_back(spec_to_json(st));
      j["stages"] = stages;
      break;
    }
  }
  return j;
}

PreprocessorSpec spec_from_json(const json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "center_crop") return PreprocessorSpec::center_crop(j.at("target").get<int>());
  if (kind == "resize")
    return PreprocessorSpec::resize(j.at("target").get<int>(),
                                    interp_from_string(j.value("interp", std::string("bilinear"))));
  if (kind == "quantize") return PreprocessorSpec::quantize(j.at("bits").get<int>());
  if (kind == "jpeg") return PreprocessorSpec::jpeg(j.at("quality").get<int>());
  if (kind == "pipeline") {
    std::vector<PreprocessorSpec> stages;
    for (const auto& st : j.value("stages", json::array())) stages.push_back(spec_from_json(st));
    return PreprocessorSpec::pipeline(std::move(stages));
  }
  if (kind == "identity") return PreprocessorSpec::identity();
  throw std::invalid_argument("spec_from_json: unknown kind: " + kind);
}

json image_to_json(const Image& x) {
  json channels = json::array();
  for (int c = 0; c < x.channels(); ++c) {
    json rows = json::array();
    for (int y = 0; y < x.height(); ++y) {
      json row = json::array();
      for (int xx = 0; xx < x.width(); ++xx) row.push_back(x.at(c, y, xx));
      rows.push_back(std::move(row));
    }
    channels.push_back(std::move(rows));
  }
  return json{{"height", x.height()}, {"width", x.width()}, {"channels", x.channels()}, {"data", channels}};
}

Image image_from_json(const json& j) {
  int h = j.at("height").get<int>();
  int w = j.at("width").get<int>();
  int c = j.at("channels").get<int>();
  Image out(h, w, c);
  const json& data = j.at("data");
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(ci, y, x) = data.at(ci).at(y).at(x).get<double>();
  return out;
}

ToyModel ModelConfig::build() const {
  if (variant == "linear") return ToyModel::linear(seed, input_size, classes, channels);
  if (variant == "mlp") return ToyModel::mlp(seed, input_size, classes, channels);
  throw std::invalid_argument("ModelConfig: unknown variant: " + variant);
}

json model_to_json(const ModelConfig& m) {
  return json{{"variant", m.variant},
              {"seed", m.seed},
              {"input_size", m.input_size},
              {"classes", m.classes},
              {"channels", m.channels}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.variant = j.value("variant", std::string("linear"));
  m.seed = j.value("seed", static_cast<uint64_t>(0));
  m.input_size = j.value("input_size", 16);
  m.classes = j.value("classes", 10);
  m.channels = j.value("channels", 1);
  return m;
}

ServiceConfig service_config_from_json(const json& j, bool apply_env) {
  ServiceConfig cfg;
  if (j.contains("pipeline")) cfg.pipeline = spec_from_json(j.at("pipeline"));
  if (j.contains("model")) cfg.model = model_from_json(j.at("model"));
  if (j.contains("bind")) {
    std::string bind = j.at("bind").get<std::string>();
    auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw std::invalid_argument("service config: bind must be host:port");
    cfg.host = bind.substr(0, colon);
    cfg.port = std::stoi(bind.substr(colon + 1));
  }
  cfg.max_body_bytes = j.value("max_body_bytes", cfg.max_body_bytes);
  cfg.query_cap = j.value("query_cap", cfg.query_cap);

  if (apply_env) {
    if (const char* bind = std::getenv("PREPATK_BIND")) {
      std::string b(bind);
      auto colon = b.rfind(':');
      if (colon == std::string::npos) throw std::invalid_argument("PREPATK_BIND must be host:port");
      cfg.host = b.substr(0, colon);
      cfg.port = std::stoi(b.substr(colon + 1));
    }
    if (const char* seed = std::getenv("PREPATK_SEED")) cfg.model.seed = std::stoull(seed);
  }
  return cfg;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json j;
  in >> j;
  return j;
}

void save_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace prepatk
