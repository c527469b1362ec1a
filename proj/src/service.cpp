#include "prepatk/service.hpp"

#include <httplib.h>

#include "prepatk/png_io.hpp"

namespace prepatk {

std::optional<PreprocessorSpec> route_pipeline(const PreprocessorSpec& pipeline, int s, int model_input) {
  auto fits = [&](const PreprocessorSpec& p) {
    try {
      return output_size(p, s) == model_input;
    } catch (const std::exception&) {
      return false;
    }
  };
  if (fits(pipeline)) return pipeline;

  // the configured pipeline cannot take this size directly; normalize with a
  // resize up front (crop-first pipelines resize to the crop canvas,
  // shape-preserving ones straight to the model input)
  auto stages = pipeline.stage_list();
  int nominal = model_input;
  if (!stages.empty() && stages.front().kind == PreprocessorSpec::Kind::kCenterCrop)
    nominal = stages.front().target;
  std::vector<PreprocessorSpec> prefixed;
  prefixed.push_back(PreprocessorSpec::resize(nominal, Interp::kBilinear));
  for (auto& st : stages) prefixed.push_back(std::move(st));
  PreprocessorSpec candidate = PreprocessorSpec::pipeline(std::move(prefixed));
  if (fits(candidate)) return candidate;
  return std::nullopt;
}

struct VictimService::Impl {
  httplib::Server server;
};

VictimService::VictimService(ServiceConfig cfg)
    : cfg_(std::move(cfg)), model_(cfg_.model.build()), impl_(std::make_unique<Impl>()) {}

VictimService::~VictimService() { stop(); }

void VictimService::start() {
  auto& srv = impl_->server;
  srv.set_payload_max_length(cfg_.max_body_bytes);

  srv.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("ok", "text/plain");
  });

  srv.Post("/predict", [this](const httplib::Request& req, httplib::Response& res) {
    res.set_header("Content-Type", "application/json");
    if (cfg_.query_cap >= 0 && served_.load() >= cfg_.query_cap) {
      res.status = 429;
      res.set_content("{\"error\":\"query cap exceeded\"}", "application/json");
      return;
    }
    Image x;
    try {
      x = png_decode(req.body);
    } catch (const std::exception&) {
      res.status = 400;
      res.set_content("{\"error\":\"undecodable image\"}", "application/json");
      return;
    }
    if (!x.is_square() || x.channels() != model_.channels) {
      res.status = 422;
      res.set_content("{\"error\":\"unsupported input shape\"}", "application/json");
      return;
    }
    auto routed = route_pipeline(cfg_.pipeline, x.height(), model_.input_size);
    if (!routed) {
      res.status = 422;
      res.set_content("{\"error\":\"unsupported input shape\"}", "application/json");
      return;
    }
    int label = model_.label(apply(*routed, x));
    served_.fetch_add(1);
    res.set_content("{\"label\":" + std::to_string(label) + "}", "application/json");
  });

  if (cfg_.port == 0) {
    port_ = srv.bind_to_any_port(cfg_.host);
    if (port_ <= 0) throw std::runtime_error("victim service: failed to bind to any port on " + cfg_.host);
  } else {
    if (!srv.bind_to_port(cfg_.host, cfg_.port))
      throw std::runtime_error("victim service: failed to bind " + cfg_.host + ":" +
                               std::to_string(cfg_.port));
    port_ = cfg_.port;
  }
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  srv.wait_until_ready();
}

void VictimService::stop() {
  if (thread_.joinable()) {
    impl_->server.stop();
    thread_.join();
  }
}

}  // namespace prepatk
