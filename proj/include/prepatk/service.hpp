#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <thread>

#include "prepatk/config.hpp"

namespace prepatk {

/// Hard-label HTTP prediction service. Routes: POST /predict (PNG body in,
/// {"label": <int>} out) and GET /healthz. Responses never expose pipeline or
/// model parameters. Identical request bytes always produce identical
/// response bytes.
class VictimService {
 public:
  explicit VictimService(ServiceConfig cfg);
  ~VictimService();

  VictimService(const VictimService&) = delete;
  VictimService& operator=(const VictimService&) = delete;

  /// Binds and serves on a background thread; throws when the port is taken.
  /// With cfg.port == 0 an ephemeral port is picked; read it back via port().
  void start();
  void stop();
  int port() const { return port_; }
  std::string endpoint() const { return "http://" + cfg_.host + ":" + std::to_string(port_); }
  long requests_served() const { return served_.load(); }

 private:
  struct Impl;
  ServiceConfig cfg_;
  ToyModel model_;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  std::atomic<long> served_{0};
  int port_ = 0;
};

/// The request routing rule, exposed for tests: returns the pipeline actually
/// applied to a square input of side s (possibly with a resize prepended), or
/// nullopt when no route reaches the model input size.
std::optional<PreprocessorSpec> route_pipeline(const PreprocessorSpec& pipeline, int s, int model_input);

}  // namespace prepatk
