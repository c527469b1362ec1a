#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "prepatk/image.hpp"
#include "prepatk/preproc.hpp"
#include "prepatk/rng.hpp"

namespace prepatk {

/// Seeded toy classifier: a linear map or a two-layer relu MLP (hidden 32).
/// Weights are i.i.d. uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], drawn in a
/// fixed order from the named generator, so a (variant, seed, sizes) tuple
/// pins the model exactly.
struct ToyModel {
  enum class Variant { kLinear, kMlp };

  Variant variant = Variant::kLinear;
  int input_size = 16;
  int channels = 1;
  int classes = 10;
  uint64_t seed = 0;
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // mlp only
  Eigen::VectorXd b2;  // mlp only

  static ToyModel linear(uint64_t seed, int input_size, int classes, int channels = 1);
  static ToyModel mlp(uint64_t seed, int input_size, int classes, int channels = 1);

  int dim() const { return input_size * input_size * channels; }
  Eigen::VectorXd logits(const Image& x_m) const;
  /// argmax label; exact ties resolve to the lowest class index.
  int label(const Image& x_m) const;
};

/// Strict accounting: every hard-label evaluation lands in exactly one phase
/// bucket and in the total.
class QueryCounter {
 public:
  void record(const std::string& phase, long n = 1);
  long total() const;
  std::map<std::string, long> per_phase() const;
  void reset();

 private:
  mutable std::mutex mu_;
  long total_ = 0;
  std::map<std::string, long> phase_;
};

/// The hard-label query boundary. predict() returns only a class index and
/// charges the counter once per successful evaluation.
class HardLabelOracle {
 public:
  virtual ~HardLabelOracle() = default;
  virtual int predict(const Image& x) = 0;
  /// Elementwise predict; validates every element up front so a bad element
  /// fails the whole batch before any query is spent.
  virtual std::vector<int> predict_batch(const std::vector<Image>& xs);
  virtual void set_phase(const std::string& phase) = 0;
  virtual QueryCounter& counter() = 0;
};

/// In-process pipeline + toy model.
class LocalOracle : public HardLabelOracle {
 public:
  LocalOracle(PreprocessorSpec pipeline, ToyModel model);

  int predict(const Image& x) override;
  std::vector<int> predict_batch(const std::vector<Image>& xs) override;
  void set_phase(const std::string& phase) override;
  QueryCounter& counter() override { return counter_; }

  const PreprocessorSpec& pipeline() const { return pipeline_; }
  const ToyModel& model() const { return model_; }

 private:
  int evaluate(const Image& x) const;

  PreprocessorSpec pipeline_;
  ToyModel model_;
  QueryCounter counter_;
  std::mutex phase_mu_;
  std::string phase_ = "query";
};

/// HTTP client for the victim service protocol: POST {endpoint}/predict with
/// PNG bytes, response {"label": <int>}. Transient failures (connect/send/5xx)
/// retry up to 3 times with exponential backoff; the counter moves only on a
/// successful prediction.
class HttpOracle : public HardLabelOracle {
 public:
  explicit HttpOracle(std::string endpoint, int max_in_flight = 8);
  ~HttpOracle() override;

  int predict(const Image& x) override;
  std::vector<int> predict_batch(const std::vector<Image>& xs) override;
  void set_phase(const std::string& phase) override;
  QueryCounter& counter() override { return counter_; }

 private:
  int predict_once(const Image& x);

  std::string host_;
  int port_ = 80;
  int max_in_flight_;
  QueryCounter counter_;
  std::mutex phase_mu_;
  std::string phase_ = "query";
};

/// Pulls base-attack queries from one space into another (e.g. model space
/// into original space for the bypassing attack). Counting stays on the inner
/// oracle so query accounting is exact.
class MappedOracle : public HardLabelOracle {
 public:
  MappedOracle(HardLabelOracle& inner, std::function<Image(const Image&)> map)
      : inner_(inner), map_(std::move(map)) {}

  int predict(const Image& x) override { return inner_.predict(map_(x)); }
  void set_phase(const std::string& phase) override { inner_.set_phase(phase); }
  QueryCounter& counter() override { return inner_.counter(); }

 private:
  HardLabelOracle& inner_;
  std::function<Image(const Image&)> map_;
};

}  // namespace prepatk
