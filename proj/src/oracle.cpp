#include "prepatk/oracle.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <nlohmann/json.hpp>
#include <thread>

#include "prepatk/png_io.hpp"

namespace prepatk {

namespace {

void fill_uniform(Rng& rng, double bound, Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = (rng.uniform() * 2.0 - 1.0) * bound;
}

void fill_uniform(Rng& rng, double bound, Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = (rng.uniform() * 2.0 - 1.0) * bound;
}

}  // namespace

ToyModel ToyModel::linear(uint64_t seed, int input_size, int classes, int channels) {
  ToyModel m;
  m.variant = Variant::kLinear;
  m.input_size = input_size;
  m.channels = channels;
  m.classes = classes;
  m.seed = seed;
  Rng rng(seed);
  double bound = 1.0 / std::sqrt(static_cast<double>(m.dim()));
  m.w1.resize(classes, m.dim());
  m.b1.resize(classes);
  fill_uniform(rng, bound, m.w1);
  fill_uniform(rng, bound, m.b1);
  return m;
}

ToyModel ToyModel::mlp(uint64_t seed, int input_size, int classes, int channels) {
  constexpr int kHidden = 32;
  ToyModel m;
  m.variant = Variant::kMlp;
  m.input_size = input_size;
  m.channels = channels;
  m.classes = classes;
  m.seed = seed;
  Rng rng(seed);
  double bound1 = 1.0 / std::sqrt(static_cast<double>(m.dim()));
  double bound2 = 1.0 / std::sqrt(static_cast<double>(kHidden));
  m.w1.resize(kHidden, m.dim());
  m.b1.resize(kHidden);
  m.w2.resize(classes, kHidden);
  m.b2.resize(classes);
  fill_uniform(rng, bound1, m.w1);
  fill_uniform(rng, bound1, m.b1);
  fill_uniform(rng, bound2, m.w2);
  fill_uniform(rng, bound2, m.b2);
  return m;
}

Eigen::VectorXd ToyModel::logits(const Image& x_m) const {
  if (x_m.size() != dim() || x_m.height() != input_size || x_m.width() != input_size ||
      x_m.channels() != channels)
    throw std::invalid_argument("ToyModel: input shape does not match model input size");
  Eigen::Map<const Eigen::VectorXd> v(x_m.data().data(), dim());
  if (variant == Variant::kLinear) return w1 * v + b1;
  Eigen::VectorXd h = (w1 * v + b1).cwiseMax(0.0);
  return w2 * h + b2;
}

int ToyModel::label(const Image& x_m) const {
  Eigen::VectorXd s = logits(x_m);
  int best = 0;
  for (int i = 1; i < s.size(); ++i)
    if (s[i] > s[best]) best = i;
  return best;
}

void QueryCounter::record(const std::string& phase, long n) {
  std::lock_guard<std::mutex> lock(mu_);
  total_ += n;
  phase_[phase] += n;
}

long QueryCounter::total() const {
  std::lock_guard<std::mutex> lock(mu_);
  return total_;
}

std::map<std::string, long> QueryCounter::per_phase() const {
  std::lock_guard<std::mutex> lock(mu_);
  return phase_;
}

void QueryCounter::reset() {
  std::lock_guard<std::mutex> lock(mu_);
  total_ = 0;
  phase_.clear();
}

std::vector<int> HardLabelOracle::predict_batch(const std::vector<Image>& xs) {
  std::vector<int> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(predict(x));
  return out;
}

LocalOracle::LocalOracle(PreprocessorSpec pipeline, ToyModel model)
    : pipeline_(std::move(pipeline)), model_(std::move(model)) {}

int LocalOracle::evaluate(const Image& x) const { return model_.label(apply(pipeline_, x)); }

int LocalOracle::predict(const Image& x) {
  int y = evaluate(x);
  std::string phase;
  {
    std::lock_guard<std::mutex> lock(phase_mu_);
    phase = phase_;
  }
  counter_.record(phase, 1);
  return y;
}

std::vector<int> LocalOracle::predict_batch(const std::vector<Image>& xs) {
  // shape-check everything first so a bad element fails the batch atomically
  bool spatial = false;
  for (const auto& st : pipeline_.stage_list())
    spatial |= st.kind == PreprocessorSpec::Kind::kCenterCrop || st.kind == PreprocessorSpec::Kind::kResize;
  for (const auto& x : xs) {
    if (spatial && !x.is_square())
      throw std::invalid_argument("predict_batch: non-square input to a spatial pipeline");
    int oh = spatial ? output_size(pipeline_, x.height()) : x.height();
    int ow = spatial ? oh : x.width();
    if (oh != model_.input_size || ow != model_.input_size || x.channels() != model_.channels)
      throw std::invalid_argument("predict_batch: element does not reach the model input size");
  }
  std::vector<int> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(predict(x));
  return out;
}

void LocalOracle::set_phase(const std::string& phase) {
  std::lock_guard<std::mutex> lock(phase_mu_);
  phase_ = phase;
}

namespace {

// "http://host:port" or "host:port"
void parse_endpoint(const std::string& endpoint, std::string& host, int& port) {
  std::string rest = endpoint;
  auto scheme = rest.find("://");
  if (scheme != std::string::npos) rest = rest.substr(scheme + 3);
  while (!rest.empty() && rest.back() == '/') rest.pop_back();
  auto colon = rest.rfind(':');
  if (colon == std::string::npos) {
    host = rest;
    port = 80;
  } else {
    host = rest.substr(0, colon);
    port = std::stoi(rest.substr(colon + 1));
  }
  if (host.empty()) throw std::invalid_argument("http oracle: bad endpoint: " + endpoint);
}

int post_predict(const std::string& host, int port, const std::string& body) {
  httplib::Client cli(host, port);
  cli.set_connection_timeout(10, 0);
  cli.set_read_timeout(30, 0);
  for (int attempt = 0;; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(100 << (attempt - 1)));
    auto res = cli.Post("/predict", body, "image/png");
    bool transient = !res || res->status >= 500;
    if (transient) {
      if (attempt >= 3) throw std::runtime_error("http_predict: transient failure after 3 retries");
      continue;
    }
    if (res->status != 200)
      throw std::runtime_error("http_predict: server returned status " + std::to_string(res->status));
    try {
      auto j = nlohmann::json::parse(res->body);
      return j.at("label").get<int>();
    } catch (const std::exception&) {
      throw std::runtime_error("http_predict: malformed response body");
    }
  }
}

}  // namespace

HttpOracle::HttpOracle(std::string endpoint, int max_in_flight) : max_in_flight_(max_in_flight) {
  parse_endpoint(endpoint, host_, port_);
}

HttpOracle::~HttpOracle() = default;

int HttpOracle::predict_once(const Image& x) { return post_predict(host_, port_, png_encode(x)); }

int HttpOracle::predict(const Image& x) {
  int y = predict_once(x);
  std::string phase;
  {
    std::lock_guard<std::mutex> lock(phase_mu_);
    phase = phase_;
  }
  counter_.record(phase, 1);
  return y;
}

std::vector<int> HttpOracle::predict_batch(const std::vector<Image>& xs) {
  std::vector<std::string> bodies;
  bodies.reserve(xs.size());
  for (const auto& x : xs) bodies.push_back(png_encode(x));  // validates the whole batch up front

  std::vector<int> labels(xs.size(), -1);
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::string error;
  std::mutex error_mu;
  std::string phase;
  {
    std::lock_guard<std::mutex> lock(phase_mu_);
    phase = phase_;
  }

  auto worker = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= bodies.size() || failed.load()) return;
      try {
        labels[i] = post_predict(host_, port_, bodies[i]);
        counter_.record(phase, 1);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mu);
        error = e.what();
        failed.store(true);
        return;
      }
    }
  };

  size_t n_workers = std::min<size_t>(static_cast<size_t>(max_in_flight_), xs.size());
  std::vector<std::thread> threads;
  for (size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failed.load()) throw std::runtime_error(error);
  return labels;
}

void HttpOracle::set_phase(const std::string& phase) {
  std::lock_guard<std::mutex> lock(phase_mu_);
  phase_ = phase;
}

}  // namespace prepatk
