#include "prepatk/linear_transform.hpp"

#include <algorithm>
#include <map>
#include <mutex>

namespace prepatk {

Eigen::SparseMatrix<double> LinearTransform::to_sparse() const {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(entries.size());
  for (const auto& e : entries) trips.emplace_back(e.row, e.col, e.weight);
  Eigen::SparseMatrix<double> m(out_dim, in_dim);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

Eigen::MatrixXd LinearTransform::to_dense() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(out_dim, in_dim);
  for (const auto& e : entries) m(e.row, e.col) += e.weight;
  return m;
}

int LinearTransform::max_row_support() const {
  std::vector<int> counts(out_dim, 0);
  for (const auto& e : entries) ++counts[e.row];
  return counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
}

Eigen::VectorXd LinearTransform::apply_vec(const Eigen::VectorXd& x) const {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(out_dim);
  for (const auto& e : entries) y[e.row] += e.weight * x[e.col];
  return y;
}

Eigen::VectorXd LinearTransform::apply_transpose_vec(const Eigen::VectorXd& y) const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(in_dim);
  for (const auto& e : entries) x[e.col] += e.weight * y[e.row];
  return x;
}

LinearTransform build_linear(const PreprocessorSpec& spec, int s_o) {
  LinearTransform m;
  if (spec.kind == PreprocessorSpec::Kind::kCenterCrop) {
    int t = spec.target;
    if (s_o < t) throw std::invalid_argument("build_linear: crop target exceeds input side");
    int off = (s_o - t) / 2;
    m.out_dim = t * t;
    m.in_dim = s_o * s_o;
    m.entries.reserve(m.out_dim);
    for (int y = 0; y < t; ++y)
      for (int x = 0; x < t; ++x)
        m.entries.push_back({y * t + x, (y + off) * s_o + (x + off), 1.0});
    return m;
  }
  if (spec.kind == PreprocessorSpec::Kind::kResize) {
    int t = spec.target;
    auto taps = resize_taps(s_o, t, spec.interp);
    m.out_dim = t * t;
    m.in_dim = s_o * s_o;
    for (int oy = 0; oy < t; ++oy)
      for (int ox = 0; ox < t; ++ox)
        for (const auto& [iy, wy] : taps[oy])
          for (const auto& [ix, wx] : taps[ox])
            m.entries.push_back({oy * t + ox, iy * s_o + ix, wy * wx});
    return m;
  }
  throw std::invalid_argument("build_linear: spec is not a crop or resize");
}

LinearTransform probe_linear(const PreprocessorSpec& spec, int s_o) {
  int s_m = output_size(spec, s_o);
  LinearTransform m;
  m.out_dim = s_m * s_m;
  m.in_dim = s_o * s_o;
  Image probe(s_o, s_o, 1, 0.0);
  for (int col = 0; col < m.in_dim; ++col) {
    probe.data()[col] = 1.0;
    Image response = apply(spec, probe);
    probe.data()[col] = 0.0;
    for (int row = 0; row < m.out_dim; ++row) {
      double w = response.data()[row];
      if (w != 0.0) m.entries.push_back({row, col, w});
    }
  }
  // match the row-major ordering build_linear produces
  std::sort(m.entries.begin(), m.entries.end(), [](const auto& a, const auto& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  return m;
}

PseudoInverse::PseudoInverse(const LinearTransform& m, double rank_tol) : m_(m) {
  Eigen::SparseMatrix<double> sp = m.to_sparse();
  Eigen::MatrixXd gram = Eigen::MatrixXd(sp * sp.transpose());
  gram_ = gram.ldlt();
  if (gram_.info() != Eigen::Success)
    throw std::runtime_error("PseudoInverse: Gram factorization failed");
  double dmin = gram_.vectorD().minCoeff();
  double dmax = gram_.vectorD().maxCoeff();
  if (!(dmin > rank_tol * std::max(1.0, dmax)))
    throw std::runtime_error("PseudoInverse: Gram matrix is rank deficient");
}

Eigen::VectorXd PseudoInverse::apply(const Eigen::VectorXd& y) const {
  return m_.apply_transpose_vec(gram_.solve(y));
}

namespace {

std::string cache_key(const PreprocessorSpec& spec, int s_o) {
  return spec.describe() + "@" + std::to_string(s_o);
}

std::mutex g_cache_mutex;
std::map<std::string, std::unique_ptr<PseudoInverse>> g_pinv_cache;
std::map<std::string, std::unique_ptr<LinearTransform>> g_linear_cache;

}  // namespace

const LinearTransform& cached_linear(const PreprocessorSpec& spec, int s_o) {
  std::lock_guard<std::mutex> lock(g_cache_mutex);
  auto key = cache_key(spec, s_o);
  auto it = g_linear_cache.find(key);
  if (it == g_linear_cache.end())
    it = g_linear_cache.emplace(key, std::make_unique<LinearTransform>(build_linear(spec, s_o))).first;
  return *it->second;
}

const PseudoInverse& cached_pseudo_inverse(const PreprocessorSpec& spec, int s_o) {
  std::lock_guard<std::mutex> lock(g_cache_mutex);
  auto key = cache_key(spec, s_o);
  auto it = g_pinv_cache.find(key);
  if (it == g_pinv_cache.end())
    it = g_pinv_cache.emplace(key, std::make_unique<PseudoInverse>(build_linear(spec, s_o))).first;
  return *it->second;
}

}  // namespace prepatk
