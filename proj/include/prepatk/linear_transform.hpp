#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <vector>

#include "prepatk/preproc.hpp"

namespace prepatk {

/// Sparse matrix M with x_m = M x_o per channel, rows indexed by flattened
/// model-space pixels and columns by flattened original-space pixels.
struct LinearTransform {
  struct Entry {
    int row;
    int col;
    double weight;
  };

  int out_dim = 0;  // s_m^2
  int in_dim = 0;   // s_o^2
  std::vector<Entry> entries;

  Eigen::SparseMatrix<double> to_sparse() const;
  Eigen::MatrixXd to_dense() const;
  int max_row_support() const;

  /// M applied to one flattened channel plane.
  Eigen::VectorXd apply_vec(const Eigen::VectorXd& x) const;
  Eigen::VectorXd apply_transpose_vec(const Eigen::VectorXd& y) const;
};

/// Analytic matrix for a crop or resize from a square side s_o.
LinearTransform build_linear(const PreprocessorSpec& spec, int s_o);

/// Matrix population by probing with one-hot images; only valid for specs
/// that are linear on [0,1] inputs (crop/resize), which the caller asserts.
LinearTransform probe_linear(const PreprocessorSpec& spec, int s_o);

/// Factored right pseudo-inverse M+ = M^T (M M^T)^-1 with a cached dense
/// Cholesky of the Gram matrix. Throws when the Gram factorization degrades
/// past the rank tolerance.
class PseudoInverse {
 public:
  explicit PseudoInverse(const LinearTransform& m, double rank_tol = 1e-10);

  Eigen::VectorXd apply(const Eigen::VectorXd& y) const;
  const LinearTransform& transform() const { return m_; }

 private:
  LinearTransform m_;
  Eigen::LDLT<Eigen::MatrixXd> gram_;
};

/// Process-wide cache keyed by (spec, s_o); the returned reference stays
/// valid for the lifetime of the process.
const PseudoInverse& cached_pseudo_inverse(const PreprocessorSpec& spec, int s_o);
const LinearTransform& cached_linear(const PreprocessorSpec& spec, int s_o);

}  // namespace prepatk
