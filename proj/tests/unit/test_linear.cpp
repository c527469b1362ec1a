#include <doctest.h>

#include <Eigen/SVD>
#include <cmath>

#include "prepatk/linear_transform.hpp"
#include "prepatk/rng.hpp"

using namespace prepatk;

namespace {

double entrywise_gap(const LinearTransform& a, const LinearTransform& b) {
  return (a.to_dense() - b.to_dense()).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_SUITE("linear") {
  TEST_CASE("crop 4->2 selects the central columns") {
    auto m = build_linear(PreprocessorSpec::center_crop(2), 4);
    CHECK(m.out_dim == 4);
    CHECK(m.in_dim == 16);
    REQUIRE(m.entries.size() == 4);
    std::vector<int> cols;
    for (const auto& e : m.entries) {
      CHECK(e.weight == 1.0);
      cols.push_back(e.col);
    }
    CHECK(cols == std::vector<int>{5, 6, 9, 10});
  }

  TEST_CASE("nearest resize at equal sizes is the identity matrix") {
    auto m = build_linear(PreprocessorSpec::resize(3, Interp::kNearest), 3);
    CHECK((m.to_dense() - Eigen::MatrixXd::Identity(9, 9)).norm() == 0.0);
  }

  TEST_CASE("bilinear rows are a partition of unity") {
    auto m = build_linear(PreprocessorSpec::resize(2, Interp::kBilinear), 4);
    Eigen::VectorXd row_sums = m.to_dense().rowwise().sum();
    for (int r = 0; r < m.out_dim; ++r) CHECK(row_sums[r] == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("row support counts match the kernel orders") {
    CHECK(build_linear(PreprocessorSpec::resize(3, Interp::kNearest), 6).max_row_support() == 1);
    CHECK(build_linear(PreprocessorSpec::resize(4, Interp::kBilinear), 8).max_row_support() <= 4);
    CHECK(build_linear(PreprocessorSpec::resize(4, Interp::kBicubic), 8).max_row_support() <= 16);
    CHECK(build_linear(PreprocessorSpec::center_crop(6), 8).max_row_support() == 1);
  }

  TEST_CASE("apply agrees with the matrix on random images") {
    Rng rng(71);
    for (auto interp : {Interp::kNearest, Interp::kBilinear, Interp::kBicubic}) {
      auto spec = PreprocessorSpec::resize(4, interp);
      auto m = build_linear(spec, 9);
      Image x(9, 9, 1);
      for (auto& v : x.data()) v = rng.uniform();
      Image y = apply(spec, x);
      Eigen::Map<const Eigen::VectorXd> xv(x.data().data(), x.size());
      Eigen::VectorXd ym = m.apply_vec(xv);
      for (int i = 0; i < y.size(); ++i) CHECK(std::fabs(y.data()[i] - ym[i]) <= 1e-9);
    }
  }

  TEST_CASE("probe_linear reproduces build_linear") {
    CHECK(entrywise_gap(build_linear(PreprocessorSpec::center_crop(2), 4),
                        probe_linear(PreprocessorSpec::center_crop(2), 4)) <= 1e-9);

    auto nearest = probe_linear(PreprocessorSpec::resize(3, Interp::kNearest), 6);
    CHECK(nearest.max_row_support() == 1);
    for (const auto& e : nearest.entries) CHECK(e.weight == 1.0);

    auto bicubic = probe_linear(PreprocessorSpec::resize(4, Interp::kBicubic), 8);
    CHECK(bicubic.max_row_support() <= 16);
    CHECK(entrywise_gap(bicubic, build_linear(PreprocessorSpec::resize(4, Interp::kBicubic), 8)) <= 1e-9);
  }

  TEST_CASE("pseudo-inverse of selection matrices is the transpose") {
    for (auto spec : {PreprocessorSpec::center_crop(2), PreprocessorSpec::resize(2, Interp::kNearest)}) {
      auto m = build_linear(spec, 4);
      PseudoInverse pinv(m);
      Rng rng(73);
      for (int t = 0; t < 10; ++t) {
        Eigen::VectorXd y(m.out_dim);
        for (int i = 0; i < y.size(); ++i) y[i] = rng.normal();
        Eigen::VectorXd got = pinv.apply(y);
        Eigen::VectorXd expect = m.apply_transpose_vec(y);
        CHECK((got - expect).cwiseAbs().maxCoeff() <= 1e-12);
      }
    }
  }

  TEST_CASE("pseudo-inverse reproduces range vectors") {
    auto spec = PreprocessorSpec::resize(4, Interp::kBilinear);
    auto m = build_linear(spec, 8);
    PseudoInverse pinv(m);
    Rng rng(79);
    for (int t = 0; t < 100; ++t) {
      // y in range(M) by construction
      Eigen::VectorXd x(m.in_dim);
      for (int i = 0; i < x.size(); ++i) x[i] = rng.normal();
      Eigen::VectorXd y = m.apply_vec(x);
      Eigen::VectorXd back = m.apply_vec(pinv.apply(y));
      CHECK((back - y).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }

  TEST_CASE("pseudo-inverse matches the dense SVD") {
    auto m = build_linear(PreprocessorSpec::resize(4, Interp::kBicubic), 8);
    PseudoInverse pinv(m);
    Eigen::MatrixXd dense = m.to_dense();
    auto svd = dense.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV);
    Rng rng(83);
    Eigen::VectorXd y(m.out_dim);
    for (int i = 0; i < y.size(); ++i) y[i] = rng.normal();
    Eigen::VectorXd via_svd = svd.solve(y);
    CHECK((pinv.apply(y) - via_svd).cwiseAbs().maxCoeff() <= 1e-8);
  }

  TEST_CASE("build_linear rejects upsampling requests and non-spatial specs") {
    CHECK_THROWS_AS(build_linear(PreprocessorSpec::center_crop(8), 4), std::invalid_argument);
    CHECK_THROWS_AS(build_linear(PreprocessorSpec::quantize(8), 4), std::invalid_argument);
  }

  TEST_CASE("cached transforms are shared") {
    const auto& a = cached_pseudo_inverse(PreprocessorSpec::resize(2, Interp::kBilinear), 4);
    const auto& b = cached_pseudo_inverse(PreprocessorSpec::resize(2, Interp::kBilinear), 4);
    CHECK(&a == &b);
  }
}
