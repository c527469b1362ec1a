#include <doctest.h>

#include <cmath>

#include "prepatk/preproc.hpp"
#include "prepatk/rng.hpp"

using namespace prepatk;

namespace {

Image random_image(Rng& rng, int side, int channels = 1) {
  Image img(side, side, channels);
  for (auto& v : img.data()) v = rng.uniform();
  return img;
}

double dot(const Image& a, const Image& b) {
  double acc = 0;
  for (int i = 0; i < a.size(); ++i) acc += a.data()[i] * b.data()[i];
  return acc;
}

// central finite differences of the smooth surrogate along direction v
Image fd_jvp(const PreprocessorSpec& spec, const Image& x, const Image& v, double h = 1e-5) {
  Image xp = x, xm = x;
  for (int i = 0; i < x.size(); ++i) {
    xp.data()[i] += h * v.data()[i];
    xm.data()[i] -= h * v.data()[i];
  }
  Image fp = apply_smooth(spec, xp), fm = apply_smooth(spec, xm);
  Image out = fp;
  for (int i = 0; i < out.size(); ++i) out.data()[i] = (fp.data()[i] - fm.data()[i]) / (2.0 * h);
  return out;
}

double rel_error(const Image& a, const Image& b) {
  double num = 0, den = 0;
  for (int i = 0; i < a.size(); ++i) {
    double d = a.data()[i] - b.data()[i];
    num += d * d;
    den += b.data()[i] * b.data()[i];
  }
  return std::sqrt(num) / std::max(1e-30, std::sqrt(den));
}

void check_adjoint(const PreprocessorSpec& spec, const Image& x, Rng& rng) {
  Image out_shape = apply_smooth(spec, x);
  Image v(x.height(), x.width(), x.channels());
  Image w(out_shape.height(), out_shape.width(), out_shape.channels());
  for (auto& e : v.data()) e = rng.normal();
  for (auto& e : w.data()) e = rng.normal();
  double lhs = dot(w, jvp(spec, x, v));
  double rhs = dot(vjp(spec, x, w), v);
  CHECK(std::fabs(lhs - rhs) <= 1e-10 * std::max(1.0, std::fabs(lhs)));
}

}  // namespace

TEST_SUITE("preproc") {
  TEST_CASE("center crop picks the central block") {
    Image x(4, 4, 1);
    for (int i = 0; i < 16; ++i) x.data()[i] = i;
    Image y = apply(PreprocessorSpec::center_crop(2), x);
    CHECK(y.data() == std::vector<double>{5, 6, 9, 10});
    CHECK_THROWS_AS(apply(PreprocessorSpec::center_crop(5), x), std::invalid_argument);
  }

  TEST_CASE("quantize uses round-half-up k-bit levels") {
    Image x(1, 1, 1, 0.5);
    Image y = apply(PreprocessorSpec::quantize(8), x);
    CHECK(y.data()[0] == doctest::Approx(128.0 / 255.0).epsilon(1e-15));

    // independent round-half-up oracle across bit widths
    Rng rng(5);
    for (int bits : {1, 4, 6, 8}) {
      double levels = (1 << bits) - 1;
      Image z = random_image(rng, 6);
      Image q = apply(PreprocessorSpec::quantize(bits), z);
      for (int i = 0; i < z.size(); ++i) {
        double expected = std::floor(z.data()[i] * levels + 0.5) / levels;
        CHECK(q.data()[i] == expected);
      }
    }
    CHECK_THROWS_AS(PreprocessorSpec::quantize(0), std::invalid_argument);
    CHECK_THROWS_AS(PreprocessorSpec::quantize(9), std::invalid_argument);
  }

  TEST_CASE("resize at the target size is the identity") {
    Rng rng(17);
    for (auto interp : {Interp::kNearest, Interp::kBilinear, Interp::kBicubic}) {
      Image x = random_image(rng, 7);
      Image y = apply(PreprocessorSpec::resize(7, interp), x);
      CHECK(y.data() == x.data());
    }
  }

  TEST_CASE("idempotence holds exactly for crop, resize, and quantize") {
    Rng rng(23);
    std::vector<PreprocessorSpec> specs = {
        PreprocessorSpec::center_crop(9),
        PreprocessorSpec::resize(8, Interp::kNearest),
        PreprocessorSpec::resize(8, Interp::kBilinear),
        PreprocessorSpec::resize(8, Interp::kBicubic),
        PreprocessorSpec::quantize(4),
        PreprocessorSpec::quantize(8),
    };
    for (const auto& spec : specs) {
      for (int trial = 0; trial < 100; ++trial) {
        Image x = random_image(rng, 12);
        Image once = apply(spec, x);
        Image twice = apply(spec, once);
        CHECK(once.data() == twice.data());
      }
    }
  }

  TEST_CASE("jpeg leaves uniform images nearly unchanged across the working qualities") {
    // only the DC coefficient is nonzero; its quantization step stays within
    // a byte for the 50..100 range the toolkit exercises
    for (int quality : {50, 60, 75, 90, 100}) {
      Image x(16, 16, 1, 0.43);
      Image y = jpeg_roundtrip(x, quality);
      for (double v : y.data()) CHECK(std::fabs(v - 0.43) <= 1.0 / 255.0);
    }
    Image x(8, 8, 1, 0.2);
    CHECK_THROWS_AS(jpeg_roundtrip(x, 0), std::invalid_argument);
    CHECK_THROWS_AS(jpeg_roundtrip(x, 101), std::invalid_argument);
  }

  TEST_CASE("jpeg quality 100 is near-lossless and shape-safe on odd sizes") {
    Rng rng(31);
    for (int side : {8, 11, 16}) {
      Image x = random_image(rng, side);
      Image y = jpeg_roundtrip(x, 100);
      CHECK(y.same_shape(x));
      for (int i = 0; i < x.size(); ++i) CHECK(std::fabs(y.data()[i] - x.data()[i]) <= 2.0 / 255.0);
    }
  }

  TEST_CASE("jpeg double application is near-idempotent") {
    Rng rng(37);
    for (int trial = 0; trial < 100; ++trial) {
      Image x = random_image(rng, 16);
      Image once = jpeg_roundtrip(x, 60);
      Image twice = jpeg_roundtrip(once, 60);
      double first = linf_diff(once, x);
      double second = linf_diff(twice, once);
      CHECK(second <= first + 1e-12);
    }
  }

  TEST_CASE("jpeg distortion is nondecreasing as quality drops") {
    Rng rng(41);
    for (int trial = 0; trial < 100; ++trial) {
      Image x = random_image(rng, 16);
      double prev = -1.0;
      for (int quality : {100, 90, 80, 70, 60}) {
        double d = l2_distance(jpeg_roundtrip(x, quality), x);
        CHECK(d >= prev - 1e-9);
        prev = d;
      }
    }
  }

  TEST_CASE("pipelines apply left to right and compose") {
    Rng rng(43);
    Image x = random_image(rng, 8);
    auto a = PreprocessorSpec::resize(4, Interp::kBilinear);
    auto b = PreprocessorSpec::quantize(4);
    Image composed = apply(PreprocessorSpec::pipeline({a, b}), x);
    Image manual = apply(b, apply(a, x));
    CHECK(composed.data() == manual.data());

    Image single = apply(PreprocessorSpec::pipeline({a}), x);
    CHECK(single.data() == apply(a, x).data());
  }

  TEST_CASE("jvp of a nearest resize subsamples the tangent") {
    Rng rng(47);
    Image x = random_image(rng, 8), v = random_image(rng, 8);
    auto spec = PreprocessorSpec::resize(4, Interp::kNearest);
    Image got = jvp(spec, x, v);
    Image expect = apply(spec, v);
    CHECK(got.data() == expect.data());
  }

  TEST_CASE("quantize surrogate derivative matches finite differences") {
    // the cubic surrogate is discontinuous at half-integer grid multiples;
    // central differences are only an oracle away from those jumps, so test
    // points keep a guard band around them
    Rng rng(53);
    auto spec = PreprocessorSpec::quantize(4);
    auto near_jump = [](const Image& x) {
      for (double v : x.data()) {
        double z = v * 15.0;
        if (std::fabs(z - round_half_up(z)) > 0.5 - 1e-2) return true;
      }
      return false;
    };
    for (int trial = 0; trial < 20; ++trial) {
      Image x = random_image(rng, 4);
      while (near_jump(x)) x = random_image(rng, 4);
      Image v = random_image(rng, 4);
      for (auto& e : v.data()) e = rng.normal();
      Image fd = fd_jvp(spec, x, v);
      Image an = jvp(spec, x, v);
      CHECK(rel_error(an, fd) <= 1e-3);
    }
    // the a.e. derivative of round_s itself
    for (double z : {0.2, 1.4, -0.7, 3.9}) {
      double h = 1e-6;
      double fd = (round_smooth(z + h) - round_smooth(z - h)) / (2 * h);
      CHECK(round_smooth_deriv(z) == doctest::Approx(fd).epsilon(1e-6));
    }
  }

  TEST_CASE("pipeline jvp follows the chain rule against finite differences") {
    Rng rng(59);
    auto spec = PreprocessorSpec::pipeline(
        {PreprocessorSpec::resize(4, Interp::kBilinear), PreprocessorSpec::quantize(4)});
    for (int trial = 0; trial < 10; ++trial) {
      Image x = random_image(rng, 8);
      Image v(8, 8, 1);
      for (auto& e : v.data()) e = rng.normal();
      CHECK(rel_error(jvp(spec, x, v), fd_jvp(spec, x, v)) <= 1e-3);
    }
  }

  TEST_CASE("adjoint identity holds for every spec kind") {
    Rng rng(61);
    std::vector<PreprocessorSpec> specs = {
        PreprocessorSpec::center_crop(6),
        PreprocessorSpec::resize(4, Interp::kNearest),
        PreprocessorSpec::resize(4, Interp::kBilinear),
        PreprocessorSpec::resize(4, Interp::kBicubic),
        PreprocessorSpec::quantize(4),
        PreprocessorSpec::jpeg(60),
        PreprocessorSpec::pipeline(
            {PreprocessorSpec::resize(6, Interp::kBilinear), PreprocessorSpec::quantize(6)}),
    };
    for (const auto& spec : specs)
      for (int trial = 0; trial < 5; ++trial) check_adjoint(spec, random_image(rng, 8), rng);
  }

  TEST_CASE("jpeg jvp matches finite differences of the smooth codec") {
    Rng rng(67);
    for (int quality : {60, 100}) {
      auto spec = PreprocessorSpec::jpeg(quality);
      Image x = random_image(rng, 8);
      Image v(8, 8, 1);
      for (auto& e : v.data()) e = rng.normal();
      CHECK(rel_error(jvp(spec, x, v), fd_jvp(spec, x, v)) <= 1e-3);
    }
  }

  TEST_CASE("bypassable only for crops and resizes") {
    CHECK(PreprocessorSpec::center_crop(4).bypassable());
    CHECK(PreprocessorSpec::resize(4, Interp::kBicubic).bypassable());
    CHECK_FALSE(PreprocessorSpec::quantize(8).bypassable());
    CHECK_FALSE(PreprocessorSpec::jpeg(60).bypassable());
    CHECK(PreprocessorSpec::pipeline(
              {PreprocessorSpec::resize(8, Interp::kNearest), PreprocessorSpec::center_crop(6)})
              .bypassable());
    CHECK_FALSE(PreprocessorSpec::pipeline(
                    {PreprocessorSpec::resize(8, Interp::kNearest), PreprocessorSpec::quantize(8)})
                    .bypassable());
  }

  TEST_CASE("non-square spatial inputs are rejected") {
    Image x(4, 6, 1, 0.5);
    CHECK_THROWS_AS(apply(PreprocessorSpec::resize(2, Interp::kNearest), x), std::invalid_argument);
    CHECK_THROWS_AS(apply(PreprocessorSpec::center_crop(2), x), std::invalid_argument);
    // shape-preserving stages accept any rectangle
    CHECK_NOTHROW(apply(PreprocessorSpec::quantize(4), x));
    CHECK_NOTHROW(apply(PreprocessorSpec::jpeg(80), x));
  }
}
