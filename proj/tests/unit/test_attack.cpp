#include <doctest.h>

#include <cmath>

#include "prepatk/attack.hpp"

using namespace prepatk;

namespace {

Image random_image(Rng& rng, int side, int channels = 1) {
  Image img(side, side, channels);
  for (auto& v : img.data()) v = rng.uniform();
  return img;
}

double cosine(const Image& a, const std::vector<double>& b) {
  double num = 0, na = 0, nb = 0;
  for (int i = 0; i < a.size(); ++i) {
    num += a.data()[i] * b[i];
    na += a.data()[i] * a.data()[i];
    nb += b[i] * b[i];
  }
  return num / std::sqrt(na * nb);
}

}  // namespace

TEST_SUITE("attack") {
  TEST_CASE("approx_grad: degenerate batches give the signed mean direction") {
    Rng rng(1);
    Image x(4, 4, 1, 0.5);
    auto always = [](const Image&) { return true; };
    Image g = approx_grad(always, x, 8, 0.1, rng);

    Rng replay(1);
    auto dirs = unit_sphere_sample(replay, 16, 8);
    for (int i = 0; i < 16; ++i) {
      double mean = 0;
      for (int b = 0; b < 8; ++b) mean += dirs[b][i] / 8.0;
      CHECK(g.data()[i] == doctest::Approx(mean).epsilon(1e-12));
    }
    CHECK_THROWS_AS(approx_grad(always, x, 1, 0.1, rng), std::invalid_argument);
  }

  TEST_CASE("approx_grad: aligns with the analytic normal of a linear boundary") {
    const int side = 8;  // dim 64
    Rng wrng(2);
    std::vector<double> w(side * side);
    for (auto& v : w) v = wrng.normal();
    Image x(side, side, 1, 0.5);  // interior point, boundary through it
    auto is_adv = [&](const Image& q) {
      double s = 0;
      for (int i = 0; i < q.size(); ++i) s += w[i] * (q.data()[i] - 0.5);
      return s > 0;
    };
    Rng rng(3);
    Image g = approx_grad(is_adv, x, 10000, 1e-2, rng);
    CHECK(cosine(g, w) >= 0.8);
  }

  TEST_CASE("approx_grad is bit-identical under a fixed seed") {
    Image x(4, 4, 1, 0.5);
    auto is_adv = [](const Image& q) { return q.data()[0] > 0.5; };
    Rng a(7), b(7);
    Image g1 = approx_grad(is_adv, x, 32, 0.05, a);
    Image g2 = approx_grad(is_adv, x, 32, 0.05, b);
    CHECK(g1.data() == g2.data());
  }

  TEST_CASE("boundary_bisect converges to the analytic crossing") {
    // adversarial iff pixel0 > 0.7: crossing on the segment is at 0.7
    auto is_adv = [](const Image& q) { return q.data()[0] > 0.7; };
    Image x_in(2, 2, 1, 1.0);
    Image x_ref(2, 2, 1, 0.0);

    long queries = 0;
    auto counting = [&](const Image& q) {
      ++queries;
      return is_adv(q);
    };
    Image out = boundary_bisect(counting, x_in, x_ref, 1e-3);
    CHECK(is_adv(out));
    CHECK(std::fabs(out.data()[0] - 0.7) <= 1e-3);
    CHECK(queries == static_cast<long>(std::ceil(std::log2(1.0 / 1e-3))));

    long q2 = 0;
    auto counting2 = [&](const Image& q) {
      ++q2;
      return is_adv(q);
    };
    boundary_bisect(counting2, x_in, x_ref, 0.5e-3);
    CHECK(q2 == queries + 1);  // halving tol costs exactly one more query

    long q3 = 0;
    Image near = x_ref;
    near.data()[0] = 0.7005;
    Image close_pair = near;
    close_pair.data()[0] = 0.7001;
    boundary_bisect([&](const Image& q) { ++q3; return is_adv(q); }, near, close_pair, 1e-3);
    CHECK(q3 == 0);  // already within tol
  }

  TEST_CASE("base_attack approaches the analytic boundary distance on a linear victim") {
    const int side = 16;  // dim 256
    int runs = 0;
    double ratio_sum = 0.0;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
      ToyModel model = ToyModel::linear(1000 + seed, side, 10);
      LocalOracle oracle(PreprocessorSpec::identity(), model);
      Rng rng(seed);
      Image x = random_image(rng, side);
      int y = model.label(x);

      // analytic distance to the nearest decision hyperplane
      Eigen::VectorXd logits = model.logits(x);
      double analytic = std::numeric_limits<double>::infinity();
      for (int c = 0; c < model.classes; ++c) {
        if (c == y) continue;
        Eigen::VectorXd wdiff = model.w1.row(y) - model.w1.row(c);
        analytic = std::min(analytic, (logits[y] - logits[c]) / wdiff.norm());
      }

      AttackConfig cfg;
      cfg.budget = 5000;
      cfg.seed = seed;
      auto res = base_attack(oracle, x, y, cfg);
      if (!res.success) continue;
      ++runs;
      ratio_sum += res.distance / analytic;
      CHECK(res.distance >= analytic - 1e-9);  // can never beat the true optimum
      CHECK(res.distance <= 3.0 * analytic + 2e-3 * side);
      CHECK(res.queries_used <= cfg.budget);
      CHECK(res.queries_used == oracle.counter().total());
    }
    REQUIRE(runs >= 18);
    CHECK(ratio_sum / runs <= 1.5);
  }

  TEST_CASE("doubling the budget never worsens the result; traces are monotone") {
    ToyModel model = ToyModel::linear(5, 8, 10);
    Rng rng(9);
    Image x = random_image(rng, 8);
    int y = model.label(x);
    AttackConfig cfg;
    cfg.batch = 50;
    cfg.seed = 4;

    double prev = std::numeric_limits<double>::infinity();
    for (long budget : {1500L, 3000L, 6000L}) {
      LocalOracle oracle(PreprocessorSpec::identity(), model);
      cfg.budget = budget;
      auto res = base_attack(oracle, x, y, cfg);
      REQUIRE(res.success);
      CHECK(res.distance <= prev + 1e-12);
      prev = res.distance;
      for (size_t i = 1; i < res.trace.size(); ++i)
        CHECK(res.trace[i].distance <= res.trace[i - 1].distance + 1e-12);
    }
  }

  TEST_CASE("bypass with an identity pipeline equals the base attack") {
    ToyModel model = ToyModel::linear(11, 8, 10);
    Rng rng(13);
    Image x = random_image(rng, 8);
    int y = model.label(x);
    AttackConfig cfg;
    cfg.budget = 2000;
    cfg.batch = 50;
    cfg.seed = 21;

    LocalOracle o1(PreprocessorSpec::identity(), model);
    auto base = base_attack(o1, x, y, cfg);
    LocalOracle o2(PreprocessorSpec::identity(), model);
    auto byp = bypass_attack(PreprocessorSpec::identity(), o2, x, y, cfg);
    REQUIRE(base.success);
    REQUIRE(byp.success);
    CHECK(byp.distance == base.distance);
    CHECK(byp.x_adv.data() == base.x_adv.data());
    CHECK(byp.queries_used == base.queries_used);
  }

  TEST_CASE("bypassing a crop leaves the border untouched") {
    auto pipeline = PreprocessorSpec::center_crop(16);
    ToyModel model = ToyModel::linear(17, 16, 10);
    LocalOracle oracle(pipeline, model);
    Rng rng(19);
    Image x_o = random_image(rng, 20);
    int y = oracle.predict(x_o);
    AttackConfig cfg;
    cfg.budget = 2000;
    cfg.batch = 50;
    cfg.seed = 3;
    auto res = bypass_attack(pipeline, oracle, x_o, y, cfg);
    REQUIRE(res.success);
    for (int yy = 0; yy < 20; ++yy)
      for (int xx = 0; xx < 20; ++xx)
        if (yy < 2 || yy >= 18 || xx < 2 || xx >= 18)
          CHECK(res.x_adv.at(0, yy, xx) == x_o.at(0, yy, xx));

    REQUIRE(res.model_space_adv.has_value());
    CHECK(l2_distance(apply(pipeline, res.x_adv), *res.model_space_adv) <= 1e-6);
    CHECK(res.queries_used == oracle.counter().total() - 1);  // y lookup above
  }

  TEST_CASE("bypass rejects non-bypassable stages") {
    ToyModel model = ToyModel::linear(23, 8, 10);
    LocalOracle oracle(PreprocessorSpec::quantize(4), model);
    Image x(8, 8, 1, 0.5);
    AttackConfig cfg;
    CHECK_THROWS_WITH_AS(bypass_attack(PreprocessorSpec::quantize(4), oracle, x, 0, cfg),
                         doctest::Contains("biased_gradient_attack"), std::invalid_argument);
  }

  TEST_CASE("biased estimator reduces to approx_grad for the identity preprocessor") {
    Image x(6, 6, 1, 0.5);
    auto is_adv = [](const Image& q) { return q.data()[3] > 0.5; };
    Rng a(31), b(31);
    Image plain = approx_grad(is_adv, x, 64, 0.05, a);
    auto biased = biased_grad(PreprocessorSpec::identity(), is_adv, x, 64, 0.05, b);
    CHECK(biased.discarded == 0);
    CHECK(biased.effective == 64);
    for (int i = 0; i < x.size(); ++i)
      CHECK(biased.pulled_back.data()[i] == doctest::Approx(plain.data()[i]).epsilon(1e-9));
  }

  TEST_CASE("tiny probes are annihilated by quantization") {
    // alpha far below the 4-bit cell width: most probes quantize to the center
    auto spec = PreprocessorSpec::quantize(4);
    Rng rng(37);
    Image x = apply(spec, random_image(rng, 8));
    auto is_adv = [](const Image&) { return false; };
    Rng grng(41);
    auto est = biased_grad(spec, is_adv, x, 128, 1e-4, grng);
    CHECK(est.discarded > 64);  // the motivating wasted-query phenomenon
  }

  TEST_CASE("biased attack on a quantized victim succeeds and accounts queries") {
    auto spec = PreprocessorSpec::quantize(4);
    ToyModel model = ToyModel::linear(43, 8, 10);
    LocalOracle oracle(spec, model);
    Rng rng(47);
    Image x_o = random_image(rng, 8);
    int y = oracle.predict(x_o);
    AttackConfig cfg;
    cfg.budget = 3000;
    cfg.batch = 50;
    cfg.seed = 5;
    auto res = biased_gradient_attack(spec, oracle, x_o, y, cfg);
    REQUIRE(res.success);
    CHECK(res.queries_used <= cfg.budget);
    CHECK(res.queries_used == oracle.counter().total() - 1);
    CHECK(res.distance == doctest::Approx(l2_distance(res.x_adv, x_o)).epsilon(1e-12));
    CHECK(oracle.predict(res.x_adv) != y);
    for (size_t i = 1; i < res.trace.size(); ++i)
      CHECK(res.trace[i].distance <= res.trace[i - 1].distance + 1e-12);
  }

  TEST_CASE("targeted attacks verify against the target label") {
    ToyModel model = ToyModel::linear(53, 8, 4);
    LocalOracle oracle(PreprocessorSpec::identity(), model);
    Rng rng(59);
    Image x = random_image(rng, 8);
    int y = oracle.predict(x);
    Image init;
    int target = -1;
    for (int t = 0; t < 100; ++t) {
      Image cand = random_image(rng, 8);
      int label = oracle.predict(cand);
      if (label != y) {
        init = cand;
        target = label;
        break;
      }
    }
    REQUIRE(target >= 0);
    AttackConfig cfg;
    cfg.budget = 2000;
    cfg.batch = 50;
    cfg.targeted = true;
    cfg.target_label = target;
    cfg.init = init;
    cfg.seed = 61;
    auto res = base_attack(oracle, x, y, cfg);
    REQUIRE(res.success);
    CHECK(oracle.predict(res.x_adv) == target);

    AttackConfig bad = cfg;
    bad.init.reset();
    CHECK_THROWS_AS(base_attack(oracle, x, y, bad), std::invalid_argument);
  }

  TEST_CASE("config invariants are enforced") {
    AttackConfig cfg;
    cfg.budget = 50;
    cfg.batch = 100;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.budget = 5000;
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.alpha = 1.0;
    cfg.gamma = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
}
