#include <doctest.h>

#include "prepatk/oracle.hpp"
#include "prepatk/rng.hpp"

using namespace prepatk;

namespace {

Image random_image(Rng& rng, int side, int channels = 1) {
  Image img(side, side, channels);
  for (auto& v : img.data()) v = rng.uniform();
  return img;
}

// a fixed linear model whose logits we can steer by hand
ToyModel two_class_model() {
  ToyModel m = ToyModel::linear(1, 2, 2);
  m.w1.setZero();
  m.b1.setZero();
  m.w1(0, 0) = 1.0;  // class 0 score = pixel(0,0)
  m.w1(1, 1) = 1.0;  // class 1 score = pixel(0,1)
  return m;
}

}  // namespace

TEST_SUITE("oracle") {
  TEST_CASE("argmax with lowest-index tie breaking") {
    ToyModel m = two_class_model();
    Image x(2, 2, 1, 0.0);
    x.at(0, 0, 0) = 0.9;
    x.at(0, 0, 1) = 0.4;
    CHECK(m.label(x) == 0);
    x.at(0, 0, 1) = 0.9;  // exact tie
    CHECK(m.label(x) == 0);
    x.at(0, 0, 1) = 0.95;
    CHECK(m.label(x) == 1);
  }

  TEST_CASE("models are fully determined by their seed") {
    ToyModel a = ToyModel::mlp(7, 8, 10);
    ToyModel b = ToyModel::mlp(7, 8, 10);
    ToyModel c = ToyModel::mlp(8, 8, 10);
    CHECK(a.w1 == b.w1);
    CHECK(a.b2 == b.b2);
    CHECK(a.w1 != c.w1);
    // fan-in bound
    double bound = 1.0 / std::sqrt(64.0);
    CHECK(a.w1.cwiseAbs().maxCoeff() <= bound);
  }

  TEST_CASE("predict is deterministic and counts every evaluation") {
    LocalOracle oracle(PreprocessorSpec::quantize(8), ToyModel::linear(3, 4, 10));
    Rng rng(5);
    Image x = random_image(rng, 4);
    int l1 = oracle.predict(x);
    int l2 = oracle.predict(x);
    CHECK(l1 == l2);
    CHECK(oracle.counter().total() == 2);
  }

  TEST_CASE("size mismatch after preprocessing is an error") {
    LocalOracle oracle(PreprocessorSpec::center_crop(4), ToyModel::linear(3, 4, 10));
    Rng rng(9);
    CHECK(oracle.predict(random_image(rng, 6)) >= 0);
    CHECK_THROWS_AS(oracle.predict(random_image(rng, 3)), std::invalid_argument);
    CHECK(oracle.counter().total() == 1);  // the failed call never counted
  }

  TEST_CASE("batch predictions match a loop of single predictions") {
    LocalOracle a(PreprocessorSpec::identity(), ToyModel::linear(11, 4, 10));
    LocalOracle b(PreprocessorSpec::identity(), ToyModel::linear(11, 4, 10));
    Rng rng(13);
    std::vector<Image> xs;
    for (int i = 0; i < 5; ++i) xs.push_back(random_image(rng, 4));

    auto batch = a.predict_batch(xs);
    std::vector<int> loop;
    for (const auto& x : xs) loop.push_back(b.predict(x));
    CHECK(batch == loop);
    CHECK(a.counter().total() == b.counter().total());

    CHECK(a.predict_batch({}).empty());
    CHECK(a.counter().total() == 5);

    CHECK(a.predict_batch({xs[0]}) == std::vector<int>{loop[0]});
  }

  TEST_CASE("a bad element fails the whole batch before any query") {
    LocalOracle oracle(PreprocessorSpec::identity(), ToyModel::linear(11, 4, 10));
    Rng rng(17);
    std::vector<Image> xs = {random_image(rng, 4), random_image(rng, 5), random_image(rng, 4)};
    CHECK_THROWS_AS(oracle.predict_batch(xs), std::invalid_argument);
    CHECK(oracle.counter().total() == 0);
  }

  TEST_CASE("the counter splits by phase and sums to the total") {
    LocalOracle oracle(PreprocessorSpec::identity(), ToyModel::linear(11, 4, 10));
    Rng rng(19);
    oracle.set_phase("alpha");
    oracle.predict(random_image(rng, 4));
    oracle.predict(random_image(rng, 4));
    oracle.set_phase("beta");
    oracle.predict(random_image(rng, 4));
    auto phases = oracle.counter().per_phase();
    CHECK(phases["alpha"] == 2);
    CHECK(phases["beta"] == 1);
    long sum = 0;
    for (const auto& [k, v] : phases) sum += v;
    CHECK(sum == oracle.counter().total());
  }

  TEST_CASE("mapped oracle counts on the inner counter") {
    LocalOracle inner(PreprocessorSpec::identity(), ToyModel::linear(11, 4, 10));
    MappedOracle mapped(inner, [](const Image& x) { return x; });
    Rng rng(23);
    mapped.predict(random_image(rng, 4));
    CHECK(inner.counter().total() == 1);
    CHECK(&mapped.counter() == &inner.counter());
  }

  TEST_CASE("http oracle rejects bad endpoints and unreachable hosts") {
    CHECK_THROWS_AS(HttpOracle(""), std::invalid_argument);
    HttpOracle dead("http://127.0.0.1:1");  // reserved port, nothing listens
    Rng rng(29);
    CHECK_THROWS_AS(dead.predict(random_image(rng, 4)), std::runtime_error);
    CHECK(dead.counter().total() == 0);
  }
}
