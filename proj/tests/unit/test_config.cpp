#include <doctest.h>

#include "prepatk/config.hpp"
#include "prepatk/rng.hpp"

using namespace prepatk;

TEST_SUITE("config") {
  TEST_CASE("spec json round trip") {
    auto spec = PreprocessorSpec::pipeline({
        PreprocessorSpec::resize(16, Interp::kBicubic),
        PreprocessorSpec::center_crop(12),
        PreprocessorSpec::quantize(6),
        PreprocessorSpec::jpeg(80),
    });
    auto j = spec_to_json(spec);
    CHECK(j["kind"] == "pipeline");
    CHECK(j["stages"][0]["interp"] == "bicubic");
    CHECK(j["stages"][2]["bits"] == 6);
    auto back = spec_from_json(j);
    CHECK(back == spec);
  }

  TEST_CASE("unknown kinds and interps are rejected") {
    CHECK_THROWS_AS(spec_from_json(json{{"kind", "blur"}}), std::invalid_argument);
    CHECK_THROWS_AS(spec_from_json(json{{"kind", "resize"}, {"target", 4}, {"interp", "lanczos"}}),
                    std::invalid_argument);
  }

  TEST_CASE("image json debug format is lossless") {
    Rng rng(31);
    Image x(5, 4, 3);
    for (auto& v : x.data()) v = rng.uniform();
    Image back = image_from_json(image_to_json(x));
    CHECK(back.same_shape(x));
    CHECK(back.data() == x.data());

    // the nesting is channels -> rows -> cols
    auto j = image_to_json(x);
    CHECK(j["data"].size() == 3);
    CHECK(j["data"][0].size() == 5);
    CHECK(j["data"][0][0].size() == 4);
  }

  TEST_CASE("service config parses bind, body cap and model") {
    json j = {
        {"pipeline", {{"kind", "quantize"}, {"bits", 8}}},
        {"model", {{"variant", "mlp"}, {"seed", 9}, {"input_size", 8}, {"classes", 4}}},
        {"bind", "0.0.0.0:9000"},
        {"max_body_bytes", 1024},
        {"query_cap", 50},
    };
    auto cfg = service_config_from_json(j, /*apply_env=*/false);
    CHECK(cfg.host == "0.0.0.0");
    CHECK(cfg.port == 9000);
    CHECK(cfg.max_body_bytes == 1024);
    CHECK(cfg.query_cap == 50);
    CHECK(cfg.model.variant == "mlp");
    CHECK(cfg.pipeline.kind == PreprocessorSpec::Kind::kQuantize);
  }
}
