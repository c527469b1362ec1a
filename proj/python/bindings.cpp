#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "prepatk/attack.hpp"
#include "prepatk/config.hpp"
#include "prepatk/extraction.hpp"
#include "prepatk/linear_transform.hpp"
#include "prepatk/png_io.hpp"
#include "prepatk/recovery.hpp"
#include "prepatk/service.hpp"

namespace py = pybind11;
using namespace prepatk;

namespace {

Image image_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
  if (arr.ndim() == 2) {
    Image img(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)), 1);
    std::copy(arr.data(), arr.data() + arr.size(), img.data().begin());
    return img;
  }
  if (arr.ndim() == 3) {
    Image img(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(2)),
              static_cast<int>(arr.shape(0)));
    std::copy(arr.data(), arr.data() + arr.size(), img.data().begin());
    return img;
  }
  throw std::invalid_argument("expected a (H,W) or (C,H,W) array");
}

py::array_t<double> image_to_array(const Image& img) {
  py::array_t<double> arr({img.channels(), img.height(), img.width()});
  std::copy(img.data().begin(), img.data().end(), arr.mutable_data());
  return arr;
}

PreprocessorSpec spec_from_json_str(const std::string& s) { return spec_from_json(json::parse(s)); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "preprocessor-aware hard-label attacks: core operations";

  py::class_<Image>(m, "Image")
      .def(py::init(&image_from_array), py::arg("array"))
      .def_property_readonly("height", &Image::height)
      .def_property_readonly("width", &Image::width)
      .def_property_readonly("channels", &Image::channels)
      .def("to_numpy", &image_to_array)
      .def("__repr__", [](const Image& i) {
        return "<Image " + std::to_string(i.channels()) + "x" + std::to_string(i.height()) + "x" +
               std::to_string(i.width()) + ">";
      });

  m.def("clamp01", &clamp01);
  m.def("l2_distance", &l2_distance);
  m.def("l0_diff", &l0_diff);
  m.def("linf_diff", &linf_diff);

  py::class_<Rng>(m, "Rng")
      .def(py::init<uint64_t>(), py::arg("seed"))
      .def("uniform", &Rng::uniform)
      .def("normal", &Rng::normal)
      .def("fork", &Rng::fork);

  py::enum_<Interp>(m, "Interp")
      .value("NEAREST", Interp::kNearest)
      .value("BILINEAR", Interp::kBilinear)
      .value("BICUBIC", Interp::kBicubic);

  py::class_<PreprocessorSpec>(m, "PreprocessorSpec")
      .def_static("center_crop", &PreprocessorSpec::center_crop, py::arg("target"))
      .def_static("resize", &PreprocessorSpec::resize, py::arg("target"), py::arg("interp"))
      .def_static("quantize", &PreprocessorSpec::quantize, py::arg("bits"))
      .def_static("jpeg", &PreprocessorSpec::jpeg, py::arg("quality"))
      .def_static("pipeline", &PreprocessorSpec::pipeline, py::arg("stages"))
      .def_static("identity", &PreprocessorSpec::identity)
      .def_static("from_json", &spec_from_json_str, py::arg("text"))
      .def("to_json", [](const PreprocessorSpec& s) { return spec_to_json(s).dump(); })
      .def("describe", &PreprocessorSpec::describe)
      .def("bypassable", &PreprocessorSpec::bypassable)
      .def("__eq__", [](const PreprocessorSpec& a, const PreprocessorSpec& b) { return a == b; })
      .def("__repr__", [](const PreprocessorSpec& s) { return "<spec " + s.describe() + ">"; });

  m.def("apply", &apply, py::arg("spec"), py::arg("x"));
  m.def("apply_smooth", &apply_smooth, py::arg("spec"), py::arg("x"));
  m.def("jvp", &jvp, py::arg("spec"), py::arg("x"), py::arg("v"));
  m.def("vjp", &vjp, py::arg("spec"), py::arg("x"), py::arg("w"));
  m.def("output_size", &output_size, py::arg("spec"), py::arg("s_in"));
  m.def("jpeg_roundtrip", &jpeg_roundtrip, py::arg("x"), py::arg("quality"));

  py::class_<LinearTransform>(m, "LinearTransform")
      .def_property_readonly("out_dim", [](const LinearTransform& t) { return t.out_dim; })
      .def_property_readonly("in_dim", [](const LinearTransform& t) { return t.in_dim; })
      .def("max_row_support", &LinearTransform::max_row_support)
      .def("triplets", [](const LinearTransform& t) {
        std::vector<int> rows, cols;
        std::vector<double> weights;
        for (const auto& e : t.entries) {
          rows.push_back(e.row);
          cols.push_back(e.col);
          weights.push_back(e.weight);
        }
        return py::make_tuple(rows, cols, weights);
      });
  m.def("build_linear", &build_linear, py::arg("spec"), py::arg("s_o"));
  m.def("probe_linear", &probe_linear, py::arg("spec"), py::arg("s_o"));

  py::class_<RecoveryResult>(m, "RecoveryResult")
      .def_readonly("x_o_adv", &RecoveryResult::x_o_adv)
      .def_readonly("residual", &RecoveryResult::residual)
      .def_readonly("lambda_", &RecoveryResult::lambda)
      .def_readonly("verified_adversarial", &RecoveryResult::verified_adversarial);
  m.def("recover_crop", &recover_crop, py::arg("x_o"), py::arg("x_m_adv"), py::arg("spec"));
  m.def("recover_resize",
        py::overload_cast<const Image&, const Image&, const PreprocessorSpec&>(&recover_resize),
        py::arg("x_o"), py::arg("x_m_adv"), py::arg("spec"));
  m.def(
      "recover_general",
      [](const PreprocessorSpec& spec, const Image& x_o, const Image& x_m_adv,
         const std::function<bool(const Image&)>& is_adversarial) {
        return recover_general(spec, x_o, x_m_adv, is_adversarial);
      },
      py::arg("spec"), py::arg("x_o"), py::arg("x_m_adv"), py::arg("is_adversarial"));
  m.def(
      "recover_pipeline",
      [](const PreprocessorSpec& pipeline, const Image& x_o, const Image& x_m_adv,
         const std::function<bool(const Image&)>& is_adversarial) {
        return recover_pipeline(pipeline, x_o, x_m_adv, is_adversarial);
      },
      py::arg("pipeline"), py::arg("x_o"), py::arg("x_m_adv"), py::arg("is_adversarial"));

  py::class_<ToyModel>(m, "ToyModel")
      .def_static("linear", &ToyModel::linear, py::arg("seed"), py::arg("input_size"),
                  py::arg("classes"), py::arg("channels") = 1)
      .def_static("mlp", &ToyModel::mlp, py::arg("seed"), py::arg("input_size"), py::arg("classes"),
                  py::arg("channels") = 1)
      .def("label", &ToyModel::label);

  py::class_<QueryCounter>(m, "QueryCounter")
      .def("total", &QueryCounter::total)
      .def("per_phase", &QueryCounter::per_phase);

  py::class_<HardLabelOracle>(m, "HardLabelOracle")
      .def("predict", &HardLabelOracle::predict)
      .def("predict_batch", &HardLabelOracle::predict_batch)
      .def("set_phase", &HardLabelOracle::set_phase)
      .def_property_readonly("counter", &HardLabelOracle::counter, py::return_value_policy::reference);

  py::class_<LocalOracle, HardLabelOracle>(m, "LocalOracle")
      .def(py::init<PreprocessorSpec, ToyModel>(), py::arg("pipeline"), py::arg("model"));
  py::class_<HttpOracle, HardLabelOracle>(m, "HttpOracle")
      .def(py::init<std::string, int>(), py::arg("endpoint"), py::arg("max_in_flight") = 8);

  py::class_<AttackConfig>(m, "AttackConfig")
      .def(py::init<>())
      .def_readwrite("budget", &AttackConfig::budget)
      .def_readwrite("batch", &AttackConfig::batch)
      .def_readwrite("alpha", &AttackConfig::alpha)
      .def_readwrite("gamma", &AttackConfig::gamma)
      .def_readwrite("targeted", &AttackConfig::targeted)
      .def_readwrite("target_label", &AttackConfig::target_label)
      .def_readwrite("init", &AttackConfig::init)
      .def_readwrite("seed", &AttackConfig::seed);

  py::class_<TracePoint>(m, "TracePoint")
      .def_readonly("queries", &TracePoint::queries)
      .def_readonly("distance", &TracePoint::distance);

  py::class_<AttackResult>(m, "AttackResult")
      .def_readonly("x_adv", &AttackResult::x_adv)
      .def_readonly("distance", &AttackResult::distance)
      .def_readonly("queries_used", &AttackResult::queries_used)
      .def_readonly("success", &AttackResult::success)
      .def_readonly("trace", &AttackResult::trace)
      .def_readonly("recovery_residual", &AttackResult::recovery_residual);

  m.def("base_attack", &base_attack, py::arg("oracle"), py::arg("x"), py::arg("y"), py::arg("config"));
  m.def("bypass_attack", &bypass_attack, py::arg("pipeline"), py::arg("oracle"), py::arg("x_o"),
        py::arg("y"), py::arg("config"));
  m.def("biased_gradient_attack", &biased_gradient_attack, py::arg("spec"), py::arg("oracle"),
        py::arg("x_o"), py::arg("y"), py::arg("config"));

  py::class_<UnstablePair>(m, "UnstablePair")
      .def_readonly("u0", &UnstablePair::u0)
      .def_readonly("u1", &UnstablePair::u1)
      .def_readonly("label0", &UnstablePair::label0)
      .def_readonly("label1", &UnstablePair::label1);
  m.def("gen_unstable_pair", &gen_unstable_pair, py::arg("oracle"), py::arg("x0"), py::arg("x1"),
        py::arg("rng"));

  py::class_<HypothesisSpace> space(m, "HypothesisSpace");
  py::enum_<HypothesisSpace::Strategy>(space, "Strategy")
      .value("EXHAUSTIVE", HypothesisSpace::Strategy::kExhaustive)
      .value("BINARY_SEARCH_CROP_SIZE", HypothesisSpace::Strategy::kBinarySearchCropSize)
      .value("SEQUENTIAL_PIPELINE", HypothesisSpace::Strategy::kSequentialPipeline);
  space.def(py::init<>())
      .def_readwrite("strategy", &HypothesisSpace::strategy)
      .def_readwrite("candidates", &HypothesisSpace::candidates)
      .def_readwrite("crop_lo", &HypothesisSpace::crop_lo)
      .def_readwrite("crop_hi", &HypothesisSpace::crop_hi)
      .def_readwrite("stage_spaces", &HypothesisSpace::stage_spaces);

  py::class_<ExtractionReport>(m, "ExtractionReport")
      .def_readonly("identified", &ExtractionReport::identified)
      .def_readonly("queries_pair", &ExtractionReport::queries_pair)
      .def_readonly("queries_p", &ExtractionReport::queries_p)
      .def_readonly("queries_test", &ExtractionReport::queries_test)
      .def_readonly("trials_per_hypothesis", &ExtractionReport::trials_per_hypothesis)
      .def_readonly("p_estimate", &ExtractionReport::p_estimate)
      .def_readonly("complete", &ExtractionReport::complete)
      .def("total_queries", &ExtractionReport::total_queries);

  py::class_<ExtractionRunOptions>(m, "ExtractionRunOptions")
      .def(py::init<>())
      .def_static("for_side", &ExtractionRunOptions::for_side, py::arg("side"), py::arg("channels") = 1)
      .def_readwrite("input_side", &ExtractionRunOptions::input_side)
      .def_readwrite("channels", &ExtractionRunOptions::channels);

  m.def("run_extraction", &run_extraction, py::arg("oracle"), py::arg("space"), py::arg("rng"),
        py::arg("options") = ExtractionRunOptions{});
  m.def("viable_toy_model", &viable_toy_model, py::arg("variant"), py::arg("base_seed"),
        py::arg("input_size"), py::arg("classes"), py::arg("canvas"), py::arg("channels"),
        py::arg("pipeline"));

  m.def("png_encode", [](const Image& x) { return py::bytes(png_encode(x)); });
  m.def("png_decode", [](const py::bytes& b) { return png_decode(std::string(b)); });

  py::class_<ServiceConfig>(m, "ServiceConfig")
      .def(py::init([](const std::string& text) {
        return service_config_from_json(json::parse(text), false);
      }))
      .def_readwrite("host", &ServiceConfig::host)
      .def_readwrite("port", &ServiceConfig::port);

  py::class_<VictimService>(m, "VictimService")
      .def(py::init<ServiceConfig>(), py::arg("config"))
      .def("start", &VictimService::start)
      .def("stop", &VictimService::stop)
      .def_property_readonly("port", &VictimService::port)
      .def_property_readonly("endpoint", &VictimService::endpoint);
}
