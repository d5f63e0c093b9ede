#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "pairloc/graph.hpp"
#include "pairloc/inference.hpp"
#include "pairloc/io.hpp"
#include "pairloc/losses.hpp"
#include "pairloc/metrics.hpp"
#include "pairloc/pipeline.hpp"
#include "pairloc/synth.hpp"

namespace py = pybind11;
using namespace pairloc;

namespace {

// JSON crosses the boundary as text and is parsed by the json module.
py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

Box to_box(const std::array<double, 4>& b) { return {b[0], b[1], b[2], b[3]}; }

}  // namespace

PYBIND11_MODULE(_pairloc, m) {
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  m.def("sigmoid_ce", &sigmoid_ce, py::arg("x"), py::arg("y"));
  m.def("iou", [](const std::array<double, 4>& a, const std::array<double, 4>& b) {
    return iou(to_box(a), to_box(b));
  });

  py::class_<Dataset>(m, "Dataset")
      .def_static("load", &load_dataset, py::arg("path"))
      .def_static("from_jsonl", [](const std::string& text) {
        std::istringstream in(text);
        return read_dataset(in);
      })
      .def("save", [](const Dataset& d, const std::filesystem::path& p) { save_dataset(d, p); })
      .def("to_jsonl", [](const Dataset& d) {
        std::ostringstream out;
        write_dataset(d, out);
        return out.str();
      })
      .def_property_readonly("classes",
                             [](const Dataset& d) {
                               return std::vector<ClassId>(d.classes().begin(), d.classes().end());
                             })
      .def_property_readonly("dim", &Dataset::dim)
      .def("__len__", &Dataset::size);

  py::class_<SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("num_classes", &SynthConfig::num_classes)
      .def_readwrite("bags_per_class", &SynthConfig::bags_per_class)
      .def_readwrite("proposals_per_bag", &SynthConfig::proposals_per_bag)
      .def_readwrite("feature_dim", &SynthConfig::feature_dim)
      .def_readwrite("cluster_separation", &SynthConfig::cluster_separation)
      .def_readwrite("distractor_overlap", &SynthConfig::distractor_overlap)
      .def_readwrite("noise_sigma", &SynthConfig::noise_sigma)
      .def_readwrite("seed", &SynthConfig::seed)
      .def_readwrite("source_classes", &SynthConfig::source_classes)
      .def_readwrite("source_bags_per_class", &SynthConfig::source_bags_per_class);

  m.def(
      "generate",
      [](const SynthConfig& c) {
        SynthData d = generate(c);
        return py::make_tuple(std::move(d.source), std::move(d.target),
                              to_python(selections_to_json(d.truth)));
      },
      py::arg("config"), "Returns (source, target, truth selections).");

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("momentum", &TrainConfig::momentum)
      .def_readwrite("iterations", &TrainConfig::iterations)
      .def_readwrite("fg_per_bag", &TrainConfig::fg_per_bag)
      .def_readwrite("bg_per_bag", &TrainConfig::bg_per_bag)
      .def_readwrite("bags_per_step", &TrainConfig::bags_per_step)
      .def_readwrite("classes_per_step", &TrainConfig::classes_per_step);

  py::class_<BlendWeights>(m, "BlendWeights")
      .def(py::init<>())
      .def_readwrite("lambda1", &BlendWeights::lambda1)
      .def_readwrite("lambda2", &BlendWeights::lambda2);

  py::class_<PipelineConfig>(m, "PipelineConfig")
      .def(py::init<>())
      .def_readwrite("outer_iterations", &PipelineConfig::outer_iterations)
      .def_readwrite("folds", &PipelineConfig::folds)
      .def_property(
          "mode", [](const PipelineConfig& c) { return to_string(c.mode); },
          [](PipelineConfig& c, const std::string& s) { c.mode = parse_mode(s); })
      .def_readwrite("source_train", &PipelineConfig::source_train)
      .def_readwrite("train", &PipelineConfig::train)
      .def_readwrite("fold_iterations", &PipelineConfig::fold_iterations)
      .def_property(
          "alpha", [](const PipelineConfig& c) { return c.weights.alpha; },
          [](PipelineConfig& c, double a) { c.weights.alpha = a; })
      .def_readwrite("blend", &PipelineConfig::blend)
      .def_readwrite("k", &PipelineConfig::k)
      .def_readwrite("epochs", &PipelineConfig::epochs)
      .def_readwrite("early_stop", &PipelineConfig::early_stop)
      .def_readwrite("seed", &PipelineConfig::seed)
      .def("to_dict", [](const PipelineConfig& c) { return to_python(config_to_json(c)); });

  m.def(
      "run",
      [](const PipelineConfig& config, const Dataset& source, const Dataset& target,
         const py::object& truth) {
        Selections t;
        if (!truth.is_none()) t = selections_from_json(from_python(truth));
        PipelineResult r;
        {
          py::gil_scoped_release release;
          r = run(config, source, target, truth.is_none() ? nullptr : &t);
        }
        return py::make_tuple(to_python(manifest(config, source, target, r)),
                              to_python(selections_to_json(r.selections)),
                              to_python(model_to_json(r.model)));
      },
      py::arg("config"), py::arg("source"), py::arg("target"), py::arg("truth") = py::none(),
      "Returns (manifest, selections, model) as JSON-like objects.");

  m.def(
      "corloc",
      [](const py::object& selections, const Dataset& d, double threshold) {
        return corloc(selections_from_json(from_python(selections)), d, threshold).mean;
      },
      py::arg("selections"), py::arg("dataset"), py::arg("threshold") = 0.5);
  m.def("selection_accuracy", [](const py::object& selections, const py::object& truth) {
    return selection_accuracy(selections_from_json(from_python(selections)),
                              selections_from_json(from_python(truth)));
  });

  // Small problems given as tables: unary[i][x] and one row-major table per
  // pair (i < j) in lexicographic order.
  using Tables = std::vector<std::vector<double>>;
  m.def("brute_force", [](Tables unary, Tables edges) {
    const BruteForceResult r = brute_force(problem_from_tables(std::move(unary), std::move(edges)));
    return py::make_tuple(r.labeling, r.energy);
  });
  m.def("trws", [](Tables unary, Tables edges) {
    const TrwsResult r = trws_solve(problem_from_tables(std::move(unary), std::move(edges)), {});
    return py::make_tuple(r.labeling, r.energy, r.lower_bound);
  });
  m.def(
      "icm",
      [](Tables unary, Tables edges, Labeling start, int epochs) {
        const IcmResult r = icm_run(problem_from_tables(std::move(unary), std::move(edges)),
                                    std::move(start), {epochs, NodeOrder::fixed, 0});
        return py::make_tuple(r.labeling, r.energy_trace);
      },
      py::arg("unary"), py::arg("edges"), py::arg("start"), py::arg("epochs") = 2);
}
