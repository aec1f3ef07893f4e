#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "simvit/analysis.hpp"
#include "simvit/checks.hpp"
#include "simvit/io.hpp"

namespace py = pybind11;
using namespace simvit;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Array to_numpy(const Tensor<float>& t) {
    Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Tensor<float> from_numpy(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor<float>(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

py::dict stage_dict(const StageConfig& s) {
    py::dict d;
    d["patch"] = s.patch;
    d["channels"] = s.channels;
    d["heads"] = s.heads;
    d["expansion"] = s.expansion;
    d["depth"] = s.depth;
    d["attention"] = attention_kind_name(s.attn);
    d["window"] = py::make_tuple(s.window.k, s.window.p, s.window.s);
    return d;
}

ModelConfig config_from_text(const std::string& text) {
    std::istringstream in(text);
    return parse_run_config(in).model;
}

}  // namespace

PYBIND11_MODULE(_simvit, m) {
    m.doc() = "Sliding-window vision transformer core";

    auto validation = py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<GeometryError>(m, "GeometryError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", validation.ptr());
    py::register_exception<WeightFileError>(m, "WeightFileError", PyExc_OSError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

    m.def("preset_names", &preset_names);

    py::class_<ModelConfig>(m, "Config")
        .def_static("preset", &preset_config, py::arg("variant"), py::arg("num_classes") = 1000)
        .def_static("parse", &config_from_text, py::arg("text"), "Parse `key = value` run-config text")
        .def_static("load", [](const std::filesystem::path& p) { return load_run_config(p).model; })
        .def("with_setting",
             [](const ModelConfig& c, const std::string& key, const std::string& value) {
                 RunConfig run{c, 0};
                 apply_run_setting(run, key, value);
                 run.model.validate();
                 return run.model;
             })
        .def_readonly("variant", &ModelConfig::variant)
        .def_readonly("num_classes", &ModelConfig::num_classes)
        .def_readonly("pos_embed", &ModelConfig::pos_embed)
        .def_readonly("image_size", &ModelConfig::image_size)
        .def_property_readonly("stages",
                               [](const ModelConfig& c) {
                                   py::list out;
                                   for (const auto& s : c.stages) out.append(stage_dict(s));
                                   return out;
                               })
        .def_property_readonly("reduction", &ModelConfig::reduction)
        .def("validate", &ModelConfig::validate)
        .def(py::self == py::self)
        .def("__repr__", [](const ModelConfig& c) {
            return "<Config " + c.variant + " stages=" + std::to_string(c.stages.size()) +
                   " classes=" + std::to_string(c.num_classes) + ">";
        });

    m.def("count_params", [](const ModelConfig& c) { return count_params(c).total_params(); });
    m.def("count_macs", [](const ModelConfig& c, std::size_t h, std::size_t w) { return count_macs(c, h, w).total_macs(); },
          py::arg("config"), py::arg("height") = 224, py::arg("width") = 224);
    m.def("describe", &describe, py::arg("config"), py::arg("height") = 224, py::arg("width") = 224);
    m.def(
        "window_count",
        [](std::size_t h, std::size_t w, std::size_t k, std::size_t p, std::size_t s) {
            const GridSize g = window_count(h, w, WindowSpec{k, p, s});
            return py::make_tuple(g.h, g.w);
        },
        py::arg("height"), py::arg("width"), py::arg("k") = 3, py::arg("p") = 1, py::arg("s") = 1);

    py::class_<Model<float>>(m, "Model")
        .def(py::init([](const ModelConfig& c, std::uint64_t seed) { return build_model<float>(c, seed); }),
             py::arg("config"), py::arg("seed") = 0)
        .def_static("load", &load_weights<float>, py::arg("path"), py::arg("config"))
        .def("save", [](const Model<float>& model, const std::filesystem::path& p) { save_weights(model, p); })
        .def_property_readonly("config", &Model<float>::config)
        .def("parameter_count", &Model<float>::parameter_count)
        .def("parameter_names",
             [](const Model<float>& model) {
                 std::vector<std::string> names;
                 for (const auto* p : model.parameters()) names.push_back(p->name);
                 return names;
             })
        .def("parameter",
             [](const Model<float>& model, const std::string& name) {
                 for (const auto* p : model.parameters())
                     if (p->name == name) return to_numpy(p->value);
                 throw py::key_error(name);
             })
        .def("forward",
             [](const Model<float>& model, const Array& image) {
                 const Tensor<float> img = from_numpy(image);
                 Tensor<float> logits;
                 {
                     py::gil_scoped_release release;
                     logits = forward_classify(model, img);
                 }
                 return to_numpy(logits);
             },
             py::arg("image"), "Logits for one H x W x C image")
        .def(
            "features",
            [](const Model<float>& model, const Array& image) {
                Tensor<float> img = from_numpy(image);
                FeaturePyramid<float> f;
                {
                    py::gil_scoped_release release;
                    f = forward_features(model, img);
                }
                py::list out;
                for (const auto& map : f.maps) out.append(to_numpy(map));
                return out;
            },
            py::arg("image"), "Per-stage token maps F1..F4");

    py::class_<ToyDataset>(m, "ToyDataset")
        .def(py::init(&gen_toy_dataset), py::arg("seed") = 0, py::arg("n") = 256, py::arg("classes") = 10,
             py::arg("side") = 32)
        .def_property_readonly("images", [](const ToyDataset& d) { return to_numpy(d.images); })
        .def_readonly("labels", &ToyDataset::labels)
        .def_readonly("classes", &ToyDataset::classes)
        .def("__len__", &ToyDataset::size)
        .def("checksum", &ToyDataset::checksum);

    py::class_<EpochStats>(m, "EpochStats")
        .def_readonly("epoch", &EpochStats::epoch)
        .def_readonly("loss", &EpochStats::loss)
        .def_readonly("accuracy", &EpochStats::accuracy)
        .def("__repr__", &format_epoch);

    m.def(
        "train_toy",
        [](Model<float>& model, const ToyDataset& data, std::size_t epochs, std::uint64_t seed, double lr,
           std::size_t workers, std::optional<double> target_accuracy) {
            TrainOptions opts;
            opts.epochs = epochs;
            opts.seed = seed;
            opts.lr = lr;
            opts.workers = workers;
            opts.target_accuracy = target_accuracy;
            py::gil_scoped_release release;
            return train_toy(model, data, opts);
        },
        py::arg("model"), py::arg("data"), py::arg("epochs") = 50, py::arg("seed") = 0, py::arg("lr") = 1e-3,
        py::arg("workers") = 1, py::arg("target_accuracy") = py::none());
    m.def("evaluate_toy", &evaluate_toy<float>, py::arg("model"), py::arg("data"),
          py::call_guard<py::gil_scoped_release>());
    m.def("mean_toy_loss", &mean_toy_loss<float>, py::arg("model"), py::arg("data"),
          py::call_guard<py::gil_scoped_release>());

    m.def(
        "verify",
        [](std::uint64_t seed) {
            std::vector<std::tuple<std::string, bool, std::string>> out;
            for (const auto& r : verify_invariants(seed)) out.emplace_back(r.name, r.pass, r.detail);
            return out;
        },
        py::arg("seed") = 0);
    m.def(
        "gradcheck",
        [](const std::string& scope_name, std::uint64_t seed) {
            const auto scope = parse_audit_scope(scope_name);
            if (!scope) throw py::value_error("unknown scope '" + scope_name + "'");
            std::vector<std::tuple<std::string, bool, double>> out;
            for (const auto& r : gradient_audit(*scope, seed))
                out.emplace_back(r.label, r.pass(), r.worst() ? r.worst()->max_rel_error : 0.0);
            return out;
        },
        py::arg("scope"), py::arg("seed") = 0);
}
