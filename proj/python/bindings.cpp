// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lliam/checkpoint.hpp"
#include "lliam/data.hpp"
#include "lliam/evaluate.hpp"
#include "lliam/lora.hpp"
#include "lliam/metrics.hpp"
#include "lliam/model.hpp"
#include "lliam/prompt_codec.hpp"
#include "lliam/tokenizer.hpp"

namespace py = pybind11;
using namespace lliam;

namespace {

py::tuple forecast(const Model& model, const std::vector<double>& lags, std::size_t horizon, bool greedy,
                   double temperature, std::uint64_t seed, bool mitigation) {
    WindowPair w;
    w.x = lags;
    w.y.assign(horizon, 0.0);
    w.series_id = "python";
    PredictConfig pc;
    pc.generation.greedy = greedy;
    pc.generation.temperature = temperature;
    pc.generation.seed = seed;
    pc.horizon_mitigation = mitigation;
    const auto r = predict_batch(model, Tokenizer(), {w}, pc).front();
    return py::make_tuple(std::string(to_string(r.status)), r.values, r.raw_text);
}

} // namespace

PYBIND11_MODULE(_lliam, m) {
    m.doc() = "Decoder-only forecaster with LoRA adapters: codec, metrics, data helpers and inference.";

    py::class_<Tokenizer>(m, "Tokenizer")
        .def(py::init<>())
        .def_property_readonly("vocab_size", &Tokenizer::vocab_size)
        .def("encode", [](const Tokenizer& t, const std::string& s) { return t.encode(s); })
        .def("decode", [](const Tokenizer& t, const TokenSequence& ids) { return t.decode(ids); });

    m.def("format_number", [](double v) { return format_number(v); });
    m.def("render_prompt", [](const std::vector<double>& lags, std::size_t h) { return render_prompt(lags, h); },
          py::arg("lags"), py::arg("horizon"));
    m.def("render_answer", [](const std::vector<double>& y) { return render_answer(y); });
    m.def(
        "parse_output",
        [](const std::string& raw, std::size_t h) {
            const auto r = parse_output(raw, h);
            return py::make_tuple(std::string(to_string(r.status)), r.values);
        },
        py::arg("raw"), py::arg("horizon"), "Returns (status, values).");

    m.def("rmse", [](const std::vector<double>& y, const std::vector<double>& yhat) { return rmse(y, yhat); });
    m.def("smape", [](const std::vector<double>& y, const std::vector<double>& yhat) { return smape(y, yhat); });
    m.def("missing_rate", &missing_rate, py::arg("n_test"), py::arg("n_decoded"));

    m.def(
        "mitigate_anomalies",
        [](const std::vector<double>& values, double k) {
            TimeSeries s;
            s.id = "python";
            s.values = values;
            return mitigate_anomalies(s, k).values;
        },
        py::arg("values"), py::arg("k") = 3.0);
    m.def(
        "make_windows",
        [](const std::vector<double>& values, std::size_t n, std::size_t h) {
            TimeSeries s;
            s.id = "python";
            s.values = values;
            std::vector<py::tuple> out;
            for (const auto& w : make_windows(s, WindowSpec{n, h})) out.push_back(py::make_tuple(w.start, w.x, w.y));
            return out;
        },
        py::arg("values"), py::arg("n"), py::arg("h"), "Returns [(start, x, y), ...].");
    m.def("dataset_names", [] {
        std::vector<std::string> names;
        for (const auto& e : dataset_registry()) names.push_back(e.name);
        return names;
    });

    m.def("rope_angles", py::overload_cast<std::size_t, Real>(&rope_angles), py::arg("head_dim"),
          py::arg("base") = 10000.0);
    m.def(
        "lora_scale",
        [](std::size_t rank, double alpha) {
            LoraConfig c;
            c.rank = rank;
            c.alpha = alpha;
            return c.scale();
        },
        py::arg("rank"), py::arg("alpha"));

    py::class_<Model>(m, "Model")
        .def_static("load", [](const std::filesystem::path& dir) { return load_model(dir); })
        .def_static(
            "init",
            [](std::size_t layers, std::size_t heads, std::size_t d_model, std::size_t d_ff, std::size_t max_context,
               std::uint64_t seed) {
                ModelConfig c;
                c.n_layers = layers;
                c.n_heads = heads;
                c.d_model = d_model;
                c.d_ff = d_ff;
                c.max_context = max_context;
                c.vocab_size = Tokenizer().vocab_size();
                return Model::init(c, seed);
            },
            py::arg("layers") = 4, py::arg("heads") = 4, py::arg("d_model") = 128, py::arg("d_ff") = 384,
            py::arg("max_context") = 384, py::arg("seed") = 0)
        .def("save", [](const Model& model, const std::filesystem::path& dir) { save_model(model, dir); })
        .def_property_readonly("parameter_count", &Model::parameter_count)
        .def_property_readonly("digest", [](const Model& model) { return base_digest(model); })
        .def("logits",
             [](const Model& model, const TokenSequence& ids) {
                 const Tensor t = model.forward(ids);
                 std::vector<std::vector<double>> rows(t.rows());
                 for (std::size_t r = 0; r < t.rows(); ++r)
                     rows[r].assign(t.data().begin() + static_cast<long>(r * t.cols()),
                                    t.data().begin() + static_cast<long>((r + 1) * t.cols()));
                 return rows;
             })
        .def("forecast", &forecast, py::arg("lags"), py::arg("horizon"), py::arg("greedy") = true,
             py::arg("temperature") = 1.0, py::arg("seed") = 0, py::arg("mitigation") = true,
             "Returns (status, values, raw_text).");
}
