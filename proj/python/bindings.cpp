#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fac/calibration.hpp"
#include "fac/diagnostics.hpp"
#include "fac/experiment.hpp"
#include "fac/report_io.hpp"
#include "fac/spectral.hpp"

namespace py = pybind11;
using namespace fac;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using C128 = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;

Tensor3 to_tensor(const F64& a) {
    if (a.ndim() != 3) throw py::value_error("expected a 3-d array [windows, steps, channels]");
    Tensor3 t(a.shape(0), a.shape(1), a.shape(2));
    std::copy(a.data(), a.data() + a.size(), t.data.begin());
    return t;
}

F64 to_array(const Tensor3& t) {
    F64 out({t.count, t.steps, t.channels});
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

py::object parse_json(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

ExperimentConfig config_from(const py::object& cfg) {
    if (py::isinstance<py::str>(cfg)) return ExperimentConfig::from_json(cfg.cast<std::string>());
    const auto text = py::module_::import("json").attr("dumps")(cfg).cast<std::string>();
    return ExperimentConfig::from_json(text);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Frequency-domain test-time calibration for rolling forecasts";

    // later registrations are tried first
    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def(
        "rfft",
        [](const F64& x) {
            if (x.ndim() != 1) throw py::value_error("rfft expects a 1-d array");
            const auto spec = rfft(std::span<const double>(x.data(), x.size()));
            C128 out(spec.size());
            std::copy(spec.begin(), spec.end(), out.mutable_data());
            return out;
        },
        py::arg("x"), "Unnormalized one-sided DFT.");
    m.def(
        "irfft",
        [](const C128& spec, std::size_t n, bool strict) {
            if (spec.ndim() != 1) throw py::value_error("irfft expects a 1-d array");
            const auto x = irfft(std::span<const cplx>(spec.data(), spec.size()), n,
                                 strict ? ImagPolicy::strict : ImagPolicy::discard);
            F64 out(x.size());
            std::copy(x.begin(), x.end(), out.mutable_data());
            return out;
        },
        py::arg("spec"), py::arg("n"), py::arg("strict") = true);

    m.def(
        "param_count",
        [](const std::string& kind, std::size_t channels, std::size_t lookback, std::size_t horizon,
           bool input_calibration) {
            return param_count(adapter_kind_from_string(kind), channels, lookback, horizon, input_calibration);
        },
        py::arg("kind"), py::arg("channels"), py::arg("lookback") = 96, py::arg("horizon") = 96,
        py::arg("input_calibration") = true);

    m.def(
        "estimate_period",
        [](const F64& values, std::size_t window) {
            if (values.ndim() != 2) throw py::value_error("expected a 2-d array [time, channels]");
            SeriesMatrix s(values.shape(0), values.shape(1));
            std::copy(values.data(), values.data() + values.size(), s.data.begin());
            return window == 0 ? estimate_dominant_period(s) : estimate_window_period(s, 0, s.rows, window);
        },
        py::arg("values"), py::arg("window") = 0);

    m.def(
        "correction_spectrum",
        [](const F64& pre, const F64& post) {
            const auto s = correction_spectrum(to_tensor(pre), to_tensor(post));
            F64 out(s.magnitudes.size());
            std::copy(s.magnitudes.begin(), s.magnitudes.end(), out.mutable_data());
            return out;
        },
        py::arg("pre"), py::arg("post"));

    m.def(
        "config_hash", [](const py::object& cfg) { return config_from(cfg).hash(); }, py::arg("config"));
    m.def(
        "default_config", [] { return parse_json(ExperimentConfig{}.to_json()); });

    m.def(
        "run",
        [](const py::object& cfg, bool write_outputs) {
            RunResult r;
            {
                const auto config = config_from(cfg);
                py::gil_scoped_release release;
                r = cmd_run(config, write_outputs);
            }
            py::dict out;
            out["report"] = parse_json(report_json(r.report, r.config_hash));
            out["config_hash"] = r.config_hash;
            out["targets"] = to_array(r.trace.stacked(&BatchRecord::targets));
            out["source"] = to_array(r.trace.stacked(&BatchRecord::source));
            out["final"] = to_array(r.trace.stacked(&BatchRecord::final));
            std::vector<std::size_t> sizes;
            for (const auto& b : r.trace.batches) sizes.push_back(b.size);
            out["batch_sizes"] = sizes;
            return out;
        },
        py::arg("config"), py::arg("write_outputs") = false,
        "Runs the configured protocol over the test split. `config` is a dict or JSON text.");

    m.def(
        "audit",
        [](const py::object& cfg, std::size_t windows) {
            const auto r = cmd_audit(config_from(cfg), windows);
            py::dict out;
            out["streaming"] = parse_json(leakage_json(r.streaming, r.config_hash));
            out["matured"] = parse_json(leakage_json(r.matured, r.config_hash));
            return out;
        },
        py::arg("config"), py::arg("windows") = 0);
}
