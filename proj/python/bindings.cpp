#include <sstream>

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cli.hpp"
#include "leviathan/approx.hpp"
#include "leviathan/config.hpp"
#include "leviathan/coordinates.hpp"
#include "leviathan/errors.hpp"
#include "leviathan/optim.hpp"
#include "leviathan/scaling.hpp"
#include "leviathan/splines.hpp"

namespace py = pybind11;
using namespace leviathan;

namespace {

// Model config from keyword-style dict through the JSON schema, so Python
// callers get the same unknown-key checks as config files.
ModelConfig model_from(const py::dict& d)
{
    const Json j = Json::parse(py::str(py::module_::import("json").attr("dumps")(d)).cast<std::string>());
    return model_config_from_json(j);
}

py::dict count_dict(const ParamCount& c)
{
    py::dict out;
    for (const auto& [name, n] : c.parts)
        out[py::str(name)] = n;
    out["total"] = c.total();
    return out;
}

}  // namespace

PYBIND11_MODULE(_leviathan, m)
{
    m.doc() = "Leviathan embedding-generator toolkit";

    // Later registrations are tried first, so subclasses map before Error.
    const auto& base = py::register_exception<Error>(m, "LeviathanError");
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<NumericDomainError>(m, "NumericDomainError", base.ptr());
    py::register_exception<AnalysisError>(m, "AnalysisError", base.ptr());

    m.def("base_for_vocab", &base_for_vocab, py::arg("vocab"), py::arg("k"));
    m.def("indexing_rows", &indexing_rows, py::arg("vocab"), py::arg("k"));
    m.def("decompose", [](std::uint64_t id, std::uint32_t k, std::uint64_t base) {
        return CoordinateMap(k, base).decompose(id);
    }, py::arg("id"), py::arg("k"), py::arg("base"));
    m.def("recompose", [](const std::vector<std::uint64_t>& digits, std::uint64_t base) {
        return CoordinateMap(static_cast<std::uint32_t>(digits.size()), base).recompose(digits);
    }, py::arg("digits"), py::arg("base"));

    m.def("basis_eval", [](double x, std::size_t segments, std::size_t degree) {
        return basis_eval(x, build_grid(segments, degree));
    }, py::arg("x"), py::arg("segments"), py::arg("degree") = 2);
    m.def("basis_grad", [](double x, std::size_t segments, std::size_t degree) {
        return basis_grad(x, build_grid(segments, degree));
    }, py::arg("x"), py::arg("segments"), py::arg("degree") = 2);

    m.def("preset_names", [] {
        std::vector<std::string> names;
        for (const auto& p : presets())
            names.push_back(p.name);
        return names;
    });
    m.def("count_params", [](const std::string& preset) {
        py::dict d = count_dict(model_param_count(find_preset(preset).model));
        d["reported"] = find_preset(preset).reported_params;
        return d;
    }, py::arg("preset"));
    m.def("count_model_params", [](const py::dict& model) { return count_dict(model_param_count(model_from(model))); },
          py::arg("model"));

    py::class_<PowerLawFit>(m, "PowerLawFit")
        .def(py::init([](double A, double alpha, double b) {
            PowerLawFit f;
            f.A = A;
            f.alpha = alpha;
            f.b_fixed = b;
            return f;
        }), py::arg("A"), py::arg("alpha"), py::arg("b") = irreducible_loss)
        .def_readonly("A", &PowerLawFit::A)
        .def_readonly("alpha", &PowerLawFit::alpha)
        .def_readonly("b", &PowerLawFit::b_fixed)
        .def_readonly("residual", &PowerLawFit::residual)
        .def("__call__", [](const PowerLawFit& f, double x) { return eval_law(f, x); })
        .def("__repr__", [](const PowerLawFit& f) {
            std::ostringstream s;
            s << "PowerLawFit(A=" << f.A << ", alpha=" << f.alpha << ", b=" << f.b_fixed << ")";
            return s.str();
        });
    m.def("fit_power_law", [](const std::vector<double>& x, const std::vector<double>& loss, double b) {
        if (x.size() != loss.size())
            throw ConfigError("x and loss differ in length");
        std::vector<ScalingPoint> pts;
        for (std::size_t i = 0; i < x.size(); ++i)
            pts.push_back({x[i], loss[i]});
        return fit_power_law(pts, b);
    }, py::arg("x"), py::arg("loss"), py::arg("b") = irreducible_loss);
    m.def("eval_law", &eval_law, py::arg("fit"), py::arg("x"));
    m.def("effective_size", &effective_size, py::arg("loss"), py::arg("fit"));
    m.def("perplexity_reduction", &perplexity_reduction, py::arg("dense_loss"), py::arg("leviathan_loss"));
    m.def("published_law", [](const std::string& regime, const std::string& family, const std::string& axis) {
        return published_law(regime, family, scaling_axis_from_string(axis));
    }, py::arg("regime"), py::arg("family"), py::arg("axis") = "params");

    m.def("lr_at", [](std::size_t step, double peak, double min, std::size_t warmup, std::size_t total) {
        TrainConfig c;
        c.peak_lr = peak;
        c.min_lr = min;
        c.warmup_steps = warmup;
        c.total_steps = total;
        return lr_at(step, c);
    }, py::arg("step"), py::arg("peak_lr"), py::arg("min_lr"), py::arg("warmup_steps"), py::arg("total_steps"));

    m.def("fit_surface", [](const std::string& fixture, std::size_t modes, std::size_t segments, std::size_t steps,
                            std::uint64_t seed) {
        ApproxConfig c;
        c.modes = modes;
        c.segments = segments;
        c.steps = steps;
        c.seed = seed;
        ApproxResult r;
        {
            py::gil_scoped_release release;
            r = fit_surface(surface_fixture(fixture), c);
        }
        return py::module_::import("json").attr("loads")(r.to_json().dump());
    }, py::arg("fixture"), py::arg("modes") = 4, py::arg("segments") = 16, py::arg("steps") = 5000,
          py::arg("seed") = 0);

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
            py::gil_scoped_release release;
            code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("args"), "Runs one command line; returns (exit code, stdout, stderr).");
}
