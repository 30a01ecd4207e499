#include "winodds/cli_io.hpp"
#include "winodds/data_model.hpp"
#include "winodds/estimators.hpp"
#include "winodds/pim_fit.hpp"
#include "winodds/sim_engine.hpp"
#include "winodds/win_rule.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

namespace py = pybind11;
using namespace winodds;

namespace {

Dataset from_columns(const std::vector<std::string>& ids, const std::vector<int>& arm, const std::vector<double>& u1,
                     const std::vector<int>& d1, const std::vector<double>& u2, const std::vector<int>& d2,
                     const std::vector<std::vector<double>>& covariates, std::vector<std::string> names) {
    const std::size_t n = ids.size();
    if (arm.size() != n || u1.size() != n || d1.size() != n || u2.size() != n || d2.size() != n)
        throw DataError("column lengths differ");
    if (!covariates.empty() && covariates.size() != n) throw DataError("covariate rows do not match the subjects");
    std::vector<SubjectRecord> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        rows[i].id = ids[i];
        rows[i].arm = arm[i];
        rows[i].u1 = u1[i];
        rows[i].d1 = d1[i];
        rows[i].u2 = u2[i];
        rows[i].d2 = d2[i];
        if (!covariates.empty()) rows[i].covariates = covariates[i];
    }
    return validate_dataset(std::move(rows), std::move(names));
}

py::dict column_dict(const Dataset& ds) {
    std::vector<std::string> ids;
    std::vector<int> arm, d1, d2;
    std::vector<double> u1, u2;
    std::vector<std::vector<double>> x;
    for (const auto& r : ds.records()) {
        ids.push_back(r.id);
        arm.push_back(r.arm);
        u1.push_back(r.u1);
        d1.push_back(r.d1);
        u2.push_back(r.u2);
        d2.push_back(r.d2);
        x.push_back(r.covariates);
    }
    py::dict d;
    d["id"] = ids;
    d["arm"] = arm;
    d["u1"] = u1;
    d["d1"] = d1;
    d["u2"] = u2;
    d["d2"] = d2;
    d["covariates"] = x;
    d["covariate_names"] = ds.covariate_names();
    return d;
}

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Sided parse_sided(const std::string& s) {
    if (s == "one") return Sided::One;
    if (s == "two") return Sided::Two;
    throw std::invalid_argument("sided must be 'one' or 'two'");
}

FlipMode parse_flip(const std::string& s) {
    if (s == "redraw") return FlipMode::Redraw;
    if (s == "permute") return FlipMode::Permute;
    throw std::invalid_argument("flip_mode must be 'redraw' or 'permute'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Covariate-adjusted win odds for hierarchical composite endpoints";

    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<FitError>(m, "FitError", PyExc_RuntimeError);
    py::register_exception<InferenceError>(m, "InferenceError", PyExc_ArithmeticError);
    py::register_exception<StudyAbort>(m, "StudyAbort", PyExc_RuntimeError);

    py::class_<Dataset>(m, "Dataset")
        .def(py::init(&from_columns), py::arg("id"), py::arg("arm"), py::arg("u1"), py::arg("d1"), py::arg("u2"),
             py::arg("d2"), py::arg("covariates") = std::vector<std::vector<double>>{},
             py::arg("covariate_names") = std::vector<std::string>{})
        .def_static(
            "from_csv",
            [](const std::string& path, std::vector<std::string> covariates) {
                CsvSchema schema;
                schema.covariates = std::move(covariates);
                return load_csv(path, schema);
            },
            py::arg("path"), py::arg("covariates") = std::vector<std::string>{})
        .def_static(
            "from_csv_text",
            [](const std::string& text) {
                std::istringstream in(text);
                return parse_csv(in);
            },
            py::arg("text"))
        .def("to_csv", &dataset_csv)
        .def("columns", &column_dict)
        .def("__len__", &Dataset::size)
        .def_property_readonly("n0", &Dataset::n0)
        .def_property_readonly("n1", &Dataset::n1)
        .def_property_readonly("p", &Dataset::p)
        .def_property_readonly("covariate_names", &Dataset::covariate_names)
        .def("covariate_prefix", &Dataset::covariate_prefix, py::arg("k"))
        .def(
            "select",
            [](const Dataset& ds, const std::vector<std::string>& names) {
                return ds.select_covariates(std::span<const std::string>(names));
            },
            py::arg("names"))
        .def("with_flipped_arms", &Dataset::with_flipped_arms)
        .def("__eq__", [](const Dataset& a, const Dataset& b) { return a == b; });

    m.def(
        "tally",
        [](const Dataset& ds, unsigned workers) {
            const WinTally t = pairwise_tally(ds, workers);
            py::dict d;
            d["wins"] = t.wins;
            d["losses"] = t.losses;
            d["ties"] = t.ties;
            d["n0"] = t.n0;
            d["n1"] = t.n1;
            d["treated_winfrac"] = t.treated_winfrac;
            d["control_winfrac"] = t.control_winfrac;
            return d;
        },
        py::arg("dataset"), py::arg("workers") = 0u, "Cross-arm wins, losses and ties.");

    m.def(
        "fit_pim",
        [](const Dataset& ds, unsigned workers) {
            PimOptions opt;
            opt.workers = workers;
            const PimFit f = fit_pim(ds, opt);
            py::dict d;
            d["tau_a"] = f.tau_a;
            d["tau_x"] = f.tau_x;
            d["iterations"] = f.iterations;
            d["score_norm"] = f.score_norm;
            d["converged"] = f.converged;
            return d;
        },
        py::arg("dataset"), py::arg("workers") = 0u, "Logit probabilistic index model on arm and covariates.");

    m.def(
        "analyze",
        [](const Dataset& ds, std::optional<std::vector<std::string>> adjust, double alpha, const std::string& sided,
           std::size_t bootstrap, std::uint64_t seed, unsigned workers) {
            AnalysisOptions opt;
            opt.alpha = alpha;
            opt.sided = parse_sided(sided);
            opt.bootstrap = bootstrap;
            opt.seed = seed;
            opt.workers = workers;
            const std::vector<std::string> names = adjust ? *adjust : ds.covariate_names();
            AnalysisReport rep;
            {
                py::gil_scoped_release release;
                rep = analyze(ds, names, opt);
            }
            return to_python(report_to_json(rep));
        },
        py::arg("dataset"), py::arg("adjust") = py::none(), py::arg("alpha") = 0.05, py::arg("sided") = "two",
        py::arg("bootstrap") = 0, py::arg("seed") = 1, py::arg("workers") = 0u,
        "Unadjusted and covariate-adjusted win odds. `adjust=None` adjusts for every covariate.");

    m.def(
        "simulate_trial",
        [](std::size_t n, const std::string& scenario, double effect, bool null_flip, std::uint64_t seed,
           const std::string& flip_mode, double event_fraction, double scale, std::uint64_t replicate) {
            TrialOptions opt;
            opt.flip_mode = parse_flip(flip_mode);
            opt.event_fraction = event_fraction;
            opt.scale = scale;
            return simulate_trial(n, scenario_weights(parse_scenario(scenario)), effect, null_flip, seed, opt,
                                  replicate);
        },
        py::arg("n"), py::arg("scenario") = "A", py::arg("effect") = 0.3, py::arg("null_flip") = false,
        py::arg("seed") = 1, py::arg("flip_mode") = "redraw", py::arg("event_fraction") = 0.35,
        py::arg("scale") = 7500.0, py::arg("replicate") = 0);

    m.def(
        "run_study",
        [](std::size_t n, std::size_t reps, const std::string& scenario, double alpha, double effect,
           std::vector<std::size_t> adjust_prefixes, bool null_flip, const std::string& flip_mode, std::uint64_t seed,
           unsigned workers) {
            StudyConfig cfg;
            cfg.n = n;
            cfg.reps = reps;
            cfg.scenario = parse_scenario(scenario);
            cfg.alpha = alpha;
            cfg.treatment_effect = effect;
            cfg.adjustment_sets = std::move(adjust_prefixes);
            cfg.null_flip = null_flip;
            cfg.flip_mode = parse_flip(flip_mode);
            cfg.seed = seed;
            std::string csv;
            {
                py::gil_scoped_release release;
                csv = study_csv(run_study(cfg, workers));
            }
            return csv;
        },
        py::arg("n"), py::arg("reps"), py::arg("scenario") = "A", py::arg("alpha") = 0.025, py::arg("effect") = 0.3,
        py::arg("adjust_prefixes") = std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10},
        py::arg("null_flip") = false, py::arg("flip_mode") = "redraw", py::arg("seed") = 1, py::arg("workers") = 0u,
        "Monte-Carlo rejection rates; returns the study CSV text.");

    m.def("scenario_weights", [](const std::string& s) {
        const auto g = scenario_weights(parse_scenario(s)).gamma;
        return std::vector<double>(g.begin(), g.end());
    });
}
