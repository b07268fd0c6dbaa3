#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rz/pipeline.hpp"

namespace py = pybind11;

namespace {

py::dict field_to_dict(const rz::FieldRaster& field) {
    py::dict d;
    d["height"] = field.height();
    d["width"] = field.width();
    d["feature_names"] = field.feature_names();
    py::list mask;
    for (const auto b : field.mask()) {
        mask.append(b != 0);
    }
    d["mask"] = mask;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Nitrogen-response management zoning";

    py::register_exception<rz::ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<rz::PreconditionError>(m, "PreconditionError", PyExc_ValueError);
    py::register_exception<rz::StageError>(m, "StageError", PyExc_RuntimeError);

    m.def(
        "generate_synthetic",
        [](std::uint64_t seed, int height, int width, double noise_sd) {
            rz::SyntheticSpec spec;
            spec.seed = seed;
            spec.height = height;
            spec.width = width;
            spec.noise_sd = noise_sd;
            const auto s = rz::generate_synthetic(spec);
            py::dict out = field_to_dict(s.field);
            out["yield"] = s.yield.values;
            out["truth"] = s.truth;
            return out;
        },
        py::arg("seed") = 1, py::arg("height") = 60, py::arg("width") = 60, py::arg("noise_sd") = 1.0);

    m.def(
        "write_synthetic",
        [](const std::filesystem::path& field_path, const std::filesystem::path& yield_path, std::uint64_t seed,
           int height, int width) {
            rz::SyntheticSpec spec;
            spec.seed = seed;
            spec.height = height;
            spec.width = width;
            const auto s = rz::generate_synthetic(spec);
            rz::save_field(field_path, s.field);
            rz::save_yield(yield_path, s.yield);
        },
        py::arg("field_path"), py::arg("yield_path"), py::arg("seed") = 1, py::arg("height") = 60,
        py::arg("width") = 60);

    m.def("load_field", [](const std::filesystem::path& p) { return field_to_dict(rz::load_field(p)); });

    m.def(
        "fpca",
        [](const Eigen::MatrixXd& curves, double target, int k_max) {
            const auto model = rz::fit_fpca(curves, target, k_max);
            py::dict d;
            d["mean"] = model.mean_curve;
            d["components"] = model.components;
            d["eigenvalues"] = model.eigenvalues;
            d["explained_ratio"] = model.explained_ratio;
            const Eigen::MatrixXd centered = curves.rowwise() - model.mean_curve.transpose();
            d["scores"] = Eigen::MatrixXd(centered * model.components.transpose());
            return d;
        },
        py::arg("curves"), py::arg("variance_target") = rz::kDefaultVarianceTarget,
        py::arg("k_max") = rz::kDefaultComponentCap);

    m.def(
        "fuzzy_cmeans",
        [](const Eigen::MatrixXd& points, int c, double m_fuzz, std::uint64_t seed) {
            rz::ClusterOptions o;
            o.c = c;
            o.m = m_fuzz;
            o.seed = seed;
            const auto model = rz::cluster(points, o);
            py::dict d;
            d["centroids"] = model.centroids;
            d["memberships"] = model.memberships;
            d["assignments"] = model.assignments;
            d["objective_history"] = model.objective_history;
            return d;
        },
        py::arg("points"), py::arg("c"), py::arg("m") = 2.0, py::arg("seed") = 1);

    m.def("adjusted_rand_index", [](const std::vector<int>& a, const std::vector<int>& b) {
        return rz::adjusted_rand_index(a, b);
    });

    m.def("align", [](std::vector<double> curve) {
        return rz::align(rz::ResponseCurve{{}, std::move(curve), false}).values;
    });

    m.def(
        "run",
        [](const std::filesystem::path& config, const std::optional<std::filesystem::path>& output_dir) {
            rz::RunConfig cfg = rz::load_run_config(config);
            if (output_dir) {
                cfg.output_dir = *output_dir;
            }
            rz::RunSummary summary;
            {
                py::gil_scoped_release release;
                summary = rz::run_pipeline(cfg);
            }
            py::dict d;
            d["artifacts"] = summary.artifacts;
            d["reports"] = summary.reports;
            d["manifest"] = summary.manifest;
            return d;
        },
        py::arg("config"), py::arg("output_dir") = py::none());

    m.def("sha256_file", [](const std::filesystem::path& p) { return rz::sha256_file(p); });
}
