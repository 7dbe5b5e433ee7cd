#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dopcc/baselines.hpp"
#include "dopcc/cli.hpp"
#include "dopcc/dataset.hpp"
#include "dopcc/doppler_loss.hpp"
#include "dopcc/errors.hpp"
#include "dopcc/eval.hpp"
#include "dopcc/fcf.hpp"
#include "dopcc/parallel.hpp"
#include "dopcc/phase.hpp"
#include "dopcc/sim.hpp"
#include "dopcc/textio.hpp"
#include "dopcc/trainer.hpp"

namespace py = pybind11;
using namespace dopcc;

namespace {

using Settings = std::map<std::string, std::string>;

KeyValueConfig to_config(const Settings& settings) {
    KeyValueConfig c;
    for (const auto& [k, v] : settings) c.set(k, v);
    return c;
}

Eigen::MatrixXd bs_matrix(const SystemConfig& c) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(c.num_bs()), 3);
    for (std::size_t b = 0; b < c.num_bs(); ++b) m.row(static_cast<Eigen::Index>(b)) = c.bs_positions[b].transpose();
    return m;
}

py::array_t<std::complex<float>> csi_array(const CsiDataset& ds) {
    const auto nb = static_cast<py::ssize_t>(ds.config.num_bs());
    const auto ns = static_cast<py::ssize_t>(ds.config.num_subcarriers);
    py::array_t<std::complex<float>> out({static_cast<py::ssize_t>(ds.size()), nb, ns});
    auto* dst = out.mutable_data();
    for (const auto& p : ds.points) {
        std::copy(p.csi.data(), p.csi.data() + p.csi.size(), dst);
        dst += p.csi.size();
    }
    return out;
}

Eigen::MatrixXd freq_offsets(const CsiDataset& ds) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(ds.config.num_bs()));
    for (std::size_t l = 0; l < ds.size(); ++l) m.row(static_cast<Eigen::Index>(l)) = ds.points[l].freq_offsets.transpose();
    return m;
}

Eigen::MatrixXd positions(const CsiDataset& ds) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(ds.size()), 3);
    for (std::size_t l = 0; l < ds.size(); ++l) m.row(static_cast<Eigen::Index>(l)) = ds.points[l].position.transpose();
    return m;
}

py::dict report_dict(const EvalReport& r) {
    py::dict d;
    d["mae"] = r.mae;
    d["drms"] = r.drms;
    d["cep"] = r.cep;
    d["r95"] = r.r95;
    d["ct"] = r.ct;
    d["tw"] = r.tw;
    d["ks"] = r.ks;
    d["points"] = r.num_points;
    d["neighbors"] = r.neighborhood;
    if (r.transform) d["transform"] = py::make_tuple(r.transform->matrix, r.transform->offset);
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Doppler channel charting: simulation, phase tracking, training and evaluation";

    auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", error.ptr());
    py::register_exception<IoError>(m, "IoError", error.ptr());
    py::register_exception<NumericError>(m, "NumericError", error.ptr());
    py::register_exception<PreconditionError>(m, "PreconditionError", error.ptr());

    py::class_<SystemConfig>(m, "SystemConfig")
        .def_readonly("carrier_frequency", &SystemConfig::carrier_frequency)
        .def_readonly("bandwidth", &SystemConfig::bandwidth)
        .def_readonly("num_subcarriers", &SystemConfig::num_subcarriers)
        .def_readonly("ue_height", &SystemConfig::ue_height)
        .def_property_readonly("num_bs", &SystemConfig::num_bs)
        .def_property_readonly("wavelength", &SystemConfig::wavelength)
        .def_property_readonly("bs_positions", &bs_matrix);

    py::class_<CsiDataset>(m, "Dataset")
        .def("__len__", &CsiDataset::size)
        .def_readonly("config", &CsiDataset::config)
        .def_property_readonly("csi", &csi_array, "CSI as an (L, B, N_sub) complex64 array")
        .def_property_readonly("positions", &positions)
        .def_property_readonly("positions_2d", &CsiDataset::positions_2d)
        .def_property_readonly("timestamps", &CsiDataset::timestamps)
        .def_property_readonly("freq_offsets", &freq_offsets)
        .def("subset", &CsiDataset::subset, py::arg("indices"))
        .def("without_positions", &CsiDataset::without_positions)
        .def("save", [](const CsiDataset& ds, const std::filesystem::path& p) { save_dataset(ds, p); }, py::arg("path"))
        .def("__eq__", [](const CsiDataset& a, const CsiDataset& b) { return a == b; });

    m.def("load_dataset", [](const std::filesystem::path& p) { return load_dataset(p); }, py::arg("path"));
    m.def(
        "simulate", [](const Settings& s) { return simulate(cli::scenario_from_config(to_config(s))); },
        py::arg("settings") = Settings{}, py::call_guard<py::gil_scoped_release>(),
        "Simulates the default scenario with the given key-value overrides");
    m.def("scenario_keys", &cli::scenario_keys);
    m.def("pipeline_keys", &cli::pipeline_keys);
    m.def("split_indices", [](std::size_t n, const Settings& s, const std::string& subset) {
        return cli::select_indices(n, subset, cli::pipeline_from_config(to_config(s)));
    }, py::arg("num_points"), py::arg("settings") = Settings{}, py::arg("subset") = "train");

    py::class_<PhaseTrack>(m, "PhaseTrack")
        .def_readonly("phases", &PhaseTrack::phases)
        .def_readonly("uncertainty_cumsum", &PhaseTrack::uncertainty_cumsum)
        .def_readonly("timestamps", &PhaseTrack::timestamps)
        .def("differential_phase", &differential_phase, py::arg("b1"), py::arg("b2"), py::arg("l1"), py::arg("l2"));

    m.def("integrate_offsets", &integrate_offsets, py::arg("dataset"));
    m.def(
        "track_phases",
        [](const CsiDataset& ds) {
            auto r = track_phases(ds);
            return py::make_tuple(r.track, r.flagged_fraction(), r.warning);
        },
        py::arg("dataset"), "Returns (track, flagged fraction, warning)");
    m.def("wrap_to_pi", &wrap_to_pi);

    py::class_<UncertaintyModel>(m, "UncertaintyModel")
        .def_readonly("u", &UncertaintyModel::u)
        .def_readonly("U", &UncertaintyModel::U)
        .def_property_readonly("beta", [](const UncertaintyModel& u) { return u.params.beta; })
        .def(
            "sigma", [](const UncertaintyModel& u, std::size_t b1, std::size_t b2, std::size_t l1, std::size_t l2) {
                return u.sigma(b1, b2, l1, l2);
            },
            py::arg("b1"), py::arg("b2"), py::arg("l1"), py::arg("l2"));

    m.def(
        "build_uncertainty",
        [](const CsiDataset& ds, const Settings& s) {
            return build_uncertainty(ds, cli::pipeline_from_config(to_config(s)).uncertainty);
        },
        py::arg("dataset"), py::arg("settings") = Settings{});
    m.def(
        "pair_sample",
        [](const PhaseTrack& t, const UncertaintyModel& u, std::size_t l1, std::size_t l2) {
            auto p = make_pair_sample(t, u, l1, l2);
            return py::make_tuple(p.delta_phi, p.sigma);
        },
        py::arg("track"), py::arg("uncertainty"), py::arg("l1"), py::arg("l2"), "Returns (delta_phi, sigma), both B x B");
    m.def(
        "pair_loss",
        [](const Eigen::Vector2d& x1, const Eigen::Vector2d& x2, const Eigen::MatrixXd& delta_phi,
           const Eigen::MatrixXd& sigma, const SystemConfig& config) {
            PairSample p;
            p.delta_phi = delta_phi;
            p.sigma = sigma;
            if (delta_phi.rows() != static_cast<Eigen::Index>(config.num_bs()) || delta_phi.cols() != delta_phi.rows() ||
                sigma.rows() != delta_phi.rows() || sigma.cols() != delta_phi.cols()) {
                throw PreconditionError("delta_phi and sigma must be B x B");
            }
            auto r = pair_loss(x1, x2, p, config);
            return py::make_tuple(r.loss, r.grad1, r.grad2);
        },
        py::arg("x1"), py::arg("x2"), py::arg("delta_phi"), py::arg("sigma"), py::arg("config"),
        "Returns (loss, gradient wrt x1, gradient wrt x2)");

    py::class_<FcfModel>(m, "Model")
        .def_property_readonly("num_bs", &FcfModel::num_bs)
        .def_property_readonly("widths", &FcfModel::widths)
        .def_property_readonly("parameter_count", &FcfModel::parameter_count)
        .def("save", [](const FcfModel& f, const std::filesystem::path& p) { save_model(f, p); }, py::arg("path"))
        .def("__eq__", [](const FcfModel& a, const FcfModel& b) { return a == b; });
    m.def("load_model", [](const std::filesystem::path& p) { return load_model(p); }, py::arg("path"));

    m.def(
        "train",
        [](const CsiDataset& ds, const std::string& loss, const Settings& s, const std::string& subset) {
            const auto p = cli::pipeline_from_config(to_config(s));
            cli::TrainOutcome out;
            {
                py::gil_scoped_release release;
                out = cli::train_model(ds, cli::select_indices(ds.size(), subset, p), loss, p);
            }
            std::ostringstream report;
            out.result.report.write(report);
            return py::make_tuple(out.result.model, report.str());
        },
        py::arg("dataset"), py::arg("loss") = "doppler", py::arg("settings") = Settings{}, py::arg("subset") = "all",
        "Returns (model, training report text)");
    m.def(
        "predict",
        [](const FcfModel& model, const CsiDataset& ds, const Settings& s) {
            return cli::estimate_positions(model, ds, cli::pipeline_from_config(to_config(s)));
        },
        py::arg("model"), py::arg("dataset"), py::arg("settings") = Settings{}, py::call_guard<py::gil_scoped_release>());

    m.def(
        "evaluate",
        [](const Eigen::MatrixX2d& est, const Eigen::MatrixX2d& truth, bool affine, std::optional<std::size_t> k) {
            return report_dict(evaluate_chart(est, truth, affine, k));
        },
        py::arg("estimates"), py::arg("truths"), py::arg("affine") = false, py::arg("neighbors") = py::none());
    m.def(
        "fit_affine",
        [](const Eigen::MatrixX2d& est, const Eigen::MatrixX2d& truth) {
            auto t = fit_affine(est, truth);
            return py::make_tuple(t.matrix, t.offset);
        },
        py::arg("estimates"), py::arg("truths"), "Returns (A, b) of the map x -> A x + b");

    m.def(
        "cira_matrix", [](const CsiDataset& ds) { return cira_matrix(ds).values; }, py::arg("dataset"),
        py::call_guard<py::gil_scoped_release>());
    m.def(
        "geodesic",
        [](const Eigen::MatrixXd& values, std::size_t k) {
            DissimilarityMatrix d;
            d.values = values;
            return geodesic(d, k).values;
        },
        py::arg("dissimilarity"), py::arg("k"), py::call_guard<py::gil_scoped_release>());

    m.def("set_threads", &set_thread_count, py::arg("threads"));
    m.def("thread_count", &thread_count);
    m.def(
        "run_cli",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "dopcc");
            std::vector<char*> argv;
            for (auto& a : args) argv.push_back(a.data());
            py::gil_scoped_release release;
            return cli::run(static_cast<int>(argv.size()), argv.data());
        },
        py::arg("args"), "Runs the command-line tool in-process; returns its exit code");
}
