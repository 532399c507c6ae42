#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "twb/criteria.hpp"
#include "twb/dist_core.hpp"
#include "twb/errors.hpp"
#include "twb/intensity.hpp"
#include "twb/io.hpp"
#include "twb/reconstruct.hpp"
#include "twb/simulator.hpp"

namespace py = pybind11;
using namespace twb;

PYBIND11_MODULE(_twb, m) {
    m.doc() = "mesoscopic twin-beam photon statistics toolkit";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const DomainError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const Error& e) {
            PyErr_SetString(PyExc_RuntimeError, e.what());
        }
    });

    py::class_<ModeParams>(m, "ModeParams")
        .def(py::init<>())
        .def(py::init([](double mu, double b) {
                 ModeParams p{mu, b};
                 return p;
             }),
             py::arg("mu"), py::arg("b"))
        .def_readwrite("mu", &ModeParams::mu)
        .def_readwrite("b", &ModeParams::b);

    py::class_<TwbModel>(m, "TwbModel")
        .def(py::init<>())
        .def_readwrite("paired", &TwbModel::paired)
        .def_readwrite("noise_s", &TwbModel::noise_s)
        .def_readwrite("noise_i", &TwbModel::noise_i)
        .def_readwrite("eta_s", &TwbModel::eta_s)
        .def_readwrite("eta_i", &TwbModel::eta_i);

    py::enum_<CountLabel>(m, "CountLabel")
        .value("photons", CountLabel::photons)
        .value("detected", CountLabel::detected);

    py::enum_<Verdict>(m, "Verdict")
        .value("classical", Verdict::classical)
        .value("nonclassical", Verdict::nonclassical)
        .value("inconclusive", Verdict::inconclusive);

    py::class_<JointDistribution>(m, "JointDistribution")
        .def(py::init<>())
        .def_readwrite("rows", &JointDistribution::rows)
        .def_readwrite("cols", &JointDistribution::cols)
        .def_readwrite("probs", &JointDistribution::probs)
        .def_readwrite("label", &JointDistribution::label)
        .def("at",
             [](const JointDistribution& d, std::size_t i, std::size_t j) { return d.at(i, j); })
        .def("sum", &JointDistribution::sum);

    py::class_<Distribution1D>(m, "Distribution1D")
        .def(py::init<>())
        .def_readwrite("probs", &Distribution1D::probs)
        .def_readwrite("offset", &Distribution1D::offset)
        .def("sum", &Distribution1D::sum)
        .def("mean", &Distribution1D::mean)
        .def("variance", &Distribution1D::variance);

    py::class_<JointHistogram>(m, "JointHistogram")
        .def(py::init<>())
        .def(py::init([](std::size_t rows, std::size_t cols, std::vector<double> counts,
                         double shots) {
                 JointHistogram h;
                 h.rows = rows;
                 h.cols = cols;
                 h.counts = std::move(counts);
                 h.shots = shots;
                 return h;
             }),
             py::arg("rows"), py::arg("cols"), py::arg("counts"), py::arg("shots"))
        .def_readwrite("rows", &JointHistogram::rows)
        .def_readwrite("cols", &JointHistogram::cols)
        .def_readwrite("counts", &JointHistogram::counts)
        .def_readwrite("shots", &JointHistogram::shots)
        .def("at",
             [](const JointHistogram& h, std::size_t i, std::size_t j) { return h.at(i, j); });

    py::class_<CriteriaFlags>(m, "CriteriaFlags")
        .def_readonly("r", &CriteriaFlags::r)
        .def_readonly("s", &CriteriaFlags::s)
        .def_readonly("h", &CriteriaFlags::h);

    py::class_<CriteriaReport>(m, "CriteriaReport")
        .def_readonly("mean_s", &CriteriaReport::mean_s)
        .def_readonly("mean_i", &CriteriaReport::mean_i)
        .def_readonly("C", &CriteriaReport::C)
        .def_readonly("R", &CriteriaReport::R)
        .def_readonly("R_theory", &CriteriaReport::R_theory)
        .def_readonly("S", &CriteriaReport::S)
        .def_readonly("H", &CriteriaReport::H)
        .def_readonly("fano_s", &CriteriaReport::fano_s)
        .def_readonly("fano_i", &CriteriaReport::fano_i)
        .def_readonly("mu_est_s", &CriteriaReport::mu_est_s)
        .def_readonly("mu_est_i", &CriteriaReport::mu_est_i)
        .def_readonly("eta_est", &CriteriaReport::eta_est)
        .def_readonly("flags", &CriteriaReport::flags)
        .def_readonly("se_C", &CriteriaReport::se_C)
        .def_readonly("se_R", &CriteriaReport::se_R)
        .def_readonly("se_S", &CriteriaReport::se_S)
        .def_readonly("se_H", &CriteriaReport::se_H)
        .def_readonly("notes", &CriteriaReport::notes);

    py::class_<CriteriaOptions>(m, "CriteriaOptions")
        .def(py::init<>())
        .def_readwrite("bootstrap_resamples", &CriteriaOptions::bootstrap_resamples)
        .def_readwrite("bootstrap_seed", &CriteriaOptions::bootstrap_seed)
        .def_readwrite("eta_reference", &CriteriaOptions::eta_reference);

    py::class_<FitOptions>(m, "FitOptions")
        .def(py::init<>())
        .def_readwrite("restarts", &FitOptions::restarts)
        .def_readwrite("max_iterations", &FitOptions::max_iterations)
        .def_readwrite("tolerance", &FitOptions::tolerance)
        .def_readwrite("min_shots", &FitOptions::min_shots)
        .def_readwrite("tail_tol", &FitOptions::tail_tol);

    py::class_<DerivedStats>(m, "DerivedStats")
        .def_readonly("photon_covariance", &DerivedStats::photon_covariance)
        .def_readonly("photon_R", &DerivedStats::photon_R)
        .def_readonly("pairing_fraction", &DerivedStats::pairing_fraction)
        .def_readonly("diagonal_weight", &DerivedStats::diagonal_weight)
        .def_readonly("mean_pairs", &DerivedStats::mean_pairs);

    py::class_<ReconstructionResult>(m, "ReconstructionResult")
        .def_readonly("model", &ReconstructionResult::model)
        .def_readonly("residual", &ReconstructionResult::residual)
        .def_readonly("photon_dist", &ReconstructionResult::photon_dist)
        .def_readonly("derived", &ReconstructionResult::derived)
        .def_readonly("noise_s_flagged", &ReconstructionResult::noise_s_flagged)
        .def_readonly("noise_i_flagged", &ReconstructionResult::noise_i_flagged)
        .def_readonly("eta_difference", &ReconstructionResult::eta_difference)
        .def_readonly("converged", &ReconstructionResult::converged);

    py::class_<GridSpec>(m, "GridSpec")
        .def(py::init<>())
        .def_readwrite("w_max_s", &GridSpec::w_max_s)
        .def_readwrite("w_max_i", &GridSpec::w_max_i)
        .def_readwrite("points", &GridSpec::points);

    py::class_<IntensityGrid>(m, "IntensityGrid")
        .def_readonly("axis_s", &IntensityGrid::axis_s)
        .def_readonly("axis_i", &IntensityGrid::axis_i)
        .def_readonly("values", &IntensityGrid::values)
        .def_readonly("order", &IntensityGrid::order)
        .def_readonly("damping", &IntensityGrid::damping)
        .def_readonly("flags", &IntensityGrid::flags)
        .def("at",
             [](const IntensityGrid& g, std::size_t i, std::size_t j) { return g.at(i, j); });

    py::class_<ZeroContour>(m, "ZeroContour").def_readonly("points", &ZeroContour::points);

    py::class_<NegativityReport>(m, "NegativityReport")
        .def_readonly("min_value", &NegativityReport::min_value)
        .def_readonly("min_location", &NegativityReport::min_location)
        .def_readonly("negative_fraction", &NegativityReport::negative_fraction)
        .def_readonly("zero_contours", &NegativityReport::zero_contours)
        .def_readonly("eps_neg", &NegativityReport::eps_neg);

    m.def("mandel_rice_pmf", &mandel_rice_pmf, py::arg("n"), py::arg("params"));
    m.def("multithermal_pmf", &multithermal_pmf, py::arg("n"), py::arg("mean"), py::arg("mu"));
    m.def("mandel_rice_cutoff", &mandel_rice_cutoff, py::arg("params"),
          py::arg("tail_tol") = kTailTol);
    m.def("joint_distribution", &joint_distribution, py::arg("model"),
          py::arg("tail_tol") = kTailTol);
    m.def("detect_transform", &detect_transform, py::arg("table"), py::arg("eta_s"),
          py::arg("eta_i"));
    m.def("fidelity", &fidelity, py::arg("p"), py::arg("q"));

    m.def("run_experiment", &run_experiment, py::arg("model"), py::arg("shots"), py::arg("seed"),
          py::call_guard<py::gil_scoped_release>());
    m.def(
        "evaluate_criteria",
        [](const JointHistogram& h, const CriteriaOptions& opts) {
            return evaluate_criteria(h, opts);
        },
        py::arg("histogram"), py::arg("options") = CriteriaOptions{},
        py::call_guard<py::gil_scoped_release>());
    m.def(
        "fit_model",
        [](const JointHistogram& h, const FitOptions& opts) { return fit_model(h, opts); },
        py::arg("histogram"), py::arg("options") = FitOptions{},
        py::call_guard<py::gil_scoped_release>());
    m.def("photon_statistics", &photon_statistics, py::arg("result"));

    m.def("invert_mandel_2d", &invert_mandel_2d, py::arg("table"), py::arg("order") = -1,
          py::arg("spec") = GridSpec{}, py::arg("damping") = 1.0,
          py::call_guard<py::gil_scoped_release>());
    m.def("model_quasi_convolution", &model_quasi_convolution, py::arg("model"),
          py::arg("order"), py::arg("spec") = GridSpec{}, py::arg("damping") = 1.0,
          py::arg("level") = CountLabel::photons, py::call_guard<py::gil_scoped_release>());
    m.def("detected_intensity_quasi", &detected_intensity_quasi, py::arg("histogram"),
          py::arg("order") = -1, py::arg("spec") = GridSpec{}, py::arg("damping") = 1.0,
          py::call_guard<py::gil_scoped_release>());
    m.def("negativity_report", &negativity_report, py::arg("grid"),
          py::arg("eps_neg") = 1e-6);

    m.attr("__version__") = "1.0.0";
}
