#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <iostream>

#include "cctkit/cct_estimator.hpp"
#include "cctkit/cli.hpp"
#include "cctkit/io.hpp"

namespace py = pybind11;
using namespace cctkit;

namespace {

SimOptions make_sim_options(const std::string& integrator) {
  SimOptions sim;
  sim.integrator = integrator_from_string(integrator);
  return sim;
}

SensitivityOptions make_sens_options(const std::string& alignment,
                                     const std::string& integrator) {
  SensitivityOptions o;
  o.alignment = alignment_from_string(alignment);
  o.sim = make_sim_options(integrator);
  return o;
}

Eigen::MatrixXd stack_rows(const std::vector<Eigen::VectorXd>& rows) {
  if (rows.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(static_cast<int>(rows.size()), rows.front().size());
  for (int i = 0; i < m.rows(); ++i) m.row(i) = rows[i];
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "transient stability and critical clearing time toolkit";

  py::register_exception<Error>(m, "CctkitError");

  py::class_<FaultScenario>(m, "FaultScenario")
      .def(py::init<>())
      .def_readwrite("fault_bus", &FaultScenario::fault_bus)
      .def_readwrite("tripped_branch", &FaultScenario::tripped_branch)
      .def_readwrite("t1", &FaultScenario::t1)
      .def_readwrite("t_cl", &FaultScenario::t_cl)
      .def_readwrite("horizon", &FaultScenario::horizon)
      .def_readwrite("dt", &FaultScenario::dt)
      .def_property_readonly("clearing_time", &FaultScenario::clearing_time)
      .def("__repr__", [](const FaultScenario& s) {
        return "FaultScenario(fault_bus=" + std::to_string(s.fault_bus) +
               ", tripped_branch=" + std::to_string(s.tripped_branch) +
               ", t1=" + std::to_string(s.t1) + ", t_cl=" + std::to_string(s.t_cl) + ")";
      });

  py::class_<NetworkCase>(m, "NetworkCase")
      .def_readonly("name", &NetworkCase::name)
      .def_readonly("description", &NetworkCase::description)
      .def_readonly("system_base_mva", &NetworkCase::system_base_mva)
      .def_readonly("frequency_hz", &NetworkCase::frequency_hz)
      .def_property_readonly("n_buses",
                             [](const NetworkCase& c) { return c.buses.size(); })
      .def_property_readonly("n_branches",
                             [](const NetworkCase& c) { return c.branches.size(); })
      .def_property_readonly("n_sync",
                             [](const NetworkCase& c) { return c.sync_machines.size(); })
      .def_property_readonly("n_gfl",
                             [](const NetworkCase& c) { return c.gfl_units.size(); })
      .def_property_readonly("default_scenario",
                             [](const NetworkCase& c) -> py::object {
                               if (!c.default_scenario) return py::none();
                               return py::cast(*c.default_scenario);
                             })
      .def("find_branch", &NetworkCase::find_branch, py::arg("bus_a"), py::arg("bus_b"))
      .def("to_json", &case_to_json)
      .def("__repr__", [](const NetworkCase& c) {
        return "NetworkCase('" + c.name + "', " + std::to_string(c.buses.size()) + " buses)";
      });

  py::class_<StateLayout>(m, "StateLayout")
      .def_readonly("n_sync", &StateLayout::n_sync)
      .def_readonly("n_gfl", &StateLayout::n_gfl)
      .def_property_readonly("nx", &StateLayout::nx);

  py::class_<StabilityVerdict>(m, "StabilityVerdict")
      .def_readonly("stable", &StabilityVerdict::stable)
      .def_property_readonly("reason",
                             [](const StabilityVerdict& v) { return to_string(v.reason); })
      .def_property_readonly("first_violation_time",
                             [](const StabilityVerdict& v) -> py::object {
                               if (!v.first_violation_time) return py::none();
                               return py::float_(*v.first_violation_time);
                             })
      .def("__repr__", [](const StabilityVerdict& v) {
        return std::string("StabilityVerdict(") + (v.stable ? "stable" : "unstable: ") +
               (v.stable ? "" : to_string(v.reason)) + ")";
      });

  py::class_<Trajectory>(m, "Trajectory")
      .def_readonly("times", &Trajectory::times)
      .def_property_readonly("states",
                             [](const Trajectory& t) { return stack_rows(t.states); })
      .def_readonly("layout", &Trajectory::layout)
      .def_readonly("scenario", &Trajectory::scenario)
      .def_readonly("algebraic_collapse", &Trajectory::algebraic_collapse)
      .def_readonly("collapse_time", &Trajectory::collapse_time)
      .def_property_readonly("fault_on_index",
                             [](const Trajectory& t) { return t.marks.fault_on; })
      .def_property_readonly("clearing_index",
                             [](const Trajectory& t) { return t.marks.clearing; })
      .def_property_readonly(
          "bus_voltages",
          [](const Trajectory& t) {
            std::vector<Eigen::VectorXd> rows;
            rows.reserve(t.algebraics.size());
            for (const auto& a : t.algebraics) rows.push_back(a.v_mag);
            return stack_rows(rows);
          })
      .def("component_name",
           [](const Trajectory& t, int k, const NetworkCase& c) {
             return t.layout.component_name(k, c);
           })
      .def("__len__", &Trajectory::size);

  py::class_<SensitivityTrajectory>(m, "SensitivityTrajectory")
      .def_readonly("elapsed", &SensitivityTrajectory::elapsed)
      .def_property_readonly("w",
                             [](const SensitivityTrajectory& s) { return stack_rows(s.w); })
      .def_property_readonly("u",
                             [](const SensitivityTrajectory& s) { return stack_rows(s.u); })
      .def_readonly("base_t_cl", &SensitivityTrajectory::base_t_cl)
      .def_readonly("truncated", &SensitivityTrajectory::truncated)
      .def_readonly("layout", &SensitivityTrajectory::layout)
      .def("__len__", &SensitivityTrajectory::size);

  py::class_<SnSeries>(m, "SnSeries")
      .def_readonly("elapsed", &SnSeries::elapsed)
      .def_readonly("values", &SnSeries::values)
      .def_readonly("reference_bus", &SnSeries::reference_bus)
      .def_property_readonly("fleet",
                             [](const SnSeries& s) { return to_string(s.fleet); });

  py::class_<PeakResult>(m, "PeakResult")
      .def_readonly("value", &PeakResult::value)
      .def_readonly("at", &PeakResult::at);

  py::class_<CctBracket>(m, "CctBracket")
      .def_readonly("lower", &CctBracket::lower)
      .def_readonly("upper", &CctBracket::upper)
      .def_readonly("evaluations", &CctBracket::evaluations)
      .def_readonly("log", &CctBracket::log)
      .def("__repr__", [](const CctBracket& b) {
        return "CctBracket([" + std::to_string(b.lower) + ", " + std::to_string(b.upper) +
               "], " + std::to_string(b.evaluations) + " evaluations)";
      });

  py::class_<LambdaPoint>(m, "LambdaPoint")
      .def_readonly("t_cl", &LambdaPoint::t_cl)
      .def_readonly("m_sn", &LambdaPoint::m_sn)
      .def_readonly("lambda_", &LambdaPoint::lambda)
      .def_property_readonly("fleet",
                             [](const LambdaPoint& p) { return to_string(p.fleet); });

  py::class_<FleetResult>(m, "FleetResult")
      .def_property_readonly("fleet",
                             [](const FleetResult& r) { return to_string(r.fleet); })
      .def_readonly("p1", &FleetResult::p1)
      .def_readonly("p2", &FleetResult::p2)
      .def_readonly("t_cr", &FleetResult::t_cr)
      .def_readonly("slope", &FleetResult::slope)
      .def_readonly("extrapolation_distance", &FleetResult::extrapolation_distance)
      .def_readonly("low_confidence", &FleetResult::low_confidence);

  py::class_<CctEstimate>(m, "CctEstimate")
      .def_readonly("probes", &CctEstimate::probes)
      .def_readonly("fleets", &CctEstimate::fleets)
      .def_readonly("t_cr_system", &CctEstimate::t_cr_system)
      .def_property_readonly("system_fleet",
                             [](const CctEstimate& e) { return to_string(e.system_fleet); })
      .def_readonly("low_confidence", &CctEstimate::low_confidence)
      .def("__repr__", [](const CctEstimate& e) {
        return "CctEstimate(t_cr_system=" + std::to_string(e.t_cr_system) + ")";
      });

  py::class_<ComparisonReport>(m, "ComparisonReport")
      .def_readonly("estimate", &ComparisonReport::estimate)
      .def_readonly("bracket", &ComparisonReport::bracket)
      .def_readonly("tol", &ComparisonReport::tol)
      .def_readonly("contained", &ComparisonReport::contained)
      .def_readonly("sims_estimate", &ComparisonReport::sims_estimate)
      .def_readonly("sims_bisect", &ComparisonReport::sims_bisect)
      .def_readonly("wall_estimate_s", &ComparisonReport::wall_estimate_s)
      .def_readonly("wall_bisect_s", &ComparisonReport::wall_bisect_s);

  m.def("builtin_case_names", &builtin_case_names);
  m.def("builtin_case", &builtin_case, py::arg("name"));
  m.def("load_case", &load_case, py::arg("path"));
  m.def("resolve_case", &resolve_case, py::arg("name_or_path"));

  m.def(
      "simulate",
      [](const NetworkCase& c, const FaultScenario& s, const std::string& integrator) {
        return simulate(c, s, make_sim_options(integrator));
      },
      py::arg("case"), py::arg("scenario"), py::arg("integrator") = "trap",
      py::call_guard<py::gil_scoped_release>());

  m.def(
      "classify_stability",
      [](const Trajectory& t) { return classify_stability(t); }, py::arg("trajectory"));

  m.def(
      "bisect_cct",
      [](const NetworkCase& c, const FaultScenario& s, std::pair<double, double> bracket,
         double tol, const std::string& integrator) {
        return bisect_cct(c, s, bracket, tol, make_sim_options(integrator));
      },
      py::arg("case"), py::arg("scenario"), py::arg("bracket"), py::arg("tol") = 0.01,
      py::arg("integrator") = "trap", py::call_guard<py::gil_scoped_release>());

  m.def(
      "sensitivity_variational",
      [](const NetworkCase& c, const FaultScenario& s, const std::string& alignment,
         const std::string& integrator) {
        return sensitivity_variational(c, s, make_sens_options(alignment, integrator));
      },
      py::arg("case"), py::arg("scenario"), py::arg("alignment") = "elapsed",
      py::arg("integrator") = "trap", py::call_guard<py::gil_scoped_release>());

  m.def(
      "sensitivity_finite_difference",
      [](const NetworkCase& c, const FaultScenario& s, double h, const std::string& alignment,
         const std::string& integrator) {
        return sensitivity_finite_difference(c, s, h, make_sens_options(alignment, integrator));
      },
      py::arg("case"), py::arg("scenario"), py::arg("h") = 0.0,
      py::arg("alignment") = "elapsed", py::arg("integrator") = "trap",
      py::call_guard<py::gil_scoped_release>());

  m.def(
      "sn_sync",
      [](const SensitivityTrajectory& sens, const NetworkCase& c, int reference_bus) {
        return sn_sync(sens, c, reference_bus);
      },
      py::arg("sensitivity"), py::arg("case"), py::arg("reference_bus") = 0);
  m.def(
      "sn_gfl",
      [](const SensitivityTrajectory& sens, const NetworkCase& c, int reference_bus) {
        return sn_gfl(sens, c, reference_bus);
      },
      py::arg("sensitivity"), py::arg("case"), py::arg("reference_bus") = 0);
  m.def(
      "peak", [](const SnSeries& sn) { return peak(sn); }, py::arg("series"));
  m.def(
      "peak_in_window",
      [](const SnSeries& sn, std::pair<double, double> w) { return peak(sn, w); },
      py::arg("series"), py::arg("window"));

  m.def(
      "extrapolate_root",
      [](double t1, double lambda1, double t2, double lambda2, const std::string& fleet) {
        Fleet f = fleet == "gfl" ? Fleet::Gfl : Fleet::Sync;
        LambdaPoint p1{t1, lambda1 > 0 ? 1.0 / lambda1 : 0.0, lambda1, f};
        LambdaPoint p2{t2, lambda2 > 0 ? 1.0 / lambda2 : 0.0, lambda2, f};
        return extrapolate_root(p1, p2);
      },
      py::arg("t_cl1"), py::arg("lambda1"), py::arg("t_cl2"), py::arg("lambda2"),
      py::arg("fleet") = "sync");

  m.def(
      "estimate_cct",
      [](const NetworkCase& c, const FaultScenario& s, std::pair<double, double> probes,
         const std::string& alignment, const std::string& integrator) {
        EstimatorOptions o;
        o.sensitivity = make_sens_options(alignment, integrator);
        return estimate_cct(c, s, probes, o);
      },
      py::arg("case"), py::arg("scenario"), py::arg("probes"),
      py::arg("alignment") = "elapsed", py::arg("integrator") = "trap",
      py::call_guard<py::gil_scoped_release>());

  m.def(
      "auto_probes",
      [](const NetworkCase& c, const FaultScenario& s) {
        ScenarioAssembly assembly(c, s);
        return auto_probes(assembly, s);
      },
      py::arg("case"), py::arg("scenario"), py::call_guard<py::gil_scoped_release>());

  m.def(
      "compare_with_tds",
      [](const NetworkCase& c, const FaultScenario& s, std::pair<double, double> probes,
         double tol, std::pair<double, double> bracket) {
        return compare_with_tds(c, s, probes, tol, bracket);
      },
      py::arg("case"), py::arg("scenario"),
      py::arg("probes") = std::pair<double, double>{0.0, 0.0}, py::arg("tol") = 0.01,
      py::arg("bracket") = std::pair<double, double>{0.1, 0.7},
      py::call_guard<py::gil_scoped_release>());

  m.def("trajectory_csv", &io::trajectory_csv, py::arg("trajectory"), py::arg("case"));
  m.def(
      "sensitivity_csv",
      [](const SensitivityTrajectory& sens, const NetworkCase& c,
         const std::vector<SnSeries>& sn) { return io::sensitivity_csv(sens, c, sn); },
      py::arg("sensitivity"), py::arg("case"), py::arg("sn") = std::vector<SnSeries>{});
  m.def("estimate_json", &io::estimate_json, py::arg("estimate"));
  m.def("report_json", &io::report_json, py::arg("report"));

  m.def(
      "cli_main",
      [](const std::vector<std::string>& args) {
        int rc = cctkit::cli::run(args);
        // the CLI writes through the C++ streams; flush so the output is
        // visible to the embedding process as soon as the call returns
        std::cout.flush();
        std::cerr.flush();
        return rc;
      },
      py::arg("args"));
}
