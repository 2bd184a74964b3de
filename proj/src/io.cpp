#include "cctkit/io.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace cctkit::io {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

void append_row(std::string& out, const std::vector<std::string>& cells) {
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
}

std::vector<std::string> state_headers(const StateLayout& layout, const NetworkCase& c) {
  std::vector<std::string> h;
  for (int k = 0; k < layout.nx(); ++k) h.push_back(layout.component_name(k, c));
  return h;
}

ordered_json scenario_json(const FaultScenario& s) {
  return ordered_json{{"fault_bus", s.fault_bus}, {"tripped_branch", s.tripped_branch},
                      {"t1", s.t1},               {"t_cl", s.t_cl},
                      {"horizon", s.horizon},     {"dt", s.dt}};
}

ordered_json lambda_json(const LambdaPoint& p) {
  return ordered_json{{"t_cl", p.t_cl},
                      {"m_sn", p.m_sn},
                      {"lambda", p.lambda},
                      {"fleet", to_string(p.fleet)}};
}

ordered_json estimate_payload(const CctEstimate& e) {
  ordered_json fleets = ordered_json::array();
  for (const auto& r : e.fleets) {
    fleets.push_back(ordered_json{{"fleet", to_string(r.fleet)},
                                  {"points", {lambda_json(r.p1), lambda_json(r.p2)}},
                                  {"t_cr", r.t_cr},
                                  {"slope", r.slope},
                                  {"extrapolation_distance", r.extrapolation_distance},
                                  {"low_confidence", r.low_confidence}});
  }
  return ordered_json{{"probes", {e.probes.first, e.probes.second}},
                      {"fleets", fleets},
                      {"t_cr_system", e.t_cr_system},
                      {"system_fleet", to_string(e.system_fleet)},
                      {"low_confidence", e.low_confidence}};
}

ordered_json bracket_payload(const CctBracket& b) {
  ordered_json log = ordered_json::array();
  for (const auto& [t_cl, stable] : b.log)
    log.push_back(ordered_json{{"t_cl", t_cl}, {"stable", stable}});
  return ordered_json{{"lower", b.lower},
                      {"upper", b.upper},
                      {"evaluations", b.evaluations},
                      {"log", log}};
}

std::string trip_label(const NetworkCase& c, int branch_id) {
  if (branch_id <= 0 || branch_id > static_cast<int>(c.branches.size()))
    return branch_id <= 0 ? "-" : "?" + std::to_string(branch_id);
  const Branch& br = c.branches[branch_id - 1];  // ids are 1-based positions
  return std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus);
}

}  // namespace

std::string trajectory_csv(const Trajectory& traj, const NetworkCase& c) {
  std::string out;
  std::vector<std::string> header{"t"};
  for (const auto& name : state_headers(traj.layout, c)) header.push_back(name);
  for (const auto& b : c.buses) header.push_back("v_b" + std::to_string(b.index));
  for (const auto& b : c.buses) header.push_back("th_b" + std::to_string(b.index));
  append_row(out, header);

  std::vector<std::string> row;
  for (int k = 0; k < traj.size(); ++k) {
    row.clear();
    row.push_back(format_double(traj.times[k]));
    const Eigen::VectorXd& x = traj.states[k];
    for (int i = 0; i < x.size(); ++i) row.push_back(format_double(x[i]));
    const AlgebraicSolution& alg = traj.algebraics[k];
    for (size_t i = 0; i < c.buses.size(); ++i)
      row.push_back(format_double(alg.v_mag[static_cast<int>(i)]));
    for (size_t i = 0; i < c.buses.size(); ++i)
      row.push_back(format_double(alg.v_ang[static_cast<int>(i)]));
    append_row(out, row);
  }
  return out;
}

std::string trajectory_json(const Trajectory& traj, const NetworkCase& c) {
  ordered_json j;
  j["case"] = c.name;
  j["scenario"] = scenario_json(traj.scenario);
  j["marks"] = {{"fault_on", traj.marks.fault_on}, {"clearing", traj.marks.clearing}};
  j["algebraic_collapse"] = traj.algebraic_collapse;
  if (traj.algebraic_collapse) j["collapse_time"] = traj.collapse_time;
  j["columns"] = state_headers(traj.layout, c);
  j["t"] = traj.times;
  ordered_json states = ordered_json::array();
  for (const auto& x : traj.states) {
    ordered_json row = ordered_json::array();
    for (int i = 0; i < x.size(); ++i) row.push_back(x[i]);
    states.push_back(std::move(row));
  }
  j["states"] = std::move(states);
  return j.dump(2) + "\n";
}

std::string verdict_json(const Trajectory& traj, const StabilityVerdict& verdict) {
  ordered_json j;
  j["scenario"] = scenario_json(traj.scenario);
  j["stable"] = verdict.stable;
  j["reason"] = to_string(verdict.reason);
  if (verdict.first_violation_time)
    j["first_violation_time"] = *verdict.first_violation_time;
  j["algebraic_collapse"] = traj.algebraic_collapse;
  j["samples"] = traj.size();
  j["end_time"] = traj.times.empty() ? 0.0 : traj.times.back();
  return j.dump(2) + "\n";
}

std::string sensitivity_csv(const SensitivityTrajectory& sens, const NetworkCase& c,
                            const std::vector<SnSeries>& sn) {
  std::string out;
  std::vector<std::string> header{"s"};
  for (const auto& name : state_headers(sens.layout, c)) header.push_back("dW_" + name);
  const int ny = sens.u.empty() ? 0 : static_cast<int>(sens.u.front().size());
  if (ny == 2 * static_cast<int>(c.gfl_units.size())) {
    for (const auto& g : c.gfl_units) {
      header.push_back("dU_v_b" + std::to_string(g.bus));
      header.push_back("dU_th_b" + std::to_string(g.bus));
    }
  } else {
    for (int i = 0; i < ny; ++i) header.push_back("dU_" + std::to_string(i));
  }
  for (const auto& series : sn) header.push_back("sn_" + to_string(series.fleet));
  append_row(out, header);

  std::vector<std::string> row;
  for (int s = 0; s < sens.size(); ++s) {
    row.clear();
    row.push_back(format_double(sens.elapsed[s]));
    for (int i = 0; i < sens.w[s].size(); ++i) row.push_back(format_double(sens.w[s][i]));
    for (int i = 0; i < sens.u[s].size(); ++i) row.push_back(format_double(sens.u[s][i]));
    for (const auto& series : sn) row.push_back(format_double(series.values[s]));
    append_row(out, row);
  }
  return out;
}

std::string sensitivity_json(const SensitivityTrajectory& sens, const NetworkCase& c,
                             const std::vector<SnSeries>& sn) {
  ordered_json j;
  j["case"] = c.name;
  j["method"] = sens.method == SensitivityMethod::Variational ? "variational" : "fd";
  j["alignment"] = to_string(sens.alignment);
  j["base_t_cl"] = sens.base_t_cl;
  j["truncated"] = sens.truncated;
  j["samples"] = sens.size();
  ordered_json peaks = ordered_json::array();
  for (const auto& series : sn) {
    PeakResult m = peak(series);
    peaks.push_back(ordered_json{{"fleet", to_string(series.fleet)},
                                 {"reference_bus", series.reference_bus},
                                 {"m_sn", m.value},
                                 {"at", m.at},
                                 {"lambda", 1.0 / m.value}});
  }
  j["peaks"] = std::move(peaks);
  return j.dump(2) + "\n";
}

std::string estimate_json(const CctEstimate& estimate) {
  return estimate_payload(estimate).dump(2) + "\n";
}

std::string bracket_json(const CctBracket& bracket) {
  return bracket_payload(bracket).dump(2) + "\n";
}

std::string report_json(const ComparisonReport& report) {
  ordered_json j;
  j["estimate"] = estimate_payload(report.estimate);
  j["bracket"] = bracket_payload(report.bracket);
  j["tol"] = report.tol;
  j["contained"] = report.contained;
  j["sims_estimate"] = report.sims_estimate;
  j["sims_bisect"] = report.sims_bisect;
  return j.dump(2) + "\n";
}

std::string report_table(const std::vector<std::pair<FaultScenario, ComparisonReport>>& rows,
                         const NetworkCase& c) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %-13s %-17s %-20s\n", "Fault Bus", "Tripped Line",
                "CCT (TDS)", "CCT (Proposed Method)");
  out += line;
  out += std::string(62, '-') + "\n";
  for (const auto& [scenario, report] : rows) {
    std::snprintf(line, sizeof(line), "%-10d %-13s [%.4f, %.4f]  %.4f%s\n", scenario.fault_bus,
                  trip_label(c, scenario.tripped_branch).c_str(), report.bracket.lower,
                  report.bracket.upper, report.estimate.t_cr_system,
                  report.contained ? "" : "  (outside bracket)");
    out += line;
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out;
  append_row(out, {"fault_bus", "tripped_line", "status", "tds_lower", "tds_upper", "proposed",
                   "contained", "sims_estimate", "sims_bisect", "error"});
  for (const auto& r : rows) {
    if (r.ok) {
      append_row(out, {std::to_string(r.fault_bus), r.tripped_line, "ok",
                       format_double(r.tds_lower), format_double(r.tds_upper),
                       format_double(r.proposed), r.contained ? "true" : "false",
                       std::to_string(r.sims_estimate), std::to_string(r.sims_bisect), ""});
    } else {
      std::string msg = r.error;
      for (char& ch : msg)
        if (ch == ',' || ch == '\n') ch = ';';
      append_row(out, {std::to_string(r.fault_bus), r.tripped_line, "error", "", "", "", "", "",
                       "", msg});
    }
  }
  return out;
}

std::string sweep_json(const std::vector<SweepRow>& rows) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json j{{"fault_bus", r.fault_bus}, {"tripped_line", r.tripped_line}};
    if (r.ok) {
      j["status"] = "ok";
      j["tds"] = {{"lower", r.tds_lower}, {"upper", r.tds_upper}};
      j["proposed"] = r.proposed;
      j["contained"] = r.contained;
      j["sims_estimate"] = r.sims_estimate;
      j["sims_bisect"] = r.sims_bisect;
    } else {
      j["status"] = "error";
      j["error"] = r.error;
    }
    arr.push_back(std::move(j));
  }
  return ordered_json{{"faults", arr}}.dump(2) + "\n";
}

std::string gnuplot_script(const std::string& csv_name, const NetworkCase& c) {
  std::string out;
  out += "set datafile separator ','\n";
  out += "set key autotitle columnhead outside\n";
  out += "set xlabel 't [s]'\n";
  out += "set terminal pngcairo size 1200,800\n";
  out += "set output 'trajectory.png'\n";
  out += "set multiplot layout 2,1\n";
  out += "set ylabel 'rotor angle [rad]'\n";
  std::string plots;
  int col = 2;  // column 1 is t; states follow in layout order
  for (const auto& m : c.sync_machines) {
    if (!plots.empty()) plots += ", ";
    plots += "'" + csv_name + "' using 1:" + std::to_string(col) + " with lines";
    col += 2;
  }
  out += "plot " + plots + "\n";
  if (!c.gfl_units.empty()) {
    out += "set ylabel 'converter power [pu]'\n";
    plots.clear();
    col = 2 + 2 * static_cast<int>(c.sync_machines.size()) + 1;  // p_v slot
    for (const auto& g : c.gfl_units) {
      if (!plots.empty()) plots += ", ";
      plots += "'" + csv_name + "' using 1:" + std::to_string(col) + " with lines";
      col += 4;
    }
    out += "plot " + plots + "\n";
  }
  out += "unset multiplot\n";
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f << content;
  if (!f) throw Error("write to '" + path + "' failed");
}

}  // namespace cctkit::io
