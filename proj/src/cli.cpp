#include "cctkit/cli.hpp"

#include <chrono>
#include <filesystem>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "cctkit/io.hpp"

namespace cctkit::cli {

namespace {

namespace fs = std::filesystem;
using clock_t_ = std::chrono::steady_clock;

struct CommonOpts {
  std::string case_src;
  int fault_bus = -1;  // -1 = keep the case default
  std::string trip;    // "A-B", branch id, or "none"
  double t1 = -1, t_cl = -1, dt = -1, horizon = -1;
  std::string integrator = "trap";
  std::string sens_method = "variational";
  std::string alignment = "elapsed";
  std::string out_dir = ".";
  std::string format = "csv";
  bool gnuplot = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_scenario = true) {
  cmd->add_option("--case", o.case_src, "builtin case name or path to a case JSON")->required();
  if (with_scenario) {
    cmd->add_option("--fault-bus", o.fault_bus, "bus with the bolted fault (0 = none)");
    cmd->add_option("--trip", o.trip, "branch opened at clearing: A-B, branch id, or none");
    cmd->add_option("--t1", o.t1, "fault application time [s]");
    cmd->add_option("--tcl", o.t_cl, "clearing delay after t1 [s]");
    cmd->add_option("--dt", o.dt, "integration step [s]");
    cmd->add_option("--horizon", o.horizon, "simulation horizon [s]");
  }
  cmd->add_option("--integrator", o.integrator, "time integrator")
      ->check(CLI::IsMember({"trap", "rk4"}));
  cmd->add_option("--alignment", o.alignment, "sensitivity time alignment")
      ->check(CLI::IsMember({"elapsed", "absolute"}));
  cmd->add_option("--out", o.out_dir, "output directory (created if missing)");
  cmd->add_option("--format", o.format, "file formats to write")
      ->check(CLI::IsMember({"csv", "json", "both"}));
}

int parse_trip(const NetworkCase& c, const std::string& trip) {
  if (trip.empty() || trip == "none" || trip == "0") return 0;
  auto dash = trip.find('-');
  if (dash == std::string::npos) {
    int id = 0;
    try {
      id = std::stoi(trip);
    } catch (const std::exception&) {
      throw Error("cannot parse --trip '" + trip + "' (expected A-B or a branch id)");
    }
    if (id < 1 || id > static_cast<int>(c.branches.size()))
      throw Error("--trip branch id " + std::to_string(id) + " out of range");
    return id;
  }
  int a = 0, b = 0;
  try {
    a = std::stoi(trip.substr(0, dash));
    b = std::stoi(trip.substr(dash + 1));
  } catch (const std::exception&) {
    throw Error("cannot parse --trip '" + trip + "' (expected A-B)");
  }
  int id = c.find_branch(a, b);
  if (id == 0)
    throw Error("no in-service branch " + std::to_string(a) + "-" + std::to_string(b) +
                " in case '" + c.name + "'");
  return id;
}

std::pair<double, double> parse_pair(const std::string& text, const std::string& flag) {
  auto comma = text.find(',');
  if (comma == std::string::npos)
    throw Error(flag + " expects two comma-separated values, got '" + text + "'");
  try {
    return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
  } catch (const std::exception&) {
    throw Error("cannot parse " + flag + " '" + text + "'");
  }
}

FaultScenario resolve_scenario(const NetworkCase& c, const CommonOpts& o) {
  FaultScenario s = c.default_scenario.value_or(FaultScenario{});
  if (o.fault_bus >= 0) s.fault_bus = o.fault_bus;
  if (!o.trip.empty()) s.tripped_branch = parse_trip(c, o.trip);
  if (o.t1 >= 0) s.t1 = o.t1;
  if (o.t_cl >= 0) s.t_cl = o.t_cl;
  if (o.dt >= 0) s.dt = o.dt;
  if (o.horizon >= 0) s.horizon = o.horizon;
  return s;
}

SimOptions sim_options(const CommonOpts& o) {
  SimOptions sim;
  sim.integrator = integrator_from_string(o.integrator);
  return sim;
}

EstimatorOptions estimator_options(const CommonOpts& o, double fd_h) {
  EstimatorOptions e;
  e.sensitivity.alignment = alignment_from_string(o.alignment);
  e.sensitivity.sim = sim_options(o);
  e.method = o.sens_method == "fd" ? SensitivityMethod::FiniteDifference
                                   : SensitivityMethod::Variational;
  e.fd_h = fd_h;
  return e;
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
}

std::string path_in(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

bool wants_csv(const std::string& f) { return f == "csv" || f == "both"; }
bool wants_json(const std::string& f) { return f == "json" || f == "both"; }

std::string describe_fault(const NetworkCase& c, const FaultScenario& s) {
  std::ostringstream os;
  if (s.fault_bus > 0)
    os << "fault at bus " << s.fault_bus;
  else
    os << "no fault";
  if (s.tripped_branch > 0) {
    const Branch& br = c.branches[s.tripped_branch - 1];
    os << ", trip " << br.from_bus << "-" << br.to_bus;
  }
  os << ", t1=" << s.t1 << "s, horizon=" << s.horizon << "s, dt=" << s.dt << "s";
  return os.str();
}

int cmd_simulate(const CommonOpts& o) {
  NetworkCase c = resolve_case(o.case_src);
  FaultScenario s = resolve_scenario(c, o);
  ensure_out_dir(o.out_dir);

  auto t0 = clock_t_::now();
  Trajectory traj = simulate(c, s, sim_options(o));
  StabilityVerdict verdict = classify_stability(traj);
  double wall = std::chrono::duration<double>(clock_t_::now() - t0).count();

  if (wants_csv(o.format)) io::write_file(path_in(o.out_dir, "trajectory.csv"),
                                          io::trajectory_csv(traj, c));
  if (wants_json(o.format)) io::write_file(path_in(o.out_dir, "trajectory.json"),
                                           io::trajectory_json(traj, c));
  io::write_file(path_in(o.out_dir, "verdict.json"), io::verdict_json(traj, verdict));
  if (o.gnuplot)
    io::write_file(path_in(o.out_dir, "plot.gp"), io::gnuplot_script("trajectory.csv", c));

  std::cout << "case " << c.name << ": " << describe_fault(c, s) << ", T_cl=" << s.t_cl
            << "s\n";
  if (verdict.stable) {
    std::cout << "verdict: stable (" << traj.size() << " samples, " << wall << " s wall)\n";
    return kExitStable;
  }
  std::cout << "verdict: unstable — " << to_string(verdict.reason) << " at t="
            << verdict.first_violation_time.value_or(0.0) << " s (" << wall << " s wall)\n";
  return kExitUnstable;
}

int cmd_sens(const CommonOpts& o, double fd_h) {
  NetworkCase c = resolve_case(o.case_src);
  FaultScenario s = resolve_scenario(c, o);
  ensure_out_dir(o.out_dir);

  ScenarioAssembly assembly(c, s);
  SensitivityOptions sopt;
  sopt.alignment = alignment_from_string(o.alignment);
  sopt.sim = sim_options(o);

  SensitivityTrajectory sens;
  if (o.sens_method == "fd") {
    sens = sensitivity_finite_difference(assembly, s, fd_h, sopt);
  } else {
    SimOptions sim = sopt.sim;
    sim.record_jacobians = true;
    Trajectory base = simulate(assembly, s, sim);
    sens = sensitivity_variational(assembly, base, sopt);
  }

  std::vector<SnSeries> series;
  if (!c.sync_machines.empty()) series.push_back(sn_sync(sens, c));
  if (!c.gfl_units.empty()) series.push_back(sn_gfl(sens, c));

  if (wants_csv(o.format))
    io::write_file(path_in(o.out_dir, "sensitivity.csv"), io::sensitivity_csv(sens, c, series));
  if (wants_json(o.format))
    io::write_file(path_in(o.out_dir, "sensitivity.json"),
                   io::sensitivity_json(sens, c, series));

  std::cout << "case " << c.name << ": " << describe_fault(c, s) << ", T_cl=" << s.t_cl
            << "s, method=" << o.sens_method << "\n";
  for (const auto& sn : series) {
    PeakResult m = peak(sn);
    std::cout << "m(SN_" << to_string(sn.fleet) << ") = " << m.value << " at s=" << m.at
              << " s (reference bus " << sn.reference_bus << "), lambda = " << 1.0 / m.value
              << "\n";
  }
  if (sens.truncated) std::cout << "note: window truncated by collapse\n";
  return kExitStable;
}

int cmd_cct(const CommonOpts& o, const std::string& probes_text, double fd_h) {
  NetworkCase c = resolve_case(o.case_src);
  FaultScenario s = resolve_scenario(c, o);
  ensure_out_dir(o.out_dir);

  EstimatorOptions eopt = estimator_options(o, fd_h);
  ScenarioAssembly assembly(c, s);
  std::pair<double, double> probes =
      probes_text.empty() ? auto_probes(assembly, s, eopt) : parse_pair(probes_text, "--probes");

  auto t0 = clock_t_::now();
  CctEstimate est = estimate_cct(assembly, s, probes, eopt);
  double wall = std::chrono::duration<double>(clock_t_::now() - t0).count();

  io::write_file(path_in(o.out_dir, "estimate.json"), io::estimate_json(est));

  std::ostringstream table;
  table << "Fault Bus  Tripped Line  Probes           CCT (Proposed Method)\n";
  table << std::string(62, '-') << "\n";
  {
    std::string trip = s.tripped_branch > 0
                           ? std::to_string(c.branches[s.tripped_branch - 1].from_bus) + "-" +
                                 std::to_string(c.branches[s.tripped_branch - 1].to_bus)
                           : "-";
    char line[128];
    std::snprintf(line, sizeof(line), "%-10d %-13s (%.3f, %.3f)   %.4f\n", s.fault_bus,
                  trip.c_str(), probes.first, probes.second, est.t_cr_system);
    table << line;
  }
  io::write_file(path_in(o.out_dir, "estimate.txt"), table.str());

  std::cout << "case " << c.name << ": " << describe_fault(c, s) << "\n";
  std::cout << "probes (" << probes.first << ", " << probes.second << ") s\n";
  for (const auto& r : est.fleets) {
    std::cout << "  " << to_string(r.fleet) << ": m(SN)=(" << r.p1.m_sn << ", " << r.p2.m_sn
              << "), lambda=(" << r.p1.lambda << ", " << r.p2.lambda << ") -> T_cr=" << r.t_cr
              << " s" << (r.low_confidence ? " [low confidence]" : "") << "\n";
  }
  std::cout << "system CCT = " << est.t_cr_system << " s (" << to_string(est.system_fleet)
            << " fleet, " << wall << " s wall)\n";
  if (est.low_confidence)
    std::cout << "warning: extrapolation distance exceeds the validated linear regime\n";
  return kExitStable;
}

int cmd_bisect(const CommonOpts& o, const std::string& bracket_text, double tol) {
  NetworkCase c = resolve_case(o.case_src);
  FaultScenario s = resolve_scenario(c, o);
  ensure_out_dir(o.out_dir);

  std::pair<double, double> bracket0 =
      bracket_text.empty() ? std::pair<double, double>{0.1, 0.7}
                           : parse_pair(bracket_text, "--bracket");

  auto t0 = clock_t_::now();
  CctBracket bracket = bisect_cct(c, s, bracket0, tol, sim_options(o));
  double wall = std::chrono::duration<double>(clock_t_::now() - t0).count();

  io::write_file(path_in(o.out_dir, "bracket.json"), io::bracket_json(bracket));

  std::cout << "case " << c.name << ": " << describe_fault(c, s) << "\n";
  std::cout << "CCT bracket [" << bracket.lower << ", " << bracket.upper << "] s after "
            << bracket.evaluations << " simulations (" << wall << " s wall)\n";
  return kExitStable;
}

struct SweepFault {
  int fault_bus = 0;
  std::string trip;
};

std::vector<SweepFault> parse_faults(const std::string& text) {
  std::vector<SweepFault> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto colon = item.find(':');
    if (colon == std::string::npos)
      throw Error("--faults entries must look like BUS:A-B, got '" + item + "'");
    SweepFault f;
    try {
      f.fault_bus = std::stoi(item.substr(0, colon));
    } catch (const std::exception&) {
      throw Error("cannot parse fault bus in '" + item + "'");
    }
    f.trip = item.substr(colon + 1);
    out.push_back(f);
  }
  return out;
}

int cmd_sweep(const CommonOpts& o, const std::string& faults_text, double tol) {
  NetworkCase c = resolve_case(o.case_src);
  FaultScenario base = resolve_scenario(c, o);
  ensure_out_dir(o.out_dir);

  std::vector<SweepFault> faults = parse_faults(faults_text);
  EstimatorOptions eopt = estimator_options(o, 0.0);

  auto eval = [&](const SweepFault& f) -> io::SweepRow {
    io::SweepRow row;
    row.fault_bus = f.fault_bus;
    row.tripped_line = f.trip.empty() ? "-" : f.trip;
    try {
      FaultScenario s = base;
      s.fault_bus = f.fault_bus;
      s.tripped_branch = parse_trip(c, f.trip);
      ComparisonReport rep = compare_with_tds(c, s, {0.0, 0.0}, tol, {0.1, 0.7}, eopt);
      row.ok = true;
      row.tds_lower = rep.bracket.lower;
      row.tds_upper = rep.bracket.upper;
      row.proposed = rep.estimate.t_cr_system;
      row.contained = rep.contained;
      row.sims_estimate = rep.sims_estimate;
      row.sims_bisect = rep.sims_bisect;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    return row;
  };

  // Faults are independent; evaluate concurrently and aggregate in order.
  std::vector<std::future<io::SweepRow>> futures;
  futures.reserve(faults.size());
  for (const auto& f : faults)
    futures.push_back(std::async(std::launch::async, eval, f));
  std::vector<io::SweepRow> rows;
  rows.reserve(faults.size());
  for (auto& fut : futures) rows.push_back(fut.get());

  if (wants_csv(o.format)) io::write_file(path_in(o.out_dir, "sweep.csv"), io::sweep_csv(rows));
  if (wants_json(o.format))
    io::write_file(path_in(o.out_dir, "sweep.json"), io::sweep_json(rows));

  std::cout << "case " << c.name << ": swept " << rows.size() << " fault(s)\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %-13s %-17s %-10s %s\n", "Fault Bus", "Tripped Line",
                "CCT (TDS)", "Proposed", "Status");
  std::cout << line;
  std::cout << std::string(66, '-') << "\n";
  for (const auto& r : rows) {
    if (r.ok) {
      std::snprintf(line, sizeof(line), "%-10d %-13s [%.4f, %.4f]  %-10.4f %s\n", r.fault_bus,
                    r.tripped_line.c_str(), r.tds_lower, r.tds_upper, r.proposed,
                    r.contained ? "ok" : "OUTSIDE BRACKET");
      std::cout << line;
    } else {
      std::snprintf(line, sizeof(line), "%-10d %-13s %-17s %-10s error: %s\n", r.fault_bus,
                    r.tripped_line.c_str(), "-", "-", r.error.c_str());
      std::cout << line;
    }
  }
  return kExitStable;
}

int cmd_case(const std::string& case_src, const std::string& out_dir, bool list) {
  if (list) {
    for (const auto& name : builtin_case_names()) std::cout << name << "\n";
    return kExitStable;
  }
  NetworkCase c = resolve_case(case_src);
  std::cout << "case " << c.name << ": " << c.description << "\n";
  std::cout << "  " << c.buses.size() << " buses, " << c.branches.size() << " branches, "
            << c.loads.size() << " loads, " << c.sync_machines.size() << " sync machines, "
            << c.gfl_units.size() << " GFL units\n";
  std::cout << "  base " << c.system_base_mva << " MVA, " << c.frequency_hz << " Hz\n";
  if (c.default_scenario)
    std::cout << "  default scenario: " << describe_fault(c, *c.default_scenario) << "\n";
  if (!out_dir.empty()) {
    ensure_out_dir(out_dir);
    save_case(c, path_in(out_dir, c.name + ".json"));
    std::cout << "wrote " << path_in(out_dir, c.name + ".json") << "\n";
  }
  return kExitStable;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"cctkit — transient stability and critical clearing time toolkit"};
  app.require_subcommand(1);

  CommonOpts sim_o, sens_o, cct_o, bisect_o, sweep_o;
  std::string probes_text, bracket_text, faults_text, case_src, case_out;
  double fd_h = 0.0, sens_fd_h = 0.0, tol = 0.01, sweep_tol = 0.01;
  bool case_list = false;

  CLI::App* c_sim = app.add_subcommand("simulate", "run one scenario and classify stability");
  add_common(c_sim, sim_o);
  c_sim->add_flag("--gnuplot", sim_o.gnuplot, "also write a gnuplot script");

  CLI::App* c_sens = app.add_subcommand("sens", "trajectory sensitivity to T_cl + SN series");
  add_common(c_sens, sens_o);
  c_sens->add_option("--sens", sens_o.sens_method, "sensitivity method")
      ->check(CLI::IsMember({"variational", "fd"}));
  c_sens->add_option("--fd-h", sens_fd_h, "finite-difference offset [s] (default dt)");

  CLI::App* c_cct = app.add_subcommand("cct", "two-evaluation CCT estimate");
  add_common(c_cct, cct_o);
  c_cct->add_option("--probes", probes_text, "probe clearing times a,b (default: automatic)");
  c_cct->add_option("--sens", cct_o.sens_method, "sensitivity method")
      ->check(CLI::IsMember({"variational", "fd"}));
  c_cct->add_option("--fd-h", fd_h, "finite-difference offset [s] (default dt)");

  CLI::App* c_bisect = app.add_subcommand("bisect", "TDS bisection CCT bracket");
  add_common(c_bisect, bisect_o);
  c_bisect->add_option("--bracket", bracket_text, "initial bracket a,b (default 0.1,0.7)");
  c_bisect->add_option("--tol", tol, "bracket width tolerance [s]");

  CLI::App* c_sweep = app.add_subcommand("sweep", "estimate + bisect over a fault list");
  add_common(c_sweep, sweep_o);
  c_sweep->add_option("--faults", faults_text, "comma list of BUS:A-B fault entries")
      ->required();
  c_sweep->add_option("--tol", sweep_tol, "bracket width tolerance [s]");

  CLI::App* c_case = app.add_subcommand("case", "inspect or export a case");
  c_case->add_option("--case", case_src, "builtin case name or path");
  c_case->add_option("--out", case_out, "directory to write the normalized case JSON");
  c_case->add_flag("--list", case_list, "list builtin cases");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (c_sim->parsed()) return cmd_simulate(sim_o);
    if (c_sens->parsed()) return cmd_sens(sens_o, sens_fd_h);
    if (c_cct->parsed()) return cmd_cct(cct_o, probes_text, fd_h);
    if (c_bisect->parsed()) return cmd_bisect(bisect_o, bracket_text, tol);
    if (c_sweep->parsed()) return cmd_sweep(sweep_o, faults_text, sweep_tol);
    if (c_case->parsed()) {
      if (!case_list && case_src.empty())
        throw Error("case: pass --case NAME or --list");
      return cmd_case(case_src, case_out, case_list);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  std::cerr << "error: no subcommand\n";
  return kExitError;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace cctkit::cli
