#include "cctkit/cct_estimator.hpp"

#include <chrono>
#include <cmath>
#include <future>
#include <sstream>
#include <thread>

namespace cctkit {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

double snap_to_grid(double t, double dt) { return std::round(t / dt) * dt; }

struct ProbeRun {
  Trajectory traj;
  SensitivityTrajectory sens;
  StabilityVerdict verdict;
};

ProbeRun run_probe(const ScenarioAssembly& assembly, const FaultScenario& tmpl, double t_cl,
                   const EstimatorOptions& options) {
  FaultScenario s = tmpl;
  s.t_cl = t_cl;
  SimOptions sim = options.sensitivity.sim;
  sim.record_jacobians = options.method == SensitivityMethod::Variational;
  ProbeRun run;
  run.traj = simulate(assembly, s, sim);
  run.sens = options.method == SensitivityMethod::Variational
                 ? sensitivity_variational(assembly, run.traj, options.sensitivity)
                 : sensitivity_finite_difference(assembly, s, options.fd_h, options.sensitivity);
  run.verdict = classify_stability(run.traj, options.classifier);
  return run;
}

LambdaPoint lambda_from_sens(const SensitivityTrajectory& sens, const NetworkCase& c,
                             double t_cl, Fleet fleet) {
  SnSeries sn = fleet == Fleet::Sync ? sn_sync(sens, c) : sn_gfl(sens, c);
  PeakResult m = peak(sn);
  if (!(m.value > 0.0))
    throw Error("m(SN) = 0 at T_cl=" + fmt(t_cl) +
                " — zero sensitivity, lambda undefined (no fault in the scenario?)");
  return {t_cl, m.value, 1.0 / m.value, fleet};
}

}  // namespace

double extrapolate_root(const LambdaPoint& p1, const LambdaPoint& p2) {
  if (p1.fleet != p2.fleet) throw Error("extrapolation mixes different fleets");
  const LambdaPoint& a = p1.t_cl <= p2.t_cl ? p1 : p2;
  const LambdaPoint& b = p1.t_cl <= p2.t_cl ? p2 : p1;
  if (a.t_cl == b.t_cl) throw Error("probe clearing times coincide at T_cl=" + fmt(a.t_cl));
  if (a.lambda == b.lambda)
    throw Error("equal lambda at both probes (" + fmt(a.lambda) +
                ") — zero slope, no axis crossing");
  double slope = (b.lambda - a.lambda) / (b.t_cl - a.t_cl);
  if (slope >= 0)
    throw Error("lambda increases between probes (slope " + fmt(slope) +
                "); probes do not straddle an approaching margin");
  return a.t_cl - a.lambda * (b.t_cl - a.t_cl) / (b.lambda - a.lambda);
}

const FleetResult* CctEstimate::fleet_result(Fleet f) const {
  for (const auto& r : fleets)
    if (r.fleet == f) return &r;
  return nullptr;
}

LambdaPoint lambda_at(const ScenarioAssembly& assembly, const FaultScenario& tmpl,
                      double t_cl, Fleet fleet, const EstimatorOptions& options) {
  ProbeRun run = run_probe(assembly, tmpl, t_cl, options);
  return lambda_from_sens(run.sens, assembly.net_case(), t_cl, fleet);
}

LambdaPoint lambda_at(const NetworkCase& c, const FaultScenario& tmpl, double t_cl,
                      Fleet fleet, const EstimatorOptions& options) {
  ScenarioAssembly assembly(c, tmpl);
  return lambda_at(assembly, tmpl, t_cl, fleet, options);
}

CctEstimate estimate_cct(const ScenarioAssembly& assembly, const FaultScenario& tmpl,
                         std::pair<double, double> probes, const EstimatorOptions& options) {
  const NetworkCase& c = assembly.net_case();
  double t1 = std::min(probes.first, probes.second);
  double t2 = std::max(probes.first, probes.second);
  if (t1 == t2) throw Error("the two probe clearing times must differ");
  if (!(t1 > 0)) throw Error("probe clearing times must be positive");

  // The two probe evaluations are independent; run them concurrently when
  // the hardware can actually overlap them.
  ProbeRun run1, run2;
  if (std::thread::hardware_concurrency() > 1) {
    auto fut = std::async(std::launch::async, run_probe, std::cref(assembly), std::cref(tmpl),
                          t2, std::cref(options));
    run1 = run_probe(assembly, tmpl, t1, options);
    run2 = fut.get();
  } else {
    run1 = run_probe(assembly, tmpl, t1, options);
    run2 = run_probe(assembly, tmpl, t2, options);
  }

  for (const ProbeRun* run : {&run1, &run2}) {
    if (!run->verdict.stable)
      throw Error("probe T_cl=" + fmt(run->traj.scenario.t_cl) + " is unstable (" +
                  to_string(run->verdict.reason) + " at t=" +
                  fmt(run->verdict.first_violation_time.value_or(0.0)) +
                  "); move the probes to earlier clearing times");
  }

  CctEstimate out;
  out.probes = {t1, t2};
  std::vector<Fleet> fleets;
  if (!c.sync_machines.empty()) fleets.push_back(Fleet::Sync);
  if (!c.gfl_units.empty()) fleets.push_back(Fleet::Gfl);
  if (fleets.empty()) throw Error("case has no dynamic devices");

  for (Fleet fleet : fleets) {
    FleetResult r;
    r.fleet = fleet;
    r.p1 = lambda_from_sens(run1.sens, c, t1, fleet);
    r.p2 = lambda_from_sens(run2.sens, c, t2, fleet);
    r.t_cr = extrapolate_root(r.p1, r.p2);
    r.slope = (r.p2.lambda - r.p1.lambda) / (r.p2.t_cl - r.p1.t_cl);
    r.extrapolation_distance = r.t_cr - r.p2.t_cl;
    r.low_confidence = r.extrapolation_distance > options.low_confidence_distance;
    out.fleets.push_back(r);
  }

  // Minimum over fleets is the system CCT; strict comparison keeps the sync
  // fleet on ties (fleets are ordered sync first).
  const FleetResult* best = &out.fleets.front();
  for (const auto& r : out.fleets)
    if (r.t_cr < best->t_cr) best = &r;
  out.t_cr_system = best->t_cr;
  out.system_fleet = best->fleet;
  out.low_confidence = best->low_confidence;
  return out;
}

CctEstimate estimate_cct(const NetworkCase& c, const FaultScenario& tmpl,
                         std::pair<double, double> probes, const EstimatorOptions& options) {
  ScenarioAssembly assembly(c, tmpl);
  return estimate_cct(assembly, tmpl, probes, options);
}

std::pair<double, double> auto_probes(const ScenarioAssembly& assembly,
                                      const FaultScenario& tmpl,
                                      const EstimatorOptions& options) {
  const double dt = tmpl.dt;
  auto stable_at = [&](double t_cl) {
    FaultScenario s = tmpl;
    s.t_cl = snap_to_grid(t_cl, dt);
    Trajectory traj = simulate(assembly, s, options.sensitivity.sim);
    return classify_stability(traj, options.classifier).stable;
  };

  // Exploratory sweep for a crude stable/unstable bracket (stable, b).
  double stable = 0.0, b = 0.0;
  for (double t : {0.15, 0.30, 0.45}) {
    if (stable_at(t))
      stable = t;
    else {
      b = t;
      break;
    }
  }
  if (b == 0.0)
    throw Error("no unstable clearing time found up to 0.45 s — fault appears benign, "
                "specify probes explicitly");

  // Tighten the bracket so the probes can be placed a known distance from
  // the margin.
  while (b - stable > 0.03 + 1e-9) {
    double mid = snap_to_grid(0.5 * (stable + b), dt);
    if (mid <= stable + 0.5 * dt || mid >= b - 0.5 * dt) break;  // grid exhausted
    (stable_at(mid) ? stable : b) = mid;
  }

  // Probes sit just below the refined stable bound: close enough to the
  // margin for the linear lambda regime, but standing off the terminal
  // region where the lambda curve flattens or cliffs.
  for (int retreat = 0; retreat <= 3; ++retreat) {
    double hi = snap_to_grid(std::max(b - 0.04, stable - 0.01) - 0.04 * retreat, dt);
    double lo = snap_to_grid(hi - 0.02, dt);
    if (!(lo > 0))
      throw Error("automatic probe selection ran out of room below T_cl=" + fmt(b));
    if (hi <= stable + 1e-12 || stable_at(hi)) return {lo, hi};
  }
  throw Error("automatic probes still unstable after three retreats below T_cl=" + fmt(b) +
              "; specify probes explicitly");
}

ComparisonReport compare_with_tds(const NetworkCase& c, const FaultScenario& tmpl,
                                  std::pair<double, double> probes, double tol,
                                  std::pair<double, double> bracket0,
                                  const EstimatorOptions& options) {
  using clock = std::chrono::steady_clock;
  ScenarioAssembly assembly(c, tmpl);

  if (probes.first <= 0 || probes.second <= 0) probes = auto_probes(assembly, tmpl, options);

  ComparisonReport report;
  report.tol = tol;

  auto t0 = clock::now();
  report.estimate = estimate_cct(assembly, tmpl, probes, options);
  report.wall_estimate_s = std::chrono::duration<double>(clock::now() - t0).count();
  // Structural counts (one simulation per probe / per bisection evaluation);
  // the global counter is unusable here because sweeps run faults
  // concurrently. FD sensitivities add two perturbed runs per probe.
  report.sims_estimate =
      options.method == SensitivityMethod::Variational ? 2 : 6;

  t0 = clock::now();
  SimOptions sim = options.sensitivity.sim;
  double lo = bracket0.first, hi = bracket0.second;
  for (int attempt = 0;; ++attempt) {
    try {
      report.bracket = bisect_cct(assembly, tmpl, {lo, hi}, tol, sim);
      break;
    } catch (const Error&) {
      if (attempt >= 3) throw;
      lo = std::max(tmpl.dt, snap_to_grid(lo / 2, tmpl.dt));
      hi += 0.3;
    }
  }
  report.wall_bisect_s = std::chrono::duration<double>(clock::now() - t0).count();
  report.sims_bisect = report.bracket.evaluations;

  report.contained = report.bracket.lower - tol <= report.estimate.t_cr_system &&
                     report.estimate.t_cr_system <= report.bracket.upper + tol;
  return report;
}

}  // namespace cctkit
