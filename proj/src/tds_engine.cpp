#include "cctkit/tds_engine.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace cctkit {

namespace {

std::atomic<long> g_sim_count{0};

int grid_index(double t, double dt) { return static_cast<int>(std::lround(t / dt)); }

std::string fmt_time(double t) {
  std::ostringstream os;
  os.precision(6);
  os << t;
  return os.str();
}

}  // namespace

namespace detail {
long simulation_count() { return g_sim_count.load(); }
}  // namespace detail

Integrator integrator_from_string(const std::string& s) {
  if (s == "trap" || s == "trapezoidal") return Integrator::Trapezoidal;
  if (s == "rk4") return Integrator::Rk4;
  throw Error("unknown integrator '" + s + "' (expected trap or rk4)");
}

std::string to_string(InstabilityReason reason) {
  switch (reason) {
    case InstabilityReason::Converged: return "converged";
    case InstabilityReason::AngleSeparation: return "angle_separation";
    case InstabilityReason::PllDivergence: return "pll_divergence";
    case InstabilityReason::AlgebraicCollapse: return "algebraic_collapse";
  }
  return "unknown";
}

ScenarioAssembly::ScenarioAssembly(const NetworkCase& c, const FaultScenario& scenario)
    : case_(&c), fault_bus_(scenario.fault_bus), tripped_branch_(scenario.tripped_branch) {
  auto report = validate_case(c);
  if (!report.ok()) throw Error("invalid case: " + report.to_string());
  validate_scenario(c, scenario);

  pf_ = initial_power_flow(c);
  auto y_pre = build_admittance(c, NetworkPhase::PreFault, scenario);
  pre_ = reduce_to_sources(y_pre, c, pf_);
  if (fault_bus_ > 0) {
    auto y_during = build_admittance(c, NetworkPhase::DuringFault, scenario);
    during_ = reduce_to_sources(y_during, c, pf_);
  } else {
    during_ = pre_;
  }
  if (tripped_branch_ > 0) {
    auto y_post = build_admittance(c, NetworkPhase::PostFault, scenario);
    post_ = reduce_to_sources(y_post, c, pf_);
  } else {
    post_ = pre_;
  }
  init_ = init_devices(c, pf_, pre_);
  model_.emplace(c, init_.machines);
}

const ReducedNetwork& ScenarioAssembly::net(NetworkPhase phase) const {
  switch (phase) {
    case NetworkPhase::PreFault: return pre_;
    case NetworkPhase::DuringFault: return during_;
    case NetworkPhase::PostFault: return post_;
  }
  return pre_;
}

namespace {

struct Stepper {
  const SystemModel& model;
  const SimOptions& opts;
  // When set, receives the Jacobians of the step's final Newton iterate
  // (trap) or blocks rebuilt at the accepted point (rk4). The trap capture
  // sits within O(newton_tol) of the accepted point — free to record, and
  // far below the integrator's own O(dt^2) error.
  StepJacobians* capture = nullptr;

  // One implicit trapezoidal step with Newton on the differential states and
  // a nested algebraic solve per iterate. Returns false on any solver
  // failure (treated as collapse by the caller).
  bool trap(const ReducedNetwork& net, double dt, const Eigen::VectorXd& x,
            const AlgebraicSolution& y, Eigen::VectorXd& x_out,
            AlgebraicSolution& y_out) const {
    const int n = model.nx();
    Eigen::VectorXd f0 = model.rhs(net, x, model.pack_y(net, y));
    Eigen::VectorXd xn = x + dt * f0;  // explicit predictor
    AlgebraicSolution yn = y;
    for (int it = 0; it < opts.newton_max_iters; ++it) {
      AlgebraicSolution sol = model.solve_network(net, xn, opts.algebraic, &yn);
      if (!sol.converged) return false;
      yn = sol;
      Eigen::VectorXd ypk = model.pack_y(net, yn);
      Eigen::VectorXd fn = model.rhs(net, xn, ypk);
      Eigen::VectorXd g = xn - x - 0.5 * dt * (f0 + fn);
      JacobianBlocks blocks = model.jacobian_blocks(net, xn, ypk);
      Eigen::MatrixXd reduced = blocks.reduced();
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd::Identity(n, n) -
                                              0.5 * dt * reduced);
      Eigen::VectorXd dx = lu.solve(-g);
      xn += dx;
      if (dx.cwiseAbs().maxCoeff() < opts.newton_tol * (1.0 + xn.cwiseAbs().maxCoeff())) {
        AlgebraicSolution fin = model.solve_network(net, xn, opts.algebraic, &yn);
        if (!fin.converged) return false;
        if (capture)
          *capture = {std::move(reduced), std::move(blocks.dsdx), std::move(blocks.dsdy),
                      std::move(lu)};
        x_out = xn;
        y_out = fin;
        return true;
      }
    }
    return false;
  }

  bool rk4(const ReducedNetwork& net, double dt, const Eigen::VectorXd& x,
           const AlgebraicSolution& y, Eigen::VectorXd& x_out,
           AlgebraicSolution& y_out) const {
    auto stage = [&](const Eigen::VectorXd& xs, const AlgebraicSolution& warm,
                     AlgebraicSolution& ys, Eigen::VectorXd& k) {
      ys = model.solve_network(net, xs, opts.algebraic, &warm);
      if (!ys.converged) return false;
      k = model.rhs(net, xs, model.pack_y(net, ys));
      return true;
    };
    Eigen::VectorXd k1 = model.rhs(net, x, model.pack_y(net, y));
    AlgebraicSolution y2, y3, y4;
    Eigen::VectorXd k2, k3, k4;
    if (!stage(x + 0.5 * dt * k1, y, y2, k2)) return false;
    if (!stage(x + 0.5 * dt * k2, y2, y3, k3)) return false;
    if (!stage(x + dt * k3, y3, y4, k4)) return false;
    Eigen::VectorXd xn = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    AlgebraicSolution fin = model.solve_network(net, xn, opts.algebraic, &y4);
    if (!fin.converged) return false;
    if (capture) {
      JacobianBlocks b = model.jacobian_blocks(net, xn, model.pack_y(net, fin));
      *capture = {b.reduced(), std::move(b.dsdx), std::move(b.dsdy)};
    }
    x_out = xn;
    y_out = fin;
    return true;
  }

  bool step(const ReducedNetwork& net, double dt, const Eigen::VectorXd& x,
            const AlgebraicSolution& y, Eigen::VectorXd& x_out,
            AlgebraicSolution& y_out) const {
    return opts.integrator == Integrator::Trapezoidal ? trap(net, dt, x, y, x_out, y_out)
                                                      : rk4(net, dt, x, y, x_out, y_out);
  }
};

}  // namespace

Trajectory simulate(const NetworkCase& c, const FaultScenario& scenario,
                    const SimOptions& options) {
  ScenarioAssembly assembly(c, scenario);
  return simulate(assembly, scenario, options);
}

Trajectory simulate(const ScenarioAssembly& assembly, const FaultScenario& scenario,
                    const SimOptions& options) {
  const NetworkCase& c = assembly.net_case();
  if (scenario.fault_bus != assembly.fault_bus() ||
      scenario.tripped_branch != assembly.tripped_branch())
    throw Error("scenario fault does not match the assembly it was built for");
  validate_scenario(c, scenario);

  const SystemModel& model = assembly.model();
  const double dt = scenario.dt;
  const int n_steps = grid_index(scenario.horizon, dt);

  Trajectory traj;
  traj.layout = model.layout();
  traj.scenario = scenario;
  const int k1 = grid_index(scenario.t1, dt);
  const int kcl = grid_index(scenario.clearing_time(), dt);
  if (k1 <= n_steps) traj.marks.fault_on = k1;
  if (kcl <= n_steps && k1 <= n_steps) traj.marks.clearing = kcl;

  // Interval k spans [t_k, t_{k+1}); events at t1 / t_cl switch the network
  // seen by the interval that starts there.
  auto interval_net = [&](int k) -> const ReducedNetwork* {
    if (!scenario.has_fault()) return &assembly.net(NetworkPhase::PreFault);
    if (k < k1) return &assembly.net(NetworkPhase::PreFault);
    if (k < kcl) return &assembly.net(NetworkPhase::DuringFault);
    return &assembly.net(NetworkPhase::PostFault);
  };

  Stepper stepper{model, options};
  Eigen::VectorXd e_mag, delta, p_v, theta_p;

  Eigen::VectorXd x = assembly.init().x0.to_vector();
  AlgebraicSolution y = assembly.init().y0;
  const ReducedNetwork* cur = interval_net(0);

  traj.times.reserve(n_steps + 1);
  traj.states.reserve(n_steps + 1);
  traj.algebraics.reserve(n_steps + 1);

  const bool recording = options.record_jacobians && traj.marks.clearing >= 0;
  StepJacobians captured;

  for (int k = 0; k <= n_steps; ++k) {
    const double t = k * dt;
    const ReducedNetwork* net = (k < n_steps) ? interval_net(k) : cur;
    if (net != cur) {
      // Topology switch at t_k: state carries over, algebraics re-solve.
      if (k == kcl) traj.clearing_pre_switch = y;
      AlgebraicSolution sw = model.solve_network(*net, x, options.algebraic, &y);
      if (!sw.converged) {
        traj.algebraic_collapse = true;
        traj.collapse_time = t;
        break;
      }
      y = sw;
      cur = net;
    }
    if (y.v_mag.size() == 0) {
      model.unpack(x, e_mag, delta, p_v, theta_p);
      recover_bus_voltages(*cur, c, e_mag, delta, y);
    }
    traj.times.push_back(t);
    traj.states.push_back(x);
    traj.algebraics.push_back(y);
    if (recording && k >= kcl) {
      if (k == kcl) {
        // First post-clearing point comes from the switch re-solve, not a
        // step, so no captured Jacobians exist yet.
        JacobianBlocks b = model.jacobian_blocks(*cur, x, model.pack_y(*cur, y));
        traj.post_jacobians.push_back({b.reduced(), b.dsdx, b.dsdy});
      } else {
        traj.post_jacobians.push_back(std::move(captured));
      }
    }
    if (k == n_steps) break;

    stepper.capture = (recording && k + 1 > kcl) ? &captured : nullptr;
    Eigen::VectorXd x_next;
    AlgebraicSolution y_next;
    if (!stepper.step(*cur, dt, x, y, x_next, y_next)) {
      traj.algebraic_collapse = true;
      traj.collapse_time = (k + 1) * dt;
      break;
    }
    x = x_next;
    y = y_next;
    model.unpack(x, e_mag, delta, p_v, theta_p);
    recover_bus_voltages(*cur, c, e_mag, delta, y);
  }

  g_sim_count.fetch_add(1);
  return traj;
}

StabilityVerdict classify_stability(const Trajectory& traj, const ClassifierOptions& options) {
  const StateLayout& layout = traj.layout;
  StabilityVerdict verdict;

  // PLL run-length trackers: start time of the current over-threshold run.
  std::vector<double> run_start(layout.n_gfl, -1.0);

  for (int k = 0; k < traj.size(); ++k) {
    const double t = traj.times[k];
    const Eigen::VectorXd& x = traj.states[k];
    if (layout.n_sync >= 2) {
      double lo = x[layout.delta(0)], hi = lo;
      for (int i = 1; i < layout.n_sync; ++i) {
        lo = std::min(lo, x[layout.delta(i)]);
        hi = std::max(hi, x[layout.delta(i)]);
      }
      if (hi - lo > options.angle_separation) {
        verdict.stable = false;
        verdict.reason = InstabilityReason::AngleSeparation;
        verdict.first_violation_time = t;
        return verdict;
      }
    }
    const AlgebraicSolution& alg = traj.algebraics[k];
    for (int j = 0; j < layout.n_gfl; ++j) {
      double err = std::abs(alg.th_gfl[j] - x[layout.theta_p(j)]);
      if (err > options.pll_error) {
        if (run_start[j] < 0) run_start[j] = t;
        if (t - run_start[j] >= options.pll_hold) {
          verdict.stable = false;
          verdict.reason = InstabilityReason::PllDivergence;
          verdict.first_violation_time = t;
          return verdict;
        }
      } else {
        run_start[j] = -1.0;
      }
    }
  }

  if (traj.algebraic_collapse) {
    verdict.stable = false;
    verdict.reason = InstabilityReason::AlgebraicCollapse;
    verdict.first_violation_time = traj.collapse_time;
    return verdict;
  }

  if (traj.scenario.has_fault() && !traj.times.empty() &&
      traj.times.back() < traj.scenario.clearing_time() - 0.5 * traj.scenario.dt)
    throw Error("trajectory ends at t=" + fmt_time(traj.times.back()) +
                " before the fault is cleared at t=" + fmt_time(traj.scenario.clearing_time()) +
                "; no verdict possible");
  if (traj.times.empty()) throw Error("cannot classify an empty trajectory");
  return verdict;
}

CctBracket bisect_cct(const NetworkCase& c, const FaultScenario& tmpl,
                      std::pair<double, double> bracket0, double tol,
                      const SimOptions& options) {
  ScenarioAssembly assembly(c, tmpl);
  return bisect_cct(assembly, tmpl, bracket0, tol, options);
}

CctBracket bisect_cct(const ScenarioAssembly& assembly, const FaultScenario& tmpl,
                      std::pair<double, double> bracket0, double tol,
                      const SimOptions& options) {
  const double dt = tmpl.dt;
  if (!(tol > 0)) throw Error("bisection tolerance must be positive");
  if (tol < dt - 1e-12)
    throw Error("bisection tolerance " + fmt_time(tol) + " is finer than the time grid dt=" +
                fmt_time(dt) + "; clearing times are grid-snapped");
  if (!tmpl.has_fault()) throw Error("bisection needs a scenario with a fault to clear");

  auto snap = [&](double t) { return std::round(t / dt) * dt; };
  double lo = snap(bracket0.first);
  double hi = snap(bracket0.second);
  if (!(lo > 0) || hi <= lo + 0.5 * dt)
    throw Error("invalid clearing-time bracket [" + fmt_time(bracket0.first) + ", " +
                fmt_time(bracket0.second) + "] after grid snapping");

  CctBracket out;
  auto stable_at = [&](double t_cl) {
    FaultScenario s = tmpl;
    s.t_cl = t_cl;
    Trajectory traj = simulate(assembly, s, options);
    bool stable = classify_stability(traj).stable;
    ++out.evaluations;
    out.log.emplace_back(t_cl, stable);
    return stable;
  };

  if (!stable_at(lo))
    throw Error("bracket lower endpoint T_cl=" + fmt_time(lo) +
                " is already unstable; widen the bracket downward");
  if (stable_at(hi))
    throw Error("bracket upper endpoint T_cl=" + fmt_time(hi) +
                " is still stable; widen the bracket upward");

  while (hi - lo > tol + 1e-9) {
    double mid = snap(0.5 * (lo + hi));
    if (mid <= lo + 0.5 * dt || mid >= hi - 0.5 * dt) break;  // grid exhausted
    if (stable_at(mid))
      lo = mid;
    else
      hi = mid;
  }

  out.lower = lo;
  out.upper = hi;
  return out;
}

}  // namespace cctkit
