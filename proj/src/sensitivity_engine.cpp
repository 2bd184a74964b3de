#include "cctkit/sensitivity_engine.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace cctkit {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// U = -D^-1 C W with a conditioning guard: the DAE stops being index-1 when
// ds/dy turns singular, which physically signals proximity to collapse.
Eigen::VectorXd recover_u(const Eigen::MatrixXd& dsdx, const Eigen::MatrixXd& dsdy,
                          const Eigen::VectorXd& w, double s) {
  if (dsdy.rows() == 0) return Eigen::VectorXd(0);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(dsdy);
  if (!lu.isInvertible()) {
    Eigen::VectorXd diag = lu.matrixLU().diagonal().cwiseAbs();
    double cond = diag.minCoeff() > 0 ? diag.maxCoeff() / diag.minCoeff()
                                      : std::numeric_limits<double>::infinity();
    throw Error("ds/dy singular at s=" + fmt(s) +
                " (pivot ratio " + fmt(cond) + "); system is not index-1 here — "
                "likely close to algebraic collapse");
  }
  return -(lu.solve(dsdx * w));
}

struct PostJacobianSource {
  const ScenarioAssembly& assembly;
  const Trajectory& base;
  const ReducedNetwork& post;
  int kcl;

  // Returns the recorded blocks by reference when the base run captured
  // them, otherwise rebuilds into the caller's scratch slot.
  const StepJacobians& get(int s, StepJacobians& scratch) const {
    if (!base.post_jacobians.empty()) return base.post_jacobians[s];
    const Eigen::VectorXd& x = base.states[kcl + s];
    Eigen::VectorXd y = assembly.model().pack_y(post, base.algebraics[kcl + s]);
    JacobianBlocks b = assembly.model().jacobian_blocks(post, x, y);
    scratch = {b.reduced(), std::move(b.dsdx), std::move(b.dsdy)};
    return scratch;
  }
};

}  // namespace

Alignment alignment_from_string(const std::string& s) {
  if (s == "elapsed") return Alignment::Elapsed;
  if (s == "absolute") return Alignment::Absolute;
  throw Error("unknown alignment '" + s + "' (expected elapsed or absolute)");
}

std::string to_string(Alignment a) {
  return a == Alignment::Elapsed ? "elapsed" : "absolute";
}

std::string to_string(Fleet fleet) { return fleet == Fleet::Sync ? "sync" : "gfl"; }

namespace detail {

std::vector<Eigen::VectorXd> integrate_ltv(const std::vector<Eigen::MatrixXd>& m, double dt,
                                           const Eigen::VectorXd& w0, Integrator integrator) {
  const int n = static_cast<int>(w0.size());
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  std::vector<Eigen::VectorXd> w;
  w.reserve(m.size());
  w.push_back(w0);
  for (size_t k = 0; k + 1 < m.size(); ++k) {
    const Eigen::VectorXd& wk = w.back();
    if (integrator == Integrator::Trapezoidal) {
      Eigen::VectorXd rhs = (eye + 0.5 * dt * m[k]) * wk;
      w.push_back((eye - 0.5 * dt * m[k + 1]).partialPivLu().solve(rhs));
    } else {
      // RK4 on the frozen-per-step LTV system; the unavailable midpoint
      // matrix is replaced by the endpoint average.
      Eigen::MatrixXd mid = 0.5 * (m[k] + m[k + 1]);
      Eigen::VectorXd k1 = m[k] * wk;
      Eigen::VectorXd k2 = mid * (wk + 0.5 * dt * k1);
      Eigen::VectorXd k3 = mid * (wk + 0.5 * dt * k2);
      Eigen::VectorXd k4 = m[k + 1] * (wk + dt * k3);
      w.push_back(wk + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    }
  }
  return w;
}

}  // namespace detail

SensitivityTrajectory sensitivity_variational(const ScenarioAssembly& assembly,
                                              const Trajectory& base,
                                              const SensitivityOptions& options) {
  const SystemModel& model = assembly.model();
  const int kcl = base.marks.clearing;
  if (kcl < 0)
    throw Error("scenario has no clearing instant inside the horizon — "
                "nothing to differentiate");
  if (base.size() <= kcl)
    throw Error("base trajectory collapses at t=" + fmt(base.collapse_time) +
                " before the fault clears; sensitivity undefined");

  const ReducedNetwork& during = assembly.net(NetworkPhase::DuringFault);
  const ReducedNetwork& post = assembly.net(NetworkPhase::PostFault);
  const double dt = base.scenario.dt;

  // IC: the during-fault vector field at the clearing point. Holding the
  // pre-switch algebraics makes this the sensitivity of x_cl to fault
  // duration; sensitivity is continuous across the switch in elapsed time.
  const Eigen::VectorXd& x_cl = base.states[kcl];
  const AlgebraicSolution& y_minus =
      base.clearing_pre_switch ? *base.clearing_pre_switch : base.algebraics[kcl];
  Eigen::VectorXd w0 = model.rhs(during, x_cl, model.pack_y(during, y_minus));
  if (options.alignment == Alignment::Absolute)
    w0 -= model.rhs(post, x_cl, model.pack_y(post, base.algebraics[kcl]));

  PostJacobianSource jac{assembly, base, post, kcl};
  const int n_post = base.size() - kcl;  // points at s = 0 .. n_post-1
  const int n = static_cast<int>(w0.size());

  SensitivityTrajectory out;
  out.method = SensitivityMethod::Variational;
  out.alignment = options.alignment;
  out.base_t_cl = base.scenario.t_cl;
  out.layout = base.layout;
  out.elapsed.resize(n_post);
  out.w.reserve(n_post);
  out.u.reserve(n_post);
  out.w.push_back(w0);

  // Single forward pass: recover U at s, then advance W to s+1 with the same
  // scheme as the base integration, on per-step frozen Jacobians.
  StepJacobians scratch_a, scratch_b;
  Eigen::MatrixXd a(n, n);
  const StepJacobians* cur = &jac.get(0, scratch_a);
  for (int s = 0; s < n_post; ++s) {
    out.elapsed[s] = s * dt;
    out.u.push_back(recover_u(cur->dsdx, cur->dsdy, out.w[s], s * dt));
    if (s + 1 == n_post) break;
    const StepJacobians* next = &jac.get(s + 1, s % 2 ? scratch_a : scratch_b);
    const Eigen::VectorXd& wk = out.w[s];
    if (options.sim.integrator == Integrator::Trapezoidal) {
      Eigen::VectorXd rhs = wk + 0.5 * dt * (cur->m * wk);
      if (next->trap_lu) {
        out.w.push_back(next->trap_lu->solve(rhs));
      } else {
        a.noalias() = -0.5 * dt * next->m;
        a.diagonal().array() += 1.0;
        Eigen::PartialPivLU<Eigen::Ref<Eigen::MatrixXd>> lu(a);
        out.w.push_back(lu.solve(rhs));
      }
    } else {
      // RK4 on the frozen-per-step system; the unavailable midpoint matrix
      // is replaced by the endpoint average.
      Eigen::MatrixXd mid = 0.5 * (cur->m + next->m);
      Eigen::VectorXd k1 = cur->m * wk;
      Eigen::VectorXd k2 = mid * (wk + 0.5 * dt * k1);
      Eigen::VectorXd k3 = mid * (wk + 0.5 * dt * k2);
      Eigen::VectorXd k4 = next->m * (wk + dt * k3);
      out.w.push_back(wk + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    }
    cur = next;
  }
  out.truncated = base.algebraic_collapse;
  return out;
}

SensitivityTrajectory sensitivity_variational(const NetworkCase& c,
                                              const FaultScenario& scenario,
                                              const SensitivityOptions& options) {
  ScenarioAssembly assembly(c, scenario);
  SimOptions sim = options.sim;
  sim.record_jacobians = true;
  Trajectory base = simulate(assembly, scenario, sim);
  return sensitivity_variational(assembly, base, options);
}

SensitivityTrajectory sensitivity_finite_difference(const ScenarioAssembly& assembly,
                                                    const FaultScenario& scenario, double h,
                                                    const SensitivityOptions& options) {
  const double dt = scenario.dt;
  if (h <= 0) h = dt;
  if (std::abs(h / dt - std::lround(h / dt)) > 1e-9)
    throw Error("finite-difference offset h=" + fmt(h) + " must be a multiple of dt=" + fmt(dt));
  if (scenario.t_cl - h <= 0)
    throw Error("finite-difference offset h=" + fmt(h) + " does not fit below T_cl=" +
                fmt(scenario.t_cl));

  auto run = [&](double t_cl) {
    FaultScenario s = scenario;
    s.t_cl = t_cl;
    return simulate(assembly, s, options.sim);
  };
  Trajectory plus = run(scenario.t_cl + h);
  Trajectory minus = run(scenario.t_cl - h);

  for (const Trajectory* t : {&plus, &minus}) {
    if (t->marks.clearing < 0 || t->size() <= t->marks.clearing)
      throw Error("perturbed run at T_cl=" + fmt(t->scenario.t_cl) +
                  " does not reach its clearing instant; finite difference undefined");
  }

  const SystemModel& model = assembly.model();
  const ReducedNetwork& post = assembly.net(NetworkPhase::PostFault);

  // Sample index of elapsed step s in each run. Elapsed alignment anchors at
  // each run's own clearing index; absolute alignment anchors both runs at
  // the same absolute time (the later clearing, so both are post-fault).
  int base_p, base_m;
  if (options.alignment == Alignment::Elapsed) {
    base_p = plus.marks.clearing;
    base_m = minus.marks.clearing;
  } else {
    base_p = std::max(plus.marks.clearing, minus.marks.clearing);
    base_m = base_p;
  }
  const int n_post = std::min(plus.size() - base_p, minus.size() - base_m);
  if (n_post <= 0)
    throw Error("perturbed runs share no post-fault window; finite difference undefined");

  SensitivityTrajectory out;
  out.method = SensitivityMethod::FiniteDifference;
  out.alignment = options.alignment;
  out.base_t_cl = scenario.t_cl;
  out.layout = plus.layout;
  out.elapsed.resize(n_post);
  out.w.resize(n_post);
  out.u.resize(n_post);
  const double scale = 1.0 / (2.0 * h);
  for (int s = 0; s < n_post; ++s) {
    out.elapsed[s] = s * dt;
    out.w[s] = scale * (plus.states[base_p + s] - minus.states[base_m + s]);
    out.u[s] = scale * (model.pack_y(post, plus.algebraics[base_p + s]) -
                        model.pack_y(post, minus.algebraics[base_m + s]));
  }
  // The window is shorter than the base horizon allows when a run collapsed.
  out.truncated = plus.algebraic_collapse || minus.algebraic_collapse;
  return out;
}

SensitivityTrajectory sensitivity_finite_difference(const NetworkCase& c,
                                                    const FaultScenario& scenario, double h,
                                                    const SensitivityOptions& options) {
  ScenarioAssembly assembly(c, scenario);
  return sensitivity_finite_difference(assembly, scenario, h, options);
}

namespace {

int resolve_reference_sync(const NetworkCase& c, int reference_bus) {
  if (c.sync_machines.empty()) throw Error("case has no synchronous machines");
  if (reference_bus == 0) {
    int best = 0;
    for (size_t i = 1; i < c.sync_machines.size(); ++i)
      if (c.sync_machines[i].h > c.sync_machines[best].h) best = static_cast<int>(i);
    return best;
  }
  for (size_t i = 0; i < c.sync_machines.size(); ++i)
    if (c.sync_machines[i].bus == reference_bus) return static_cast<int>(i);
  throw Error("reference bus " + std::to_string(reference_bus) +
              " does not host a synchronous machine");
}

int resolve_reference_gfl(const NetworkCase& c, int reference_bus) {
  if (c.gfl_units.empty()) throw Error("case has no GFL units");
  if (reference_bus == 0) {
    int best = 0;
    for (size_t i = 1; i < c.gfl_units.size(); ++i)
      if (c.gfl_units[i].h_v > c.gfl_units[best].h_v) best = static_cast<int>(i);
    return best;
  }
  for (size_t i = 0; i < c.gfl_units.size(); ++i)
    if (c.gfl_units[i].bus == reference_bus) return static_cast<int>(i);
  throw Error("reference bus " + std::to_string(reference_bus) + " does not host a GFL unit");
}

}  // namespace

SnSeries sn_sync(const SensitivityTrajectory& sens, const NetworkCase& c, int reference_bus) {
  const StateLayout& layout = sens.layout;
  int j = resolve_reference_sync(c, reference_bus);
  SnSeries out;
  out.fleet = Fleet::Sync;
  out.reference_bus = c.sync_machines[j].bus;
  out.elapsed = sens.elapsed;
  out.values.resize(sens.size());
  for (int s = 0; s < sens.size(); ++s) {
    const Eigen::VectorXd& w = sens.w[s];
    double acc = 0.0;
    for (int i = 0; i < layout.n_sync; ++i) {
      double rel = w[layout.delta(i)] - w[layout.delta(j)];
      acc += rel * rel + w[layout.omega(i)] * w[layout.omega(i)];
    }
    out.values[s] = std::sqrt(acc);
  }
  return out;
}

SnSeries sn_gfl(const SensitivityTrajectory& sens, const NetworkCase& c, int reference_bus) {
  const StateLayout& layout = sens.layout;
  int k = resolve_reference_gfl(c, reference_bus);
  SnSeries out;
  out.fleet = Fleet::Gfl;
  out.reference_bus = c.gfl_units[k].bus;
  out.elapsed = sens.elapsed;
  out.values.resize(sens.size());
  for (int s = 0; s < sens.size(); ++s) {
    const Eigen::VectorXd& w = sens.w[s];
    double acc = 0.0;
    for (int i = 0; i < layout.n_gfl; ++i) {
      double rel = w[layout.theta_p(i)] - w[layout.theta_p(k)];
      acc += w[layout.x_v(i)] * w[layout.x_v(i)] + w[layout.x_p(i)] * w[layout.x_p(i)] +
             w[layout.p_v(i)] * w[layout.p_v(i)] + rel * rel;
    }
    out.values[s] = std::sqrt(acc);
  }
  return out;
}

PeakResult peak(const SnSeries& sn, std::pair<double, double> window) {
  PeakResult best;
  bool found = false;
  for (size_t i = 0; i < sn.elapsed.size(); ++i) {
    double s = sn.elapsed[i];
    if (s < window.first - 1e-9 || s > window.second + 1e-9) continue;
    if (!found || sn.values[i] > best.value) {
      best.value = sn.values[i];
      best.at = s;
      found = true;
    }
  }
  if (!found)
    throw Error("window [" + fmt(window.first) + ", " + fmt(window.second) +
                "] contains no sensitivity samples");
  return best;
}

PeakResult peak(const SnSeries& sn) {
  if (sn.elapsed.empty()) throw Error("empty SN series has no peak");
  return peak(sn, {sn.elapsed.front(), sn.elapsed.back()});
}

}  // namespace cctkit
