#include "cctkit/network_solver.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

namespace cctkit {

namespace {

constexpr Complex kJ{0.0, 1.0};

double wrap_to_pi(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0) a += 2.0 * M_PI;
  return a - M_PI;
}

std::string join_ids(const std::vector<int>& ids) {
  std::ostringstream os;
  for (size_t i = 0; i < ids.size(); ++i) os << (i ? ", " : "") << ids[i];
  return os.str();
}

// Connectivity over in-service branches, optionally skipping one (1-based id).
std::vector<int> unreachable_buses(const NetworkCase& c, int skip_branch) {
  int n = c.n_buses();
  if (n == 0) return {};
  std::vector<std::vector<int>> adj(n);
  for (int b = 0; b < static_cast<int>(c.branches.size()); ++b) {
    if (b + 1 == skip_branch || !c.branches[b].in_service) continue;
    int f = c.bus_pos(c.branches[b].from_bus);
    int t = c.bus_pos(c.branches[b].to_bus);
    adj[f].push_back(t);
    adj[t].push_back(f);
  }
  std::vector<bool> seen(n, false);
  std::queue<int> q;
  q.push(0);
  seen[0] = true;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = true;
        q.push(v);
      }
  }
  std::vector<int> missing;
  for (int i = 0; i < n; ++i)
    if (!seen[i]) missing.push_back(c.buses[i].index);
  return missing;
}

Eigen::MatrixXcd assemble_ybus(const NetworkCase& c, int skip_branch) {
  int n = c.n_buses();
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  for (int b = 0; b < static_cast<int>(c.branches.size()); ++b) {
    const Branch& br = c.branches[b];
    if (b + 1 == skip_branch || !br.in_service) continue;
    int f = c.bus_pos(br.from_bus);
    int t = c.bus_pos(br.to_bus);
    Complex ys = 1.0 / Complex(br.r, br.x);
    Complex ysh = kJ * (br.b_shunt / 2.0);
    double tap = br.tap;
    y(f, f) += (ys + ysh) / (tap * tap);
    y(t, t) += ys + ysh;
    y(f, t) += -ys / tap;
    y(t, f) += -ys / tap;
  }
  return y;
}

}  // namespace

std::string to_string(NetworkPhase phase) {
  switch (phase) {
    case NetworkPhase::PreFault: return "pre_fault";
    case NetworkPhase::DuringFault: return "during_fault";
    case NetworkPhase::PostFault: return "post_fault";
  }
  return "pre_fault";
}

int AdmittanceMatrix::pos_of(int bus_id) const {
  for (int i = 0; i < dimension(); ++i)
    if (bus_ids[i] == bus_id) return i;
  return -1;
}

AdmittanceMatrix build_admittance(const NetworkCase& c, NetworkPhase phase,
                                  const FaultScenario& scenario) {
  int skip = 0;
  if (phase == NetworkPhase::PostFault && scenario.tripped_branch != 0) {
    if (scenario.tripped_branch < 0 ||
        scenario.tripped_branch > static_cast<int>(c.branches.size()))
      throw Error("tripped branch " + std::to_string(scenario.tripped_branch) +
                  " does not exist");
    if (!c.branches[scenario.tripped_branch - 1].in_service)
      throw Error("tripped branch " + std::to_string(scenario.tripped_branch) +
                  " is already out of service");
    skip = scenario.tripped_branch;
  }

  if (phase != NetworkPhase::DuringFault) {
    std::vector<int> missing = unreachable_buses(c, skip);
    if (!missing.empty())
      throw Error(to_string(phase) + " network is islanded: buses {" +
                  join_ids(missing) + "} are disconnected");
  }

  AdmittanceMatrix out;
  out.phase = phase;
  out.y = assemble_ybus(c, skip);
  out.bus_ids.reserve(c.buses.size());
  for (const Bus& b : c.buses) out.bus_ids.push_back(b.index);

  if (phase == NetworkPhase::DuringFault && scenario.fault_bus != 0)
    out = apply_bolted_fault(out, scenario.fault_bus);
  return out;
}

AdmittanceMatrix apply_bolted_fault(const AdmittanceMatrix& y, int fault_bus) {
  int pos = y.pos_of(fault_bus);
  if (pos < 0)
    throw Error("fault bus " + std::to_string(fault_bus) +
                " is not present in the admittance matrix");
  int n = y.dimension();
  AdmittanceMatrix out;
  out.phase = NetworkPhase::DuringFault;
  out.grounded_bus = fault_bus;
  out.bus_ids.reserve(n - 1);
  for (int i = 0; i < n; ++i)
    if (i != pos) out.bus_ids.push_back(y.bus_ids[i]);
  out.y.resize(n - 1, n - 1);
  for (int i = 0, ii = 0; i < n; ++i) {
    if (i == pos) continue;
    for (int j = 0, jj = 0; j < n; ++j) {
      if (j == pos) continue;
      out.y(ii, jj) = y.y(i, j);
      ++jj;
    }
    ++ii;
  }
  return out;
}

// ------------------------------------------------------------- power flow

PowerFlowSolution initial_power_flow(const NetworkCase& c) {
  const int n = c.n_buses();
  AdmittanceMatrix ybus = build_admittance(c, NetworkPhase::PreFault, {});
  const Eigen::MatrixXcd& y = ybus.y;

  // Scheduled net injections per bus (generation minus load).
  Eigen::VectorXd p_spec = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd q_spec = Eigen::VectorXd::Zero(n);
  for (const Load& l : c.loads) {
    p_spec[c.bus_pos(l.bus)] -= l.p;
    q_spec[c.bus_pos(l.bus)] -= l.q;
  }
  for (const SyncMachineParams& m : c.sync_machines)
    p_spec[c.bus_pos(m.bus)] += m.p_dispatch;
  for (const GflParams& g : c.gfl_units) p_spec[c.bus_pos(g.bus)] += g.p_vs;

  int slack = -1;
  std::vector<int> pv, pq;
  for (int i = 0; i < n; ++i) {
    switch (c.buses[i].kind) {
      case BusKind::Slack: slack = i; break;
      case BusKind::Pv: pv.push_back(i); break;
      case BusKind::Pq: pq.push_back(i); break;
    }
  }
  if (slack < 0) throw Error("power flow requires a slack bus");

  Eigen::VectorXd vm(n), va = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i)
    vm[i] = (c.buses[i].kind == BusKind::Pq) ? 1.0 : c.buses[i].v_setpoint;

  // Unknown ordering: angles at pv+pq buses, then magnitudes at pq buses.
  std::vector<int> ang_buses = pv;
  ang_buses.insert(ang_buses.end(), pq.begin(), pq.end());
  const int na = static_cast<int>(ang_buses.size());
  const int nq = static_cast<int>(pq.size());

  auto injections = [&](Eigen::VectorXd& p, Eigen::VectorXd& q) {
    for (int i = 0; i < n; ++i) {
      Complex s = 0.0;
      Complex vi = std::polar(vm[i], va[i]);
      for (int k = 0; k < n; ++k)
        s += vi * std::conj(y(i, k) * std::polar(vm[k], va[k]));
      p[i] = s.real();
      q[i] = s.imag();
    }
  };

  Eigen::VectorXd p(n), q(n);
  double max_mis = 0.0;
  int iter = 0;
  for (;; ++iter) {
    injections(p, q);
    Eigen::VectorXd mis(na + nq);
    for (int a = 0; a < na; ++a) mis[a] = p_spec[ang_buses[a]] - p[ang_buses[a]];
    for (int b = 0; b < nq; ++b) mis[na + b] = q_spec[pq[b]] - q[pq[b]];
    max_mis = mis.size() ? mis.cwiseAbs().maxCoeff() : 0.0;
    if (max_mis < 1e-8) break;
    if (iter >= 50) {
      int worst = 0;
      mis.cwiseAbs().maxCoeff(&worst);
      int bus = worst < na ? ang_buses[worst] : pq[worst - na];
      std::ostringstream os;
      os << "power flow did not converge in 50 iterations (mismatch " << max_mis
         << " pu, worst at bus " << c.buses[bus].index << ")";
      throw Error(os.str());
    }

    // Standard polar-coordinate Jacobian.
    Eigen::MatrixXd jac(na + nq, na + nq);
    auto dp_dth = [&](int i, int k) {
      if (i != k)
        return vm[i] * vm[k] *
               (y(i, k).real() * std::sin(va[i] - va[k]) -
                y(i, k).imag() * std::cos(va[i] - va[k]));
      return -q[i] - y(i, i).imag() * vm[i] * vm[i];
    };
    auto dp_dv = [&](int i, int k) {
      if (i != k)
        return vm[i] * (y(i, k).real() * std::cos(va[i] - va[k]) +
                        y(i, k).imag() * std::sin(va[i] - va[k]));
      return p[i] / vm[i] + y(i, i).real() * vm[i];
    };
    auto dq_dth = [&](int i, int k) {
      if (i != k)
        return -vm[i] * vm[k] *
               (y(i, k).real() * std::cos(va[i] - va[k]) +
                y(i, k).imag() * std::sin(va[i] - va[k]));
      return p[i] - y(i, i).real() * vm[i] * vm[i];
    };
    auto dq_dv = [&](int i, int k) {
      if (i != k)
        return vm[i] * (y(i, k).real() * std::sin(va[i] - va[k]) -
                        y(i, k).imag() * std::cos(va[i] - va[k]));
      return q[i] / vm[i] - y(i, i).imag() * vm[i];
    };
    for (int a = 0; a < na; ++a) {
      for (int b = 0; b < na; ++b) jac(a, b) = dp_dth(ang_buses[a], ang_buses[b]);
      for (int b = 0; b < nq; ++b) jac(a, na + b) = dp_dv(ang_buses[a], pq[b]);
    }
    for (int a = 0; a < nq; ++a) {
      for (int b = 0; b < na; ++b) jac(na + a, b) = dq_dth(pq[a], ang_buses[b]);
      for (int b = 0; b < nq; ++b) jac(na + a, na + b) = dq_dv(pq[a], pq[b]);
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible())
      throw Error("power-flow Jacobian is singular (degenerate network)");
    Eigen::VectorXd dx = lu.solve(mis);
    for (int a = 0; a < na; ++a) va[ang_buses[a]] += dx[a];
    for (int b = 0; b < nq; ++b) vm[pq[b]] += dx[na + b];
  }

  PowerFlowSolution sol;
  sol.v_mag = vm;
  sol.v_ang = va;
  sol.p_inj = p;
  sol.q_inj = q;
  sol.iterations = iter;
  sol.max_mismatch = max_mis;

  // Attribute bus injections to the devices that own them (one per bus).
  Eigen::VectorXd p_load = Eigen::VectorXd::Zero(n), q_load = Eigen::VectorXd::Zero(n);
  for (const Load& l : c.loads) {
    p_load[c.bus_pos(l.bus)] += l.p;
    q_load[c.bus_pos(l.bus)] += l.q;
  }
  sol.p_gen_sync.resize(c.n_sync());
  sol.q_gen_sync.resize(c.n_sync());
  for (int i = 0; i < c.n_sync(); ++i) {
    int b = c.bus_pos(c.sync_machines[i].bus);
    sol.p_gen_sync[i] = p[b] + p_load[b];
    sol.q_gen_sync[i] = q[b] + q_load[b];
  }
  sol.p_gen_gfl.resize(c.n_gfl());
  sol.q_gen_gfl.resize(c.n_gfl());
  for (int j = 0; j < c.n_gfl(); ++j) {
    int b = c.bus_pos(c.gfl_units[j].bus);
    sol.p_gen_gfl[j] = p[b] + p_load[b];
    sol.q_gen_gfl[j] = q[b] + q_load[b];
  }
  return sol;
}

// ---------------------------------------------------------- kron reduction

int ReducedNetwork::n_active() const {
  int k = 0;
  for (bool a : gfl_active) k += a ? 1 : 0;
  return k;
}

int ReducedNetwork::gfl_node(int j) const {
  if (!gfl_active[j]) return -1;
  int rank = 0;
  for (int i = 0; i < j; ++i) rank += gfl_active[i] ? 1 : 0;
  return n_sync + rank;
}

ReducedNetwork reduce_to_sources(const AdmittanceMatrix& y, const NetworkCase& c,
                                 const PowerFlowSolution& equilibrium) {
  const int np = y.dimension();
  const int ns = c.n_sync();
  const int ng = c.n_gfl();

  // Extended matrix: physical buses first, machine internal nodes appended.
  Eigen::MatrixXcd ext = Eigen::MatrixXcd::Zero(np + ns, np + ns);
  ext.topLeftCorner(np, np) = y.y;

  // Loads become constant shunts frozen at the equilibrium voltage. A load at
  // the grounded bus vanishes with its node.
  for (const Load& l : c.loads) {
    int pos = y.pos_of(l.bus);
    if (pos < 0) continue;
    double v = equilibrium.v_mag[c.bus_pos(l.bus)];
    ext(pos, pos) += Complex(l.p, -l.q) / (v * v);
  }

  // Machine internal node behind xd'; a grounded terminal leaves the source
  // series-connected straight to the fault.
  for (int i = 0; i < ns; ++i) {
    Complex ym = 1.0 / (kJ * c.sync_machines[i].xd_prime);
    int node = np + i;
    ext(node, node) += ym;
    int term = y.pos_of(c.sync_machines[i].bus);
    if (term >= 0) {
      ext(term, term) += ym;
      ext(node, term) -= ym;
      ext(term, node) -= ym;
    }
  }

  ReducedNetwork net;
  net.phase = y.phase;
  net.grounded_bus = y.grounded_bus;
  net.n_sync = ns;
  net.n_gfl = ng;
  net.gfl_active.resize(ng);
  std::vector<int> retained;  // positions in ext
  for (int i = 0; i < ns; ++i) retained.push_back(np + i);
  for (int j = 0; j < ng; ++j) {
    int pos = y.pos_of(c.gfl_units[j].bus);
    net.gfl_active[j] = pos >= 0;
    if (pos >= 0) retained.push_back(pos);
  }

  std::vector<bool> is_retained(np + ns, false);
  for (int r : retained) is_retained[r] = true;
  std::vector<int> elim;
  for (int i = 0; i < np; ++i)
    if (!is_retained[i]) {
      elim.push_back(i);
      net.eliminated_bus_ids.push_back(y.bus_ids[i]);
    }

  const int nr = static_cast<int>(retained.size());
  const int ne = static_cast<int>(elim.size());
  Eigen::MatrixXcd yrr(nr, nr), yre(nr, ne), yer(ne, nr), yee(ne, ne);
  for (int a = 0; a < nr; ++a)
    for (int b = 0; b < nr; ++b) yrr(a, b) = ext(retained[a], retained[b]);
  for (int a = 0; a < nr; ++a)
    for (int b = 0; b < ne; ++b) yre(a, b) = ext(retained[a], elim[b]);
  for (int a = 0; a < ne; ++a)
    for (int b = 0; b < nr; ++b) yer(a, b) = ext(elim[a], retained[b]);
  for (int a = 0; a < ne; ++a)
    for (int b = 0; b < ne; ++b) yee(a, b) = ext(elim[a], elim[b]);

  if (ne == 0) {
    net.y_red = yrr;
    net.recovery.resize(0, nr);
  } else {
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(yee);
    if (!lu.isInvertible())
      throw Error("Kron reduction failed: eliminated block is singular (buses {" +
                  join_ids(net.eliminated_bus_ids) + "})");
    net.recovery = -lu.solve(yer);
    net.y_red = yrr + yre * net.recovery;
  }

  const int na = net.n_active();
  if (na > 0) {
    net.lu_ygg.compute(net.y_red.bottomRightCorner(na, na));
    net.y_gm = net.y_red.bottomLeftCorner(na, ns);
  }
  return net;
}

// --------------------------------------------------------- algebraic solve

namespace {

// Converter current law shared by the solver and the output fill.
Complex gfl_current(double p_v, double theta_p, double v, double v_floor) {
  return std::polar(p_v / std::max(v, v_floor), theta_p);
}

}  // namespace

AlgebraicSolution solve_algebraic(const ReducedNetwork& net, const NetworkCase& c,
                                  const Eigen::VectorXd& e_mag,
                                  const Eigen::VectorXd& delta,
                                  const Eigen::VectorXd& p_v,
                                  const Eigen::VectorXd& theta_p,
                                  const AlgebraicOptions& opts,
                                  const AlgebraicSolution* warm) {
  const int ns = net.n_sync;
  const int ng = net.n_gfl;
  const int na = net.n_active();

  Eigen::VectorXcd vm(ns);
  for (int i = 0; i < ns; ++i) vm[i] = std::polar(e_mag[i], delta[i]);

  AlgebraicSolution sol;
  sol.converged = true;

  // Active-node bookkeeping: j-th active entry -> gfl index.
  std::vector<int> act;
  act.reserve(na);
  for (int j = 0; j < ng; ++j)
    if (net.gfl_active[j]) act.push_back(j);

  Eigen::VectorXcd vg(na);
  if (na > 0) {
    for (int a = 0; a < na; ++a) {
      int j = act[a];
      if (warm && warm->v_gfl.size() == ng && warm->v_gfl[j] > 0.0)
        vg[a] = std::polar(warm->v_gfl[j], warm->th_gfl[j]);
      else
        vg[a] = std::polar(1.0, theta_p[j]);
    }
    Eigen::VectorXcd b0 = -net.y_gm * vm;

    auto sweep = [&](const Eigen::VectorXcd& v) -> Eigen::VectorXcd {
      Eigen::VectorXcd inj(na);
      for (int a = 0; a < na; ++a) {
        int j = act[a];
        inj[a] = gfl_current(p_v[j], theta_p[j], std::abs(v[a]),
                             c.gfl_units[j].v_floor);
      }
      return net.lu_ygg.solve(Eigen::VectorXcd(inj + b0));
    };

    Eigen::VectorXcd prev2 = vg, prev1 = vg;
    double err = 1.0, err_prev = 1.0;
    int grew = 0;
    bool ok = false;
    int it = 0;
    for (; it < opts.max_iters; ++it) {
      Eigen::VectorXcd next = sweep(vg);
      err = (next - vg).cwiseAbs().maxCoeff();
      if (it >= 2 && (it % 3) == 2) {
        // Aitken delta-squared acceleration, componentwise.
        for (int a = 0; a < na; ++a) {
          Complex d1 = prev1[a] - prev2[a];
          Complex d2 = next[a] - prev1[a];
          Complex den = d2 - d1;
          if (std::abs(den) > 1e-14 * (1.0 + std::abs(next[a])))
            next[a] = next[a] - d2 * d2 / den;
        }
      }
      prev2 = prev1;
      prev1 = next;
      grew = (err > 5.0 * err_prev && it > 3) ? grew + 1 : 0;
      err_prev = err;
      std::swap(vg, next);
      if (err < opts.tol) {
        ok = true;
        break;
      }
      if (grew >= 3) break;  // visibly diverging: hand off to Newton
    }
    sol.iterations = it + 1;

    if (!ok && opts.allow_newton_fallback) {
      sol.used_newton_fallback = true;
      ok = [&] {
        const Eigen::MatrixXcd ygg = net.y_red.bottomRightCorner(na, na);
        auto residual = [&](const Eigen::VectorXcd& v) {
          Eigen::VectorXcd f = ygg * v - b0;
          for (int a = 0; a < na; ++a) {
            int j = act[a];
            f[a] -= gfl_current(p_v[j], theta_p[j], std::abs(v[a]),
                                c.gfl_units[j].v_floor);
          }
          return f;
        };
        for (int nit = 0; nit < 50; ++nit) {
          Eigen::VectorXcd f = residual(vg);
          Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * na, 2 * na);
          for (int a = 0; a < na; ++a)
            for (int b = 0; b < na; ++b) {
              jac(2 * a, 2 * b) = ygg(a, b).real();
              jac(2 * a, 2 * b + 1) = -ygg(a, b).imag();
              jac(2 * a + 1, 2 * b) = ygg(a, b).imag();
              jac(2 * a + 1, 2 * b + 1) = ygg(a, b).real();
            }
          for (int a = 0; a < na; ++a) {
            int j = act[a];
            double v = std::abs(vg[a]);
            if (v <= c.gfl_units[j].v_floor) continue;  // clamped: current const
            Complex i0 = gfl_current(p_v[j], theta_p[j], v, c.gfl_units[j].v_floor);
            Complex di_dre = -i0 * (vg[a].real() / (v * v));
            Complex di_dim = -i0 * (vg[a].imag() / (v * v));
            jac(2 * a, 2 * a) -= di_dre.real();
            jac(2 * a, 2 * a + 1) -= di_dim.real();
            jac(2 * a + 1, 2 * a) -= di_dre.imag();
            jac(2 * a + 1, 2 * a + 1) -= di_dim.imag();
          }
          Eigen::VectorXd fr(2 * na);
          for (int a = 0; a < na; ++a) {
            fr[2 * a] = f[a].real();
            fr[2 * a + 1] = f[a].imag();
          }
          Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
          if (!lu.isInvertible()) return false;
          Eigen::VectorXd dz = lu.solve(-fr);
          double fnorm = fr.norm();
          double alpha = 1.0;
          Eigen::VectorXcd cand = vg;
          for (int half = 0; half < 7; ++half) {
            for (int a = 0; a < na; ++a)
              cand[a] = vg[a] + alpha * Complex(dz[2 * a], dz[2 * a + 1]);
            Eigen::VectorXcd fc = residual(cand);
            double fcn = 0.0;
            for (int a = 0; a < na; ++a)
              fcn += std::norm(fc[a]);
            if (std::sqrt(fcn) < fnorm || half == 6) break;
            alpha *= 0.5;
          }
          double step = (cand - vg).cwiseAbs().maxCoeff();
          vg = cand;
          ++sol.iterations;
          if (step < opts.tol) return true;
        }
        return false;
      }();
    }
    sol.converged = ok;
  }

  // Fill outputs even on failure (callers may inspect the partial state).
  sol.v_gfl = Eigen::VectorXd::Zero(ng);
  sol.th_gfl = Eigen::VectorXd::Zero(ng);
  sol.i_gfl.resize(ng);
  sol.p_e_gfl.resize(ng);
  for (int j = 0; j < ng; ++j) {
    int node = net.gfl_node(j);
    double v = 0.0, th = theta_p[j];
    if (node >= 0) {
      Complex vj = vg[node - ns];
      v = std::abs(vj);
      th = std::arg(vj);
      if (warm && warm->th_gfl.size() == ng)
        th = warm->th_gfl[j] + wrap_to_pi(th - warm->th_gfl[j]);
    }
    sol.v_gfl[j] = v;
    sol.th_gfl[j] = th;
    sol.i_gfl[j] = gfl_current(p_v[j], theta_p[j], v, c.gfl_units[j].v_floor);
    sol.p_e_gfl[j] = v * std::abs(sol.i_gfl[j]) * std::cos(th - theta_p[j]);
  }

  Eigen::VectorXcd vdev(ns + na);
  vdev.head(ns) = vm;
  vdev.tail(na) = vg;
  Eigen::VectorXcd idev = net.y_red * vdev;
  sol.i_sync.resize(ns);
  sol.p_e_sync.resize(ns);
  for (int i = 0; i < ns; ++i) {
    sol.i_sync[i] = idev[i];
    sol.p_e_sync[i] = (vm[i] * std::conj(idev[i])).real();
  }
  return sol;
}

void recover_bus_voltages(const ReducedNetwork& net, const NetworkCase& c,
                          const Eigen::VectorXd& e_mag, const Eigen::VectorXd& delta,
                          AlgebraicSolution& alg) {
  const int ns = net.n_sync;
  const int na = net.n_active();
  Eigen::VectorXcd vdev(ns + na);
  for (int i = 0; i < ns; ++i) vdev[i] = std::polar(e_mag[i], delta[i]);
  for (int j = 0, a = 0; j < net.n_gfl; ++j)
    if (net.gfl_active[j]) vdev[ns + a++] = std::polar(alg.v_gfl[j], alg.th_gfl[j]);

  Eigen::VectorXcd velim = net.recovery * vdev;

  alg.v_mag = Eigen::VectorXd::Zero(c.n_buses());
  alg.v_ang = Eigen::VectorXd::Zero(c.n_buses());
  for (size_t e = 0; e < net.eliminated_bus_ids.size(); ++e) {
    int pos = c.bus_pos(net.eliminated_bus_ids[e]);
    alg.v_mag[pos] = std::abs(velim[e]);
    alg.v_ang[pos] = std::arg(velim[e]);
  }
  for (int j = 0; j < net.n_gfl; ++j) {
    if (!net.gfl_active[j]) continue;
    int pos = c.bus_pos(c.gfl_units[j].bus);
    alg.v_mag[pos] = alg.v_gfl[j];
    alg.v_ang[pos] = alg.th_gfl[j];
  }
  // The grounded bus (if any) stays at 0∠0.
}

double algebraic_residual_inf(const ReducedNetwork& net, const NetworkCase& c,
                              const Eigen::VectorXd& e_mag, const Eigen::VectorXd& delta,
                              const Eigen::VectorXd& p_v, const Eigen::VectorXd& theta_p,
                              const AlgebraicSolution& alg) {
  const int ns = net.n_sync;
  const int na = net.n_active();
  if (na == 0) return 0.0;
  Eigen::VectorXcd vdev(ns + na);
  for (int i = 0; i < ns; ++i) vdev[i] = std::polar(e_mag[i], delta[i]);
  for (int j = 0, a = 0; j < net.n_gfl; ++j)
    if (net.gfl_active[j]) vdev[ns + a++] = std::polar(alg.v_gfl[j], alg.th_gfl[j]);
  Eigen::VectorXcd idev = net.y_red * vdev;
  double worst = 0.0;
  for (int j = 0; j < net.n_gfl; ++j) {
    int node = net.gfl_node(j);
    if (node < 0) continue;
    Complex inj = gfl_current(p_v[j], theta_p[j], alg.v_gfl[j], c.gfl_units[j].v_floor);
    worst = std::max(worst, std::abs(idev[node] - inj));
  }
  return worst;
}

}  // namespace cctkit
