#include "cctkit/device_dynamics.hpp"

#include <cmath>
#include <sstream>

namespace cctkit {

namespace {
constexpr Complex kJ{0.0, 1.0};
}

std::string StateLayout::component_name(int k, const NetworkCase& c) const {
  if (k < 2 * n_sync) {
    int i = k / 2;
    std::string base = (k % 2 == 0) ? "delta_b" : "omega_b";
    return base + std::to_string(c.sync_machines[i].bus);
  }
  int j = (k - 2 * n_sync) / 4;
  static const char* names[4] = {"xv_b", "pv_b", "thp_b", "xp_b"};
  return names[(k - 2 * n_sync) % 4] + std::to_string(c.gfl_units[j].bus);
}

Eigen::VectorXd SystemState::to_vector() const {
  StateLayout l{static_cast<int>(sync.size()), static_cast<int>(gfl.size())};
  Eigen::VectorXd x(l.nx());
  for (size_t i = 0; i < sync.size(); ++i) {
    x[l.delta(i)] = sync[i].delta;
    x[l.omega(i)] = sync[i].omega;
  }
  for (size_t j = 0; j < gfl.size(); ++j) {
    x[l.x_v(j)] = gfl[j].x_v;
    x[l.p_v(j)] = gfl[j].p_v;
    x[l.theta_p(j)] = gfl[j].theta_p;
    x[l.x_p(j)] = gfl[j].x_p;
  }
  return x;
}

SystemState SystemState::from_vector(double t, const Eigen::VectorXd& x,
                                     const StateLayout& l) {
  SystemState s;
  s.t = t;
  s.sync.resize(l.n_sync);
  s.gfl.resize(l.n_gfl);
  for (int i = 0; i < l.n_sync; ++i) {
    s.sync[i].delta = x[l.delta(i)];
    s.sync[i].omega = x[l.omega(i)];
  }
  for (int j = 0; j < l.n_gfl; ++j) {
    s.gfl[j].x_v = x[l.x_v(j)];
    s.gfl[j].p_v = x[l.p_v(j)];
    s.gfl[j].theta_p = x[l.theta_p(j)];
    s.gfl[j].x_p = x[l.x_p(j)];
  }
  return s;
}

SyncDerivatives sync_derivatives(const SyncState& s, double p_e,
                                 const SyncMachineParams& m, double omega0) {
  SyncDerivatives d;
  d.d_delta = s.omega - omega0;
  d.d_omega = (omega0 / (2.0 * m.h)) *
              (m.p_mech - p_e - m.d * (s.omega - omega0));
  return d;
}

GflDerivatives gfl_derivatives(const GflState& s, double v, double theta,
                               const GflParams& g) {
  double v_q = v * std::sin(theta - s.theta_p);
  double omega_p = g.k_p * v_q + g.k_i * s.x_p;
  GflDerivatives d;
  d.d_x_v = (omega_p - s.x_v) / g.t_v;
  d.d_p_v = (g.p_vs - 2.0 * g.h_v * d.d_x_v - s.p_v) / g.t_p;
  d.d_theta_p = omega_p;
  d.d_x_p = v_q;
  return d;
}

Eigen::MatrixXd JacobianBlocks::reduced() const {
  if (dsdy.rows() == 0) return dfdx;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(dsdy);
  if (!lu.isInvertible()) {
    std::ostringstream os;
    os << "algebraic Jacobian dS/dy is singular (|det| ~ "
       << std::abs(lu.determinant()) << "); system is not index-1 here";
    throw Error(os.str());
  }
  return dfdx - dfdy * lu.solve(dsdx);
}

SystemModel::SystemModel(const NetworkCase& c, std::vector<SyncMachineParams> machines)
    : case_(&c),
      machines_(std::move(machines)),
      layout_{c.n_sync(), c.n_gfl()},
      omega0_(c.omega0()) {
  if (static_cast<int>(machines_.size()) != c.n_sync())
    throw Error("machine parameter list does not match the case fleet");
}

void SystemModel::unpack(const Eigen::VectorXd& x, Eigen::VectorXd& e_mag,
                         Eigen::VectorXd& delta, Eigen::VectorXd& p_v,
                         Eigen::VectorXd& theta_p) const {
  const StateLayout& l = layout_;
  e_mag.resize(l.n_sync);
  delta.resize(l.n_sync);
  for (int i = 0; i < l.n_sync; ++i) {
    e_mag[i] = machines_[i].e_prime_mag;
    delta[i] = x[l.delta(i)];
  }
  p_v.resize(l.n_gfl);
  theta_p.resize(l.n_gfl);
  for (int j = 0; j < l.n_gfl; ++j) {
    p_v[j] = x[l.p_v(j)];
    theta_p[j] = x[l.theta_p(j)];
  }
}

Eigen::VectorXd SystemModel::pack_y(const ReducedNetwork& net,
                                    const AlgebraicSolution& alg) const {
  Eigen::VectorXd y(ny(net));
  int a = 0;
  for (int j = 0; j < net.n_gfl; ++j) {
    if (!net.gfl_active[j]) continue;
    y[2 * a] = alg.v_gfl[j];
    y[2 * a + 1] = alg.th_gfl[j];
    ++a;
  }
  return y;
}

AlgebraicSolution SystemModel::solve_network(const ReducedNetwork& net,
                                             const Eigen::VectorXd& x,
                                             const AlgebraicOptions& opts,
                                             const AlgebraicSolution* warm) const {
  Eigen::VectorXd e, d, pv, thp;
  unpack(x, e, d, pv, thp);
  return solve_algebraic(net, *case_, e, d, pv, thp, opts, warm);
}

namespace {

// Per-call scratch describing the device-node voltages for a given (x, y).
struct NodeView {
  Eigen::VectorXcd vdev;    // machine nodes then active gfl nodes
  Eigen::VectorXcd idev;    // Y * vdev
  std::vector<int> act;     // active-slot -> gfl index
  std::vector<int> slot_of;  // gfl index -> active slot or -1
};

NodeView make_view(const SystemModel& model, const ReducedNetwork& net,
                   const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const StateLayout& l = model.layout();
  NodeView nv;
  nv.vdev.resize(net.dimension());
  for (int i = 0; i < net.n_sync; ++i)
    nv.vdev[i] = std::polar(model.machines()[i].e_prime_mag, x[l.delta(i)]);
  nv.slot_of.assign(net.n_gfl, -1);
  int a = 0;
  for (int j = 0; j < net.n_gfl; ++j) {
    if (!net.gfl_active[j]) continue;
    nv.vdev[net.n_sync + a] = std::polar(y[2 * a], y[2 * a + 1]);
    nv.slot_of[j] = a;
    nv.act.push_back(j);
    ++a;
  }
  nv.idev = net.y_red * nv.vdev;
  return nv;
}

}  // namespace

Eigen::VectorXd SystemModel::rhs(const ReducedNetwork& net, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& y) const {
  const StateLayout& l = layout_;
  NodeView nv = make_view(*this, net, x, y);

  Eigen::VectorXd f(nx());
  for (int i = 0; i < l.n_sync; ++i) {
    SyncState s{x[l.delta(i)], x[l.omega(i)]};
    double p_e = (nv.vdev[i] * std::conj(nv.idev[i])).real();
    SyncDerivatives d = sync_derivatives(s, p_e, machines_[i], omega0_);
    f[l.delta(i)] = d.d_delta;
    f[l.omega(i)] = d.d_omega;
  }
  for (int j = 0; j < l.n_gfl; ++j) {
    GflState s{x[l.x_v(j)], x[l.p_v(j)], x[l.theta_p(j)], x[l.x_p(j)]};
    double v = 0.0, theta = s.theta_p;
    if (nv.slot_of[j] >= 0) {
      v = y[2 * nv.slot_of[j]];
      theta = y[2 * nv.slot_of[j] + 1];
    }
    GflDerivatives d = gfl_derivatives(s, v, theta, case_->gfl_units[j]);
    f[l.x_v(j)] = d.d_x_v;
    f[l.p_v(j)] = d.d_p_v;
    f[l.theta_p(j)] = d.d_theta_p;
    f[l.x_p(j)] = d.d_x_p;
  }
  return f;
}

Eigen::VectorXd SystemModel::algebraic_residual(const ReducedNetwork& net,
                                                const Eigen::VectorXd& x,
                                                const Eigen::VectorXd& y) const {
  const StateLayout& l = layout_;
  NodeView nv = make_view(*this, net, x, y);
  Eigen::VectorXd s(ny(net));
  for (size_t a = 0; a < nv.act.size(); ++a) {
    int j = nv.act[a];
    const GflParams& g = case_->gfl_units[j];
    double v = y[2 * a];
    Complex inj = std::polar(x[l.p_v(j)] / std::max(v, g.v_floor), x[l.theta_p(j)]);
    Complex res = nv.idev[net.n_sync + a] - inj;
    s[2 * a] = res.real();
    s[2 * a + 1] = res.imag();
  }
  return s;
}

JacobianBlocks SystemModel::jacobian_blocks(const ReducedNetwork& net,
                                            const Eigen::VectorXd& x,
                                            const Eigen::VectorXd& y) const {
  const StateLayout& l = layout_;
  const Eigen::MatrixXcd& yr = net.y_red;
  NodeView nv = make_view(*this, net, x, y);
  const int nyv = ny(net);

  JacobianBlocks jb;
  jb.dfdx = Eigen::MatrixXd::Zero(nx(), nx());
  jb.dfdy = Eigen::MatrixXd::Zero(nx(), nyv);
  jb.dsdx = Eigen::MatrixXd::Zero(nyv, nx());
  jb.dsdy = Eigen::MatrixXd::Zero(nyv, nyv);

  // --- machine rows
  for (int i = 0; i < l.n_sync; ++i) {
    const SyncMachineParams& m = machines_[i];
    double gain = -omega0_ / (2.0 * m.h);  // multiplies dP_e
    jb.dfdx(l.delta(i), l.omega(i)) = 1.0;
    jb.dfdx(l.omega(i), l.omega(i)) = -omega0_ * m.d / (2.0 * m.h);

    // dP_e_i/ddelta_k = [k==i](-Im(v_i conj(I_i))) + Im(v_i conj(Y_ik v_k))
    for (int k = 0; k < l.n_sync; ++k) {
      double dpe = (nv.vdev[i] * std::conj(yr(i, k) * nv.vdev[k])).imag();
      if (k == i) dpe -= (nv.vdev[i] * std::conj(nv.idev[i])).imag();
      jb.dfdx(l.omega(i), l.delta(k)) = gain * dpe;
    }
    for (size_t a = 0; a < nv.act.size(); ++a) {
      int node = net.n_sync + static_cast<int>(a);
      Complex vg = nv.vdev[node];
      double th = y[2 * a + 1];
      double dpe_dv = (nv.vdev[i] * std::conj(yr(i, node) * std::polar(1.0, th))).real();
      double dpe_dth = (nv.vdev[i] * std::conj(yr(i, node) * vg)).imag();
      jb.dfdy(l.omega(i), 2 * a) = gain * dpe_dv;
      jb.dfdy(l.omega(i), 2 * a + 1) = gain * dpe_dth;
    }
  }

  // --- GFL rows
  for (int j = 0; j < l.n_gfl; ++j) {
    const GflParams& g = case_->gfl_units[j];
    int slot = nv.slot_of[j];
    double v = slot >= 0 ? y[2 * slot] : 0.0;
    double theta = slot >= 0 ? y[2 * slot + 1] : x[l.theta_p(j)];
    double sn = std::sin(theta - x[l.theta_p(j)]);
    double cs = std::cos(theta - x[l.theta_p(j)]);

    // v_q partials: x-side only theta_p; y-side (V, theta) of the own bus.
    double dvq_dthp = -v * cs;
    double dvq_dV = sn;
    double dvq_dth = v * cs;

    auto fill = [&](int row, double vq_coeff, double xp_coeff, double xv_coeff,
                    double pv_coeff) {
      jb.dfdx(row, l.theta_p(j)) = vq_coeff * g.k_p * dvq_dthp;
      jb.dfdx(row, l.x_p(j)) = vq_coeff * g.k_i + xp_coeff;
      jb.dfdx(row, l.x_v(j)) += xv_coeff;
      jb.dfdx(row, l.p_v(j)) += pv_coeff;
      if (slot >= 0) {
        jb.dfdy(row, 2 * slot) = vq_coeff * g.k_p * dvq_dV;
        jb.dfdy(row, 2 * slot + 1) = vq_coeff * g.k_p * dvq_dth;
      }
    };
    // Rows as functions of omega_p = k_p v_q + k_i x_p (vq_coeff scales the
    // k_p v_q part and the k_i x_p part together; extra columns separate).
    // d(x_v) = (omega_p - x_v)/t_v
    fill(l.x_v(j), 1.0 / g.t_v, 0.0, -1.0 / g.t_v, 0.0);
    // d(p_v) = (p_vs - 2 h_v d(x_v) - p_v)/t_p
    double c2 = -2.0 * g.h_v / g.t_p;
    fill(l.p_v(j), c2 / g.t_v, 0.0, -c2 / g.t_v, -1.0 / g.t_p);
    // d(theta_p) = omega_p
    fill(l.theta_p(j), 1.0, 0.0, 0.0, 0.0);
    // d(x_p) = v_q  (no omega_p: k_i column must stay zero)
    jb.dfdx(l.x_p(j), l.theta_p(j)) = dvq_dthp;
    if (slot >= 0) {
      jb.dfdy(l.x_p(j), 2 * slot) = dvq_dV;
      jb.dfdy(l.x_p(j), 2 * slot + 1) = dvq_dth;
    }
  }

  // --- network residual rows (active units only)
  for (size_t a = 0; a < nv.act.size(); ++a) {
    int j = nv.act[a];
    const GflParams& g = case_->gfl_units[j];
    int node = net.n_sync + static_cast<int>(a);
    double v = y[2 * a];
    double thp = x[l.theta_p(j)];
    double pv = x[l.p_v(j)];
    Complex inj = std::polar(pv / std::max(v, g.v_floor), thp);

    auto put = [&](int row_pair, int col, Complex d) {
      jb.dsdx(2 * row_pair, col) = d.real();
      jb.dsdx(2 * row_pair + 1, col) = d.imag();
    };
    for (int k = 0; k < l.n_sync; ++k)
      put(a, l.delta(k), yr(node, k) * kJ * nv.vdev[k]);
    put(a, l.theta_p(j), -kJ * inj);
    put(a, l.p_v(j), -std::polar(1.0 / std::max(v, g.v_floor), thp));

    for (size_t b = 0; b < nv.act.size(); ++b) {
      int nodeb = net.n_sync + static_cast<int>(b);
      Complex vb = nv.vdev[nodeb];
      Complex d_dv = yr(node, nodeb) * std::polar(1.0, y[2 * b + 1]);
      Complex d_dth = yr(node, nodeb) * kJ * vb;
      if (a == b && v > g.v_floor) d_dv += inj / v;  // -d(inj)/dV = +inj/V
      jb.dsdy(2 * a, 2 * b) = d_dv.real();
      jb.dsdy(2 * a + 1, 2 * b) = d_dv.imag();
      jb.dsdy(2 * a, 2 * b + 1) = d_dth.real();
      jb.dsdy(2 * a + 1, 2 * b + 1) = d_dth.imag();
    }
  }
  return jb;
}

InitializedSystem init_devices(const NetworkCase& c, const PowerFlowSolution& pf,
                               const ReducedNetwork& pre_net) {
  const int ns = c.n_sync();
  const int ng = c.n_gfl();

  InitializedSystem out;
  out.machines = c.sync_machines;
  out.x0.t = 0.0;
  out.x0.sync.resize(ns);
  out.x0.gfl.resize(ng);

  for (int i = 0; i < ns; ++i) {
    const SyncMachineParams& m = c.sync_machines[i];
    int b = c.bus_pos(m.bus);
    Complex vt = std::polar(pf.v_mag[b], pf.v_ang[b]);
    Complex s{pf.p_gen_sync[i], pf.q_gen_sync[i]};
    Complex it = std::conj(s / vt);
    Complex e = vt + kJ * m.xd_prime * it;
    out.machines[i].e_prime_mag = std::abs(e);
    out.x0.sync[i].delta = std::arg(e);
    out.x0.sync[i].omega = c.omega0();
  }

  for (int j = 0; j < ng; ++j) {
    const GflParams& g = c.gfl_units[j];
    if (std::abs(pf.p_gen_gfl[j] - g.p_vs) > 1e-6)
      throw Error("gfl_unit at bus " + std::to_string(g.bus) +
                  ": power-flow dispatch does not match p_vs (inconsistent case)");
    out.x0.gfl[j].x_v = 0.0;
    out.x0.gfl[j].p_v = g.p_vs;
    out.x0.gfl[j].theta_p = pf.v_ang[c.bus_pos(g.bus)];
    out.x0.gfl[j].x_p = 0.0;
  }

  // Lock each PLL to the solved algebraic angle exactly: iterate
  // (solve network, set theta_p := theta) to the fixed point.
  Eigen::VectorXd e_mag(ns), delta(ns), p_v(ng), theta_p(ng);
  for (int i = 0; i < ns; ++i) {
    e_mag[i] = out.machines[i].e_prime_mag;
    delta[i] = out.x0.sync[i].delta;
  }
  for (int j = 0; j < ng; ++j) {
    p_v[j] = out.x0.gfl[j].p_v;
    theta_p[j] = out.x0.gfl[j].theta_p;
  }
  AlgebraicSolution warm;
  warm.v_gfl.resize(ng);
  warm.th_gfl.resize(ng);
  for (int j = 0; j < ng; ++j) {
    warm.v_gfl[j] = pf.v_mag[c.bus_pos(c.gfl_units[j].bus)];
    warm.th_gfl[j] = pf.v_ang[c.bus_pos(c.gfl_units[j].bus)];
  }
  AlgebraicSolution alg;
  for (int pass = 0; pass < 50; ++pass) {
    alg = solve_algebraic(pre_net, c, e_mag, delta, p_v, theta_p, {}, &warm);
    if (!alg.converged)
      throw Error("initialization failed: pre-fault algebraic solve did not converge");
    double moved = 0.0;
    for (int j = 0; j < ng; ++j) {
      moved = std::max(moved, std::abs(alg.th_gfl[j] - theta_p[j]));
      theta_p[j] = alg.th_gfl[j];
    }
    warm = alg;
    if (moved < 1e-13) break;
  }
  for (int j = 0; j < ng; ++j) out.x0.gfl[j].theta_p = theta_p[j];

  // Mechanical power balances the realized electrical power exactly; it must
  // also agree with the dispatch target (shunt-load conversion is exact at
  // the equilibrium point, so any gap signals an inconsistent case).
  for (int i = 0; i < ns; ++i) {
    if (std::abs(alg.p_e_sync[i] - pf.p_gen_sync[i]) > 1e-6)
      throw Error("initialization inconsistent at machine bus " +
                  std::to_string(c.sync_machines[i].bus) + ": reduced-network P_e " +
                  std::to_string(alg.p_e_sync[i]) + " vs power-flow " +
                  std::to_string(pf.p_gen_sync[i]));
    out.machines[i].p_mech = alg.p_e_sync[i];
  }

  SystemModel model(c, out.machines);
  Eigen::VectorXd x0 = out.x0.to_vector();
  Eigen::VectorXd y0 = model.pack_y(pre_net, alg);
  Eigen::VectorXd f = model.rhs(pre_net, x0, y0);
  double worst = f.cwiseAbs().maxCoeff();
  if (worst > 1e-8) {
    int k = 0;
    f.cwiseAbs().maxCoeff(&k);
    throw Error("initialization residual " + std::to_string(worst) +
                " exceeds 1e-8 (worst component " +
                model.layout().component_name(k, c) + ")");
  }
  recover_bus_voltages(pre_net, c, e_mag, delta, alg);
  out.y0 = alg;
  return out;
}

}  // namespace cctkit
