#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>

#include "cctkit/network_solver.hpp"

using namespace cctkit;

namespace {

// 3-bus chain: machine(1) -- line -- load(2) -- transformer -- machine(3).
NetworkCase chain_case() {
  NetworkCase c;
  c.name = "chain";
  c.buses = {{1, 100.0, BusKind::Pv, 1.02},
             {2, 100.0, BusKind::Pq, 0.0},
             {3, 100.0, BusKind::Slack, 1.0}};
  c.branches = {{1, 2, 0.01, 0.10, 0.20, 1.00, true},
                {2, 3, 0.00, 0.20, 0.00, 0.98, true}};
  c.loads = {{2, 0.5, 0.2}};
  SyncMachineParams m1;
  m1.bus = 1;
  m1.h = 4.0;
  m1.xd_prime = 0.2;
  m1.p_dispatch = 0.6;
  SyncMachineParams m3;
  m3.bus = 3;
  m3.h = 6.0;
  m3.xd_prime = 0.05;
  m3.p_dispatch = 0.0;
  c.sync_machines = {m1, m3};
  return c;
}

FaultScenario no_fault() {
  FaultScenario s;
  s.fault_bus = 0;
  s.tripped_branch = 0;
  return s;
}

// Machine source voltages E'∠δ recovered from a power flow solution.
void sources_from_pf(const NetworkCase& c, const PowerFlowSolution& pf, Eigen::VectorXd& e_mag,
                     Eigen::VectorXd& delta) {
  int ns = c.n_sync();
  e_mag.resize(ns);
  delta.resize(ns);
  for (int i = 0; i < ns; ++i) {
    const SyncMachineParams& m = c.sync_machines[i];
    int pos = c.bus_pos(m.bus);
    Complex v = std::polar(pf.v_mag[pos], pf.v_ang[pos]);
    Complex s(pf.p_gen_sync[i], pf.q_gen_sync[i]);
    Complex e = v + Complex(0.0, m.xd_prime) * std::conj(s / v);
    e_mag[i] = std::abs(e);
    delta[i] = std::arg(e);
  }
}

}  // namespace

TEST_CASE("admittance assembly follows the pi model with off-nominal taps") {
  NetworkCase c = chain_case();
  AdmittanceMatrix adm = build_admittance(c, NetworkPhase::PreFault, no_fault());
  REQUIRE(adm.dimension() == 3);
  CHECK(adm.grounded_bus == 0);
  CHECK(adm.bus_ids == std::vector<int>{1, 2, 3});

  Complex j(0.0, 1.0);
  Complex ys1 = 1.0 / Complex(0.01, 0.10);
  Complex ys2 = 1.0 / Complex(0.00, 0.20);
  double tap = 0.98;
  CHECK(std::abs(adm.y(0, 0) - (ys1 + j * 0.1)) < 1e-14);
  CHECK(std::abs(adm.y(0, 1) - (-ys1)) < 1e-14);
  CHECK(std::abs(adm.y(1, 0) - (-ys1)) < 1e-14);
  CHECK(std::abs(adm.y(1, 1) - (ys1 + j * 0.1 + ys2 / (tap * tap))) < 1e-14);
  CHECK(std::abs(adm.y(1, 2) - (-ys2 / tap)) < 1e-14);
  CHECK(std::abs(adm.y(2, 2) - ys2) < 1e-14);
  CHECK(std::abs(adm.y(0, 2)) == 0.0);  // no direct 1-3 branch

  // without shunts and taps every row sums to zero (pure KCL)
  NetworkCase plain = chain_case();
  plain.branches[0].b_shunt = 0.0;
  plain.branches[1].tap = 1.0;
  AdmittanceMatrix padm = build_admittance(plain, NetworkPhase::PreFault, no_fault());
  for (int r = 0; r < 3; ++r) CHECK(std::abs(padm.y.row(r).sum()) < 1e-14);
}

TEST_CASE("post-fault admittance drops the tripped branch; islanding is caught") {
  NetworkCase c = chain_case();
  FaultScenario s = no_fault();
  s.fault_bus = 2;
  s.tripped_branch = 1;  // the only 1-2 path: post-fault grid is split
  CHECK_THROWS_WITH_AS(build_admittance(c, NetworkPhase::PostFault, s),
                       doctest::Contains("islanded"), Error);

  c.branches.push_back({1, 2, 0.0, 0.3, 0.0, 1.0, true});  // second path
  AdmittanceMatrix post = build_admittance(c, NetworkPhase::PostFault, s);
  Complex expected = -1.0 / Complex(0.0, 0.3);  // only the added line remains
  CHECK(std::abs(post.y(0, 1) - expected) < 1e-14);

  s.tripped_branch = 99;
  CHECK_THROWS_AS(build_admittance(c, NetworkPhase::PostFault, s), Error);
}

TEST_CASE("bolted fault removes exactly one row and column, untouched elsewhere") {
  NetworkCase c = chain_case();
  AdmittanceMatrix pre = build_admittance(c, NetworkPhase::PreFault, no_fault());
  AdmittanceMatrix faulted = apply_bolted_fault(pre, 2);

  REQUIRE(faulted.dimension() == 2);
  CHECK(faulted.grounded_bus == 2);
  CHECK(faulted.pos_of(2) == -1);
  CHECK(faulted.bus_ids == std::vector<int>{1, 3});
  // surviving entries are bitwise those of the pre-fault matrix
  CHECK(faulted.y(0, 0) == pre.y(0, 0));
  CHECK(faulted.y(0, 1) == pre.y(0, 2));
  CHECK(faulted.y(1, 0) == pre.y(2, 0));
  CHECK(faulted.y(1, 1) == pre.y(2, 2));

  CHECK_THROWS_AS(apply_bolted_fault(pre, 42), Error);
}

TEST_CASE("power flow matches the closed form on the two-bus case") {
  NetworkCase c = builtin_case("smib");
  PowerFlowSolution pf = initial_power_flow(c);
  CHECK(pf.max_mismatch < 1e-8);
  CHECK(pf.iterations <= 10);

  // P = V1 V2 sin(th) / X with X = 0.2 (two 0.4 pu lines in parallel)
  double th = std::asin(0.8 * 0.2 / 1.05);
  CHECK(pf.v_mag[0] == doctest::Approx(1.05).epsilon(1e-12));
  CHECK(pf.v_mag[1] == doctest::Approx(1.00).epsilon(1e-12));
  CHECK(pf.v_ang[1] == 0.0);  // slack reference
  CHECK(pf.v_ang[0] == doctest::Approx(th).epsilon(1e-8));
  CHECK(pf.p_gen_sync[0] == doctest::Approx(0.8).epsilon(1e-8));
  CHECK(pf.p_gen_sync[1] == doctest::Approx(-0.8).epsilon(1e-8));  // lossless slack
  double q1 = 1.05 * (1.05 - 1.0 * std::cos(th)) / 0.2;
  CHECK(pf.q_gen_sync[0] == doctest::Approx(q1).epsilon(1e-7));
}

TEST_CASE("power flow on the bundled 39-bus cases is healthy") {
  for (const char* name : {"ieee39_sync", "ieee39_gfl2"}) {
    NetworkCase c = builtin_case(name);
    PowerFlowSolution pf = initial_power_flow(c);
    INFO(name);
    CHECK(pf.max_mismatch < 1e-8);
    CHECK(pf.iterations <= 10);
    for (int i = 0; i < c.n_buses(); ++i) {
      CHECK(pf.v_mag[i] > 0.85);
      CHECK(pf.v_mag[i] < 1.15);
    }
    // net injections sum to the (small, positive) series losses
    double losses = pf.p_inj.sum();
    CHECK(losses > 0.0);
    CHECK(losses < 1.0);
    // converters inject their setpoint at unity power factor (up to the
    // power-flow convergence tolerance)
    for (int j = 0; j < c.n_gfl(); ++j) {
      CHECK(pf.p_gen_gfl[j] == doctest::Approx(c.gfl_units[j].p_vs).epsilon(1e-8));
      CHECK(pf.q_gen_gfl[j] == doctest::Approx(0.0).scale(1.0).epsilon(1e-8));
    }
  }
}

TEST_CASE("power flow reports divergence on an infeasible case") {
  NetworkCase c = builtin_case("smib");
  c.loads.push_back({1, 50.0, 10.0});  // far beyond the line's transfer limit
  CHECK_THROWS_WITH_AS(initial_power_flow(c), doctest::Contains("converge"), Error);
}

TEST_CASE("kron reduction equals an independently built schur complement") {
  NetworkCase c = chain_case();
  PowerFlowSolution pf = initial_power_flow(c);
  AdmittanceMatrix adm = build_admittance(c, NetworkPhase::PreFault, no_fault());
  ReducedNetwork red = reduce_to_sources(adm, c, pf);

  REQUIRE(red.n_sync == 2);
  REQUIRE(red.n_gfl == 0);
  CHECK(red.dimension() == 2);
  CHECK(red.eliminated_bus_ids == std::vector<int>{1, 2, 3});

  // full 5-node system: 3 physical buses + 2 machine internal nodes
  Complex j(0.0, 1.0);
  Eigen::MatrixXcd ybb = adm.y;
  Complex v2 = std::polar(pf.v_mag[1], pf.v_ang[1]);
  ybb(1, 1) += Complex(0.5, -0.2) / std::norm(v2);  // load as frozen shunt
  Eigen::MatrixXcd ybi = Eigen::MatrixXcd::Zero(3, 2);
  Eigen::MatrixXcd yii = Eigen::MatrixXcd::Zero(2, 2);
  for (int i = 0; i < 2; ++i) {
    Complex ym = 1.0 / (j * c.sync_machines[i].xd_prime);
    int pos = c.bus_pos(c.sync_machines[i].bus);
    ybb(pos, pos) += ym;
    ybi(pos, i) = -ym;
    yii(i, i) = ym;
  }
  Eigen::MatrixXcd solve_bi = ybb.partialPivLu().solve(ybi);
  Eigen::MatrixXcd y_red_oracle = yii - ybi.transpose() * solve_bi;
  Eigen::MatrixXcd recovery_oracle = -solve_bi;

  CHECK((red.y_red - y_red_oracle).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE(red.recovery.rows() == 3);
  REQUIRE(red.recovery.cols() == 2);
  CHECK((red.recovery - recovery_oracle).cwiseAbs().maxCoeff() < 1e-12);

  // two branches in series behave like one: the transfer admittance between
  // the internal nodes of a purely reactive chain is 1/(x1 + x2 + xd1 + xd2)
  NetworkCase lossless = chain_case();
  lossless.branches[0].r = 0.0;
  lossless.branches[0].b_shunt = 0.0;
  lossless.branches[1].tap = 1.0;
  lossless.loads.clear();
  PowerFlowSolution lpf = initial_power_flow(lossless);
  AdmittanceMatrix ladm = build_admittance(lossless, NetworkPhase::PreFault, no_fault());
  ReducedNetwork lred = reduce_to_sources(ladm, lossless, lpf);
  Complex y_transfer = -lred.y_red(0, 1);
  Complex expected = 1.0 / (j * (0.10 + 0.20 + 0.2 + 0.05));
  CHECK(std::abs(y_transfer - expected) < 1e-12);
}

TEST_CASE("reduction + algebraic solve reproduce the power flow operating point") {
  for (const auto& name : builtin_case_names()) {
    NetworkCase c = builtin_case(name);
    INFO(c.name);
    PowerFlowSolution pf = initial_power_flow(c);
    AdmittanceMatrix adm = build_admittance(c, NetworkPhase::PreFault, no_fault());
    ReducedNetwork red = reduce_to_sources(adm, c, pf);
    CHECK(red.n_active() == c.n_gfl());

    Eigen::VectorXd e_mag, delta;
    sources_from_pf(c, pf, e_mag, delta);
    Eigen::VectorXd p_v(c.n_gfl()), theta_p(c.n_gfl());
    for (int g = 0; g < c.n_gfl(); ++g) {
      p_v[g] = c.gfl_units[g].p_vs;
      theta_p[g] = pf.v_ang[c.bus_pos(c.gfl_units[g].bus)];
    }

    AlgebraicSolution alg = solve_algebraic(red, c, e_mag, delta, p_v, theta_p);
    REQUIRE(alg.converged);
    CHECK(algebraic_residual_inf(red, c, e_mag, delta, p_v, theta_p, alg) < 1e-9);
    recover_bus_voltages(red, c, e_mag, delta, alg);

    // recovered bus voltages and device powers match the power flow
    for (int i = 0; i < c.n_buses(); ++i) {
      CHECK(alg.v_mag[i] == doctest::Approx(pf.v_mag[i]).epsilon(1e-7));
      CHECK(alg.v_ang[i] == doctest::Approx(pf.v_ang[i]).scale(1.0).epsilon(1e-7));
    }
    for (int i = 0; i < c.n_sync(); ++i)
      CHECK(alg.p_e_sync[i] == doctest::Approx(pf.p_gen_sync[i]).scale(1.0).epsilon(1e-7));
    for (int g = 0; g < c.n_gfl(); ++g) {
      CHECK(alg.p_e_gfl[g] == doctest::Approx(p_v[g]).epsilon(1e-7));
      CHECK(alg.v_gfl[g] == doctest::Approx(pf.v_mag[c.bus_pos(c.gfl_units[g].bus)])
                                .epsilon(1e-7));
      // power identity P_e = V |I| cos(theta - theta_P)
      double p_id = alg.v_gfl[g] * std::abs(alg.i_gfl[g]) *
                    std::cos(alg.th_gfl[g] - theta_p[g]);
      CHECK(alg.p_e_gfl[g] == doctest::Approx(p_id).epsilon(1e-10));
    }
  }
}

TEST_CASE("algebraic solve off the equilibrium stays converged and consistent") {
  NetworkCase c = builtin_case("ieee39_gfl2");
  PowerFlowSolution pf = initial_power_flow(c);
  FaultScenario s = *c.default_scenario;
  AdmittanceMatrix pre = build_admittance(c, NetworkPhase::PreFault, s);
  ReducedNetwork red = reduce_to_sources(pre, c, pf);

  Eigen::VectorXd e_mag, delta;
  sources_from_pf(c, pf, e_mag, delta);
  Eigen::VectorXd p_v(c.n_gfl()), theta_p(c.n_gfl());
  for (int g = 0; g < c.n_gfl(); ++g) {
    p_v[g] = 1.3 * c.gfl_units[g].p_vs;  // push the converters off their setpoint
    theta_p[g] = pf.v_ang[c.bus_pos(c.gfl_units[g].bus)] + 0.2;
  }
  for (int i = 0; i < c.n_sync(); ++i) delta[i] += 0.1 * (i % 3);

  AlgebraicSolution alg = solve_algebraic(red, c, e_mag, delta, p_v, theta_p);
  REQUIRE(alg.converged);
  CHECK(algebraic_residual_inf(red, c, e_mag, delta, p_v, theta_p, alg) < 1e-9);

  // warm start shifted by a full turn: the solution follows the warm branch
  AlgebraicSolution warm = alg;
  for (int g = 0; g < c.n_gfl(); ++g) warm.th_gfl[g] += 2.0 * M_PI;
  AlgebraicSolution again = solve_algebraic(red, c, e_mag, delta, p_v, theta_p, {}, &warm);
  REQUIRE(again.converged);
  for (int g = 0; g < c.n_gfl(); ++g)
    CHECK(again.th_gfl[g] == doctest::Approx(alg.th_gfl[g] + 2.0 * M_PI).epsilon(1e-9));
}

TEST_CASE("during-fault reduction grounds the faulted bus") {
  NetworkCase c = builtin_case("ieee39_gfl2");
  PowerFlowSolution pf = initial_power_flow(c);
  FaultScenario s = *c.default_scenario;
  AdmittanceMatrix pre = build_admittance(c, NetworkPhase::PreFault, s);
  AdmittanceMatrix during = apply_bolted_fault(pre, s.fault_bus);
  ReducedNetwork red = reduce_to_sources(during, c, pf);

  CHECK(red.grounded_bus == s.fault_bus);
  CHECK(red.phase == NetworkPhase::DuringFault);  // stamped by apply_bolted_fault
  // the faulted bus is pinned at zero volts in the recovered view
  Eigen::VectorXd e_mag, delta;
  sources_from_pf(c, pf, e_mag, delta);
  Eigen::VectorXd p_v = Eigen::VectorXd::Zero(c.n_gfl());
  Eigen::VectorXd theta_p = Eigen::VectorXd::Zero(c.n_gfl());
  for (int g = 0; g < c.n_gfl(); ++g) p_v[g] = c.gfl_units[g].p_vs;
  AlgebraicSolution alg = solve_algebraic(red, c, e_mag, delta, p_v, theta_p);
  REQUIRE(alg.converged);
  recover_bus_voltages(red, c, e_mag, delta, alg);
  CHECK(alg.v_mag[c.bus_pos(s.fault_bus)] == 0.0);
}
