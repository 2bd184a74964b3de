#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cctkit/tds_engine.hpp"

using namespace cctkit;

TEST_CASE("integrator names parse") {
  CHECK(integrator_from_string("trap") == Integrator::Trapezoidal);
  CHECK(integrator_from_string("trapezoidal") == Integrator::Trapezoidal);
  CHECK(integrator_from_string("rk4") == Integrator::Rk4);
  CHECK_THROWS_AS(integrator_from_string("euler"), Error);
}

TEST_CASE("an unfaulted system stays on its equilibrium for the full horizon") {
  for (const char* name : {"smib", "ieee39_gfl2"}) {
    NetworkCase c = builtin_case(name);
    FaultScenario s = *c.default_scenario;
    s.fault_bus = 0;
    s.tripped_branch = 0;
    s.horizon = 15.0;
    Trajectory traj = simulate(c, s);
    INFO(name);
    REQUIRE(!traj.states.empty());
    CHECK(!traj.algebraic_collapse);
    CHECK(traj.times.back() == doctest::Approx(15.0).epsilon(1e-9));
    const Eigen::VectorXd& x0 = traj.states.front();
    double drift = 0.0;
    for (const auto& x : traj.states) drift = std::max(drift, (x - x0).cwiseAbs().maxCoeff());
    INFO("max drift " << drift);
    CHECK(drift < 1e-6);
    CHECK(classify_stability(traj).stable);
  }
}

TEST_CASE("event marks land exactly on the grid") {
  NetworkCase c = builtin_case("ieee39_gfl2");
  FaultScenario s = *c.default_scenario;
  s.t_cl = 0.16;
  Trajectory traj = simulate(c, s);

  REQUIRE(traj.marks.fault_on >= 0);
  REQUIRE(traj.marks.clearing > traj.marks.fault_on);
  CHECK(traj.times[traj.marks.fault_on] == doctest::Approx(s.t1).epsilon(1e-12));
  CHECK(traj.times[traj.marks.clearing] ==
        doctest::Approx(s.t1 + s.t_cl).epsilon(1e-12));
  for (int k = 0; k < traj.size(); ++k)
    CHECK(traj.times[k] == doctest::Approx(k * s.dt).epsilon(1e-9));
  REQUIRE(traj.clearing_pre_switch.has_value());
}

TEST_CASE("the state is continuous across clearing; the algebraics jump") {
  NetworkCase c = builtin_case("ieee39_gfl2");
  FaultScenario a = *c.default_scenario;
  a.t_cl = 0.16;
  FaultScenario b = a;
  b.t_cl = 0.20;  // same fault, later clearing

  Trajectory ta = simulate(c, a);
  Trajectory tb = simulate(c, b);
  int kcl = ta.marks.clearing;

  // both runs integrate the identical faulted system up to a's clearing
  // instant, so the shared prefix of states matches bitwise — the switch
  // re-solves algebraic variables only
  for (int k = 0; k <= kcl; ++k) CHECK(ta.states[k] == tb.states[k]);

  // a's pre-switch algebraic point is b's regular sample on the faulted net
  REQUIRE(ta.clearing_pre_switch.has_value());
  const AlgebraicSolution& pre = *ta.clearing_pre_switch;
  for (int j = 0; j < c.n_gfl(); ++j) {
    CHECK(pre.v_gfl[j] == tb.algebraics[kcl].v_gfl[j]);
    CHECK(pre.th_gfl[j] == tb.algebraics[kcl].th_gfl[j]);
  }
  // while the recorded post-switch algebraics genuinely differ
  double jump = 0.0;
  for (int j = 0; j < c.n_gfl(); ++j)
    jump = std::max(jump, std::abs(pre.v_gfl[j] - ta.algebraics[kcl].v_gfl[j]));
  CHECK(jump > 1e-4);
}

TEST_CASE("assembly reuse reproduces the one-shot simulation bitwise") {
  NetworkCase c = builtin_case("ieee39_gfl2");
  FaultScenario s = *c.default_scenario;
  s.t_cl = 0.18;
  ScenarioAssembly assembly(c, s);
  Trajectory one = simulate(c, s);
  Trajectory two = simulate(assembly, s);
  REQUIRE(one.size() == two.size());
  for (int k = 0; k < one.size(); ++k) CHECK(one.states[k] == two.states[k]);
}

TEST_CASE("trapezoidal and rk4 agree on a damped stable swing") {
  NetworkCase c = builtin_case("smib");
  for (auto& m : c.sync_machines) m.d = 0.13;
  FaultScenario s = *c.default_scenario;
  s.t_cl = 0.05;

  SimOptions trap;
  trap.integrator = Integrator::Trapezoidal;
  SimOptions rk4;
  rk4.integrator = Integrator::Rk4;
  Trajectory a = simulate(c, s, trap);
  Trajectory b = simulate(c, s, rk4);
  REQUIRE(a.size() == b.size());

  double worst = 0.0;
  for (int k = 0; k < a.size(); ++k)
    worst = std::max(worst, (a.states[k] - b.states[k]).cwiseAbs().maxCoeff());
  // omega entries dominate the norm; still well under one part in a thousand
  INFO("max state gap " << worst);
  CHECK(worst < 1e-3);
  CHECK(classify_stability(a).stable);
  CHECK(classify_stability(b).stable);
}

TEST_CASE("the trapezoidal stepper converges at second order in dt") {
  NetworkCase c = builtin_case("smib");
  FaultScenario s1 = *c.default_scenario;
  s1.t_cl = 0.2;
  FaultScenario s2 = s1, s4 = s1;
  s2.dt = s1.dt / 2;
  s4.dt = s1.dt / 4;

  Trajectory a = simulate(c, s1);
  Trajectory b = simulate(c, s2);
  Trajectory d = simulate(c, s4);
  auto spread = [](const Trajectory& t, int k) { return t.states[k][0] - t.states[k][2]; };
  double gap12 = 0.0, gap24 = 0.0;
  for (int k = 0; k < a.size(); ++k) {
    gap12 = std::max(gap12, std::abs(spread(a, k) - spread(b, 2 * k)));
    gap24 = std::max(gap24, std::abs(spread(b, 2 * k) - spread(d, 4 * k)));
  }
  INFO("gap dt->dt/2 " << gap12 << ", dt/2->dt/4 " << gap24);
  CHECK(gap12 < 2e-2);  // near-critical clearing amplifies the truncation error
  double order = std::log2(gap12 / gap24);
  INFO("observed order " << order);
  CHECK(order > 1.6);
  CHECK(order < 2.4);
}

TEST_CASE("post-fault energy is conserved on the lossless two-machine case") {
  NetworkCase c = builtin_case("smib");
  FaultScenario s = *c.default_scenario;
  s.t_cl = 0.2;  // stable: margin is near 0.266
  s.dt = 0.0025;
  Trajectory traj = simulate(c, s);
  REQUIRE(classify_stability(traj).stable);

  ScenarioAssembly assembly(c, s);
  const auto& machines = assembly.init().machines;
  double omega0 = c.omega0();
  double m1 = 2.0 * machines[0].h / omega0, m2 = 2.0 * machines[1].h / omega0;
  double m_eq = m1 * m2 / (m1 + m2);
  double p_eq = (m2 * machines[0].p_mech - m1 * machines[1].p_mech) / (m1 + m2);
  double x_post = 0.4 + machines[0].xd_prime + machines[1].xd_prime;
  double p_max = machines[0].e_prime_mag * machines[1].e_prime_mag / x_post;

  auto energy = [&](const Eigen::VectorXd& x) {
    double rel_delta = x[0] - x[2];
    double rel_omega = x[1] - x[3];
    return 0.5 * m_eq * rel_omega * rel_omega - p_eq * rel_delta - p_max * std::cos(rel_delta);
  };
  int kcl = traj.marks.clearing;
  double e0 = energy(traj.states[kcl]);
  double worst = 0.0;
  for (int k = kcl; k < traj.size(); ++k)
    worst = std::max(worst, std::abs(energy(traj.states[k]) - e0));
  INFO("energy drift " << worst << " around " << e0);
  CHECK(worst < 1e-3);
}

TEST_CASE("verdicts flip once along a clearing-time sweep") {
  NetworkCase c = builtin_case("ieee39_gfl2");
  FaultScenario s = *c.default_scenario;
  for (double t_cl : {0.05, 0.10, 0.15, 0.20}) {
    s.t_cl = t_cl;
    INFO("t_cl " << t_cl);
    CHECK(classify_stability(simulate(c, s)).stable);
  }
  for (double t_cl : {0.25, 0.30, 0.40}) {
    s.t_cl = t_cl;
    INFO("t_cl " << t_cl);
    StabilityVerdict v = classify_stability(simulate(c, s));
    CHECK(!v.stable);
    REQUIRE(v.first_violation_time.has_value());
    CHECK(*v.first_violation_time > s.clearing_time());
  }
}

TEST_CASE("angle-separation verdicts are robust to the threshold choice") {
  NetworkCase c = builtin_case("ieee39_sync");
  FaultScenario s = *c.default_scenario;

  s.t_cl = 0.30;  // well past the margin near 0.215
  Trajectory unstable = simulate(c, s);
  s.t_cl = 0.15;
  Trajectory stable = simulate(c, s);

  for (double factor : {0.5, 1.0, 1.5}) {
    ClassifierOptions opt;
    opt.angle_separation = factor * 2.0 * M_PI;
    INFO("threshold factor " << factor);
    StabilityVerdict v = classify_stability(unstable, opt);
    CHECK(!v.stable);
    CHECK(v.reason == InstabilityReason::AngleSeparation);
    CHECK(classify_stability(stable, opt).stable);
  }
}

TEST_CASE("pll divergence requires persistence, not a transient excursion") {
  StateLayout lay;
  lay.n_sync = 0;
  lay.n_gfl = 1;

  Trajectory traj;
  traj.layout = lay;
  traj.scenario.fault_bus = 0;
  traj.scenario.tripped_branch = 0;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(lay.nx());  // theta_p stays 0
  for (int k = 0; k <= 20; ++k) {
    double t = 0.1 * k;
    AlgebraicSolution alg;
    alg.v_gfl = Eigen::VectorXd::Constant(1, 1.0);
    // PLL error jumps above pi/2 from t = 1.0 onward
    alg.th_gfl = Eigen::VectorXd::Constant(1, t >= 1.0 - 1e-12 ? 2.0 : 0.2);
    traj.times.push_back(t);
    traj.states.push_back(x);
    traj.algebraics.push_back(alg);
  }

  StabilityVerdict v = classify_stability(traj);
  CHECK(!v.stable);
  CHECK(v.reason == InstabilityReason::PllDivergence);
  // flagged once the excursion has persisted for the hold time
  CHECK(*v.first_violation_time == doctest::Approx(1.5).epsilon(1e-12));

  ClassifierOptions patient;
  patient.pll_hold = 1.5;  // longer than the recorded excursion
  CHECK(classify_stability(traj, patient).stable);
}

TEST_CASE("a truncated run without a verdict refuses to classify") {
  StateLayout lay;
  lay.n_sync = 0;
  lay.n_gfl = 1;
  Trajectory traj;
  traj.layout = lay;
  traj.scenario.fault_bus = 1;
  traj.scenario.tripped_branch = 0;
  traj.scenario.t1 = 0.5;
  traj.scenario.t_cl = 1.0;  // clears at 1.5, but the record stops at 1.0
  for (int k = 0; k <= 10; ++k) {
    AlgebraicSolution alg;
    alg.v_gfl = Eigen::VectorXd::Constant(1, 1.0);
    alg.th_gfl = Eigen::VectorXd::Zero(1);
    traj.times.push_back(0.1 * k);
    traj.states.push_back(Eigen::VectorXd::Zero(lay.nx()));
    traj.algebraics.push_back(alg);
  }
  CHECK_THROWS_WITH_AS(classify_stability(traj), doctest::Contains("no verdict"), Error);
}

TEST_CASE("deep faults can collapse the algebraic solve; the run truncates") {
  NetworkCase c = builtin_case("ieee39_gfl2");
  FaultScenario s = *c.default_scenario;
  s.t_cl = 0.60;
  Trajectory traj = simulate(c, s);
  REQUIRE(traj.algebraic_collapse);
  CHECK(traj.collapse_time > s.clearing_time());
  CHECK(traj.times.back() < s.horizon - s.dt);
  CHECK(!classify_stability(traj).stable);
}

TEST_CASE("recorded variational blocks cover every post-clearing sample") {
  NetworkCase c = builtin_case("ieee39_gfl2");
  FaultScenario s = *c.default_scenario;
  s.t_cl = 0.16;
  SimOptions opt;
  opt.record_jacobians = true;
  Trajectory traj = simulate(c, s, opt);

  REQUIRE(traj.marks.clearing >= 0);
  int n_post = traj.size() - traj.marks.clearing;
  REQUIRE(static_cast<int>(traj.post_jacobians.size()) == n_post);
  int nx = traj.layout.nx();
  // the clearing-instant entry is rebuilt from the switch re-solve; later
  // entries carry the trapezoidal newton factorization for reuse
  CHECK(!traj.post_jacobians.front().trap_lu.has_value());
  CHECK(traj.post_jacobians.back().trap_lu.has_value());
  for (const auto& j : traj.post_jacobians) {
    REQUIRE(j.m.rows() == nx);
    REQUIRE(j.m.cols() == nx);
    CHECK(j.m.allFinite());
  }

  // rk4 records plain blocks without a factorization
  opt.integrator = Integrator::Rk4;
  Trajectory traj4 = simulate(c, s, opt);
  CHECK(!traj4.post_jacobians.back().trap_lu.has_value());
  CHECK(static_cast<int>(traj4.post_jacobians.size()) == traj4.size() - traj4.marks.clearing);

  // recording off by default
  Trajectory plain = simulate(c, s);
  CHECK(plain.post_jacobians.empty());
}

TEST_CASE("bisection brackets the gfl2 margin from a wide start") {
  NetworkCase c = builtin_case("ieee39_gfl2");
  FaultScenario s = *c.default_scenario;
  long before = detail::simulation_count();
  CctBracket b = bisect_cct(c, s, {0.1, 0.7}, 0.01);
  long used = detail::simulation_count() - before;

  CHECK(b.lower == doctest::Approx(0.20).epsilon(1e-12));
  CHECK(b.upper == doctest::Approx(0.21).epsilon(1e-12));
  CHECK(b.upper - b.lower <= 0.01 + 1e-12);
  CHECK(b.evaluations == static_cast<int>(b.log.size()));
  CHECK(b.evaluations >= 4);
  CHECK(used == b.evaluations);

  // endpoint verification comes first (snapped to the dt grid), then
  // strictly interior midpoints
  CHECK(b.log[0].first == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(b.log[0].second);
  CHECK(b.log[1].first == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(!b.log[1].second);
  for (size_t i = 2; i < b.log.size(); ++i) {
    CHECK(b.log[i].first > 0.1);
    CHECK(b.log[i].first < 0.7);
  }
  // every stable probe sits at or below the final lower bound
  for (const auto& [t_cl, stable] : b.log) {
    if (stable) CHECK(t_cl <= b.lower + 1e-12);
    else CHECK(t_cl >= b.upper - 1e-12);
  }
}

TEST_CASE("bisection validates its bracket and tolerance") {
  NetworkCase c = builtin_case("ieee39_gfl2");
  FaultScenario s = *c.default_scenario;
  CHECK_THROWS_WITH_AS(bisect_cct(c, s, {0.1, 0.7}, 0.001),
                       doctest::Contains("tol"), Error);
  CHECK_THROWS_WITH_AS(bisect_cct(c, s, {0.30, 0.7}, 0.01),
                       doctest::Contains("already unstable"), Error);
  CHECK_THROWS_WITH_AS(bisect_cct(c, s, {0.05, 0.10}, 0.01),
                       doctest::Contains("still stable"), Error);
}

TEST_CASE("smib margin sits between 0.26 and 0.27") {
  NetworkCase c = builtin_case("smib");
  FaultScenario s = *c.default_scenario;
  CctBracket b = bisect_cct(c, s, {0.1, 0.5}, 0.01);
  CHECK(b.lower == doctest::Approx(0.26).epsilon(1e-12));
  CHECK(b.upper == doctest::Approx(0.27).epsilon(1e-12));
}

TEST_CASE("simulation counter ticks once per completed run") {
  NetworkCase c = builtin_case("smib");
  FaultScenario s = *c.default_scenario;
  long before = detail::simulation_count();
  simulate(c, s);
  CHECK(detail::simulation_count() - before == 1);
}
