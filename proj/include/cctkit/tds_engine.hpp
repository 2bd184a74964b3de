#pragma once
// Fixed-step time-domain simulation of the three-phase (pre/during/post
// fault) DAE, trajectory recording, instability classification, and the
// interval-elimination (bisection) CCT oracle.

#include <optional>
#include <utility>

#include "cctkit/device_dynamics.hpp"

namespace cctkit {

enum class Integrator { Trapezoidal, Rk4 };

Integrator integrator_from_string(const std::string& s);

struct SimOptions {
  Integrator integrator = Integrator::Trapezoidal;
  double newton_tol = 1e-10;  // implicit-step convergence, max |dx|
  int newton_max_iters = 25;
  AlgebraicOptions algebraic;
  // Store the variational blocks at every recorded post-fault point; the
  // sensitivity engine then integrates without re-deriving them.
  bool record_jacobians = false;
};

struct PhaseMarks {
  int fault_on = -1;  // grid index of t1, -1 when outside the horizon
  int clearing = -1;  // grid index of t1 + t_cl
};

// Variational blocks frozen at one recorded point: the reduced state-space
// matrix M = A - B D^-1 C plus the raw C (ds/dx) and D (ds/dy) blocks needed
// to recover the algebraic sensitivity U. The trapezoidal stepper also hands
// over its factored Newton matrix I - dt/2 M so the variational integration
// can reuse it instead of refactoring.
struct StepJacobians {
  Eigen::MatrixXd m, dsdx, dsdy;
  std::optional<Eigen::PartialPivLU<Eigen::MatrixXd>> trap_lu;
};

struct Trajectory {
  StateLayout layout;
  FaultScenario scenario;
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;  // flat state per step
  std::vector<AlgebraicSolution> algebraics;
  PhaseMarks marks;
  // Algebraic point at the clearing instant evaluated on the faulted network
  // (t_cl^-); states are continuous across the switch, algebraics jump.
  std::optional<AlgebraicSolution> clearing_pre_switch;
  bool algebraic_collapse = false;
  double collapse_time = 0.0;
  // s-indexed from marks.clearing when SimOptions::record_jacobians was set.
  std::vector<StepJacobians> post_jacobians;

  int size() const { return static_cast<int>(times.size()); }
};

// Everything reusable across clearing times of the same fault: power flow,
// device initialization, and the three reduced networks. Holds a pointer to
// the case; the caller keeps it alive.
class ScenarioAssembly {
 public:
  ScenarioAssembly(const NetworkCase& c, const FaultScenario& scenario);

  const NetworkCase& net_case() const { return *case_; }
  const SystemModel& model() const { return *model_; }
  const InitializedSystem& init() const { return init_; }
  const PowerFlowSolution& power_flow() const { return pf_; }
  const ReducedNetwork& net(NetworkPhase phase) const;
  int fault_bus() const { return fault_bus_; }
  int tripped_branch() const { return tripped_branch_; }

 private:
  const NetworkCase* case_;
  int fault_bus_, tripped_branch_;
  PowerFlowSolution pf_;
  ReducedNetwork pre_, during_, post_;
  InitializedSystem init_;
  std::optional<SystemModel> model_;
};

// Integrates the scenario on the fixed grid. Events land exactly on grid
// points (validated); the state is continuous across both switches while the
// algebraic variables are re-solved. Algebraic non-convergence truncates the
// trajectory and sets algebraic_collapse instead of throwing.
Trajectory simulate(const NetworkCase& c, const FaultScenario& scenario,
                    const SimOptions& options = {});
Trajectory simulate(const ScenarioAssembly& assembly, const FaultScenario& scenario,
                    const SimOptions& options = {});

enum class InstabilityReason { Converged, AngleSeparation, PllDivergence, AlgebraicCollapse };

std::string to_string(InstabilityReason reason);

struct ClassifierOptions {
  double angle_separation = 2.0 * M_PI;  // max pairwise rotor-angle spread, rad
  double pll_error = M_PI / 2.0;         // |theta - theta_P| threshold, rad
  double pll_hold = 0.5;                 // persistence required, s
};

struct StabilityVerdict {
  bool stable = true;
  InstabilityReason reason = InstabilityReason::Converged;
  std::optional<double> first_violation_time;
};

StabilityVerdict classify_stability(const Trajectory& traj,
                                    const ClassifierOptions& options = {});

struct CctBracket {
  double lower = 0.0;  // largest tested stable T_cl
  double upper = 0.0;  // smallest tested unstable T_cl
  int evaluations = 0;
  std::vector<std::pair<double, bool>> log;  // (t_cl, stable) in test order
};

// Classical interval elimination on T_cl. Verifies the initial bracket with
// two simulations (lower stable, upper unstable, else throws), then bisects
// on the dt grid until the width is <= tol. Requires tol >= dt.
CctBracket bisect_cct(const NetworkCase& c, const FaultScenario& tmpl,
                      std::pair<double, double> bracket0, double tol,
                      const SimOptions& options = {});
CctBracket bisect_cct(const ScenarioAssembly& assembly, const FaultScenario& tmpl,
                      std::pair<double, double> bracket0, double tol,
                      const SimOptions& options = {});

namespace detail {
// Global count of completed simulate() calls; tests use deltas to assert
// simulation-count economy.
long simulation_count();
}  // namespace detail

}  // namespace cctkit
