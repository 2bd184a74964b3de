#pragma once
// Trajectory sensitivity to the fault-clearing time T_cl: variational (LTV)
// integration along the recorded post-fault trajectory, an independent
// central finite-difference method used as the reference oracle, and the SN
// fleet norms whose peak feeds the CCT estimator.
//
// Time alignment: by default sensitivities live on elapsed time s = t - t_cl
// since each run's own clearing instant ("elapsed"); the "absolute" variant
// compares at equal absolute time, which turns the variational initial
// condition into the jump P1 - P2 across the switch.

#include "cctkit/tds_engine.hpp"

namespace cctkit {

enum class SensitivityMethod { Variational, FiniteDifference };
enum class Alignment { Elapsed, Absolute };

Alignment alignment_from_string(const std::string& s);
std::string to_string(Alignment a);

struct SensitivityOptions {
  Alignment alignment = Alignment::Elapsed;
  SimOptions sim;  // integrator/grid choices mirror the base run
};

struct SensitivityTrajectory {
  SensitivityMethod method = SensitivityMethod::Variational;
  Alignment alignment = Alignment::Elapsed;
  double base_t_cl = 0.0;
  StateLayout layout;
  std::vector<double> elapsed;     // s grid, s = 0 at clearing
  std::vector<Eigen::VectorXd> w;  // dx/dT_cl per step, nx
  std::vector<Eigen::VectorXd> u;  // dy/dT_cl per step, packed [V, theta]
  // Set when a collapse shortened the window relative to the horizon.
  bool truncated = false;

  int size() const { return static_cast<int>(elapsed.size()); }
};

// Integrates dW/ds = M(s) W with M = A - B D^-1 C frozen per recorded step,
// U = -D^-1 C W recovered algebraically. IC (elapsed): W(0) = P1(x_cl, y_cl^-),
// the during-fault vector field at clearing. Uses Jacobians recorded in the
// base trajectory when present, otherwise rebuilds them from the model.
SensitivityTrajectory sensitivity_variational(const ScenarioAssembly& assembly,
                                              const Trajectory& base,
                                              const SensitivityOptions& options = {});
SensitivityTrajectory sensitivity_variational(const NetworkCase& c,
                                              const FaultScenario& scenario,
                                              const SensitivityOptions& options = {});

// Central difference between runs at T_cl +/- h (h a multiple of dt; h <= 0
// means dt), states compared at equal elapsed time since each run's own
// clearing instant. Reference oracle for the variational path.
SensitivityTrajectory sensitivity_finite_difference(const ScenarioAssembly& assembly,
                                                    const FaultScenario& scenario, double h,
                                                    const SensitivityOptions& options = {});
SensitivityTrajectory sensitivity_finite_difference(const NetworkCase& c,
                                                    const FaultScenario& scenario, double h,
                                                    const SensitivityOptions& options = {});

enum class Fleet { Sync, Gfl };

std::string to_string(Fleet fleet);

struct SnSeries {
  Fleet fleet = Fleet::Sync;
  int reference_bus = 0;
  std::vector<double> elapsed;
  std::vector<double> values;
};

// SN_SG(s) = sqrt( sum_i (W_delta_i - W_delta_j)^2 + W_omega_i^2 ), sum over
// all machines, j the reference (default: largest H). reference_bus = 0
// selects the default.
SnSeries sn_sync(const SensitivityTrajectory& sens, const NetworkCase& c,
                 int reference_bus = 0);

// SN_AG(s) = sqrt( sum_i W_xv_i^2 + W_xp_i^2 + W_pv_i^2 +
//                        (W_thp_i - W_thp_k)^2 ), k the reference GFL
// (default: largest H_v).
SnSeries sn_gfl(const SensitivityTrajectory& sens, const NetworkCase& c,
                int reference_bus = 0);

struct PeakResult {
  double value = 0.0;
  double at = 0.0;  // elapsed time of the peak
};

// m(SN): max of the series over the elapsed-time window (closed interval);
// the one-argument form scans the whole record.
PeakResult peak(const SnSeries& sn, std::pair<double, double> window);
PeakResult peak(const SnSeries& sn);

namespace detail {
// Bare LTV propagator W_{k+1} from {M_k}, exposed for closed-form testing.
std::vector<Eigen::VectorXd> integrate_ltv(const std::vector<Eigen::MatrixXd>& m, double dt,
                                           const Eigen::VectorXd& w0, Integrator integrator);
}  // namespace detail

}  // namespace cctkit
