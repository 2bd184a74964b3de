#pragma once
// Network side of the DAE: phase-specific admittance matrices, initializing
// power flow, constant-impedance load absorption + Kron reduction onto device
// nodes, and the algebraic solve that couples devices to the grid.
//
// GFL network interface: each converter enters the network as a current
// source I = (P_v / max(V, v_floor)) * e^{j theta_P} — current aligned with
// the PLL angle, zero reactive component. This fixes the meaning of the GFL
// electrical power: P_e = V * |I| * cos(theta - theta_P).

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "cctkit/case_model.hpp"

namespace cctkit {

using Complex = std::complex<double>;

enum class NetworkPhase { PreFault, DuringFault, PostFault };

std::string to_string(NetworkPhase phase);

struct AdmittanceMatrix {
  Eigen::MatrixXcd y;        // dense bus admittance over `bus_ids`
  std::vector<int> bus_ids;  // row/col -> external bus id
  NetworkPhase phase = NetworkPhase::PreFault;
  int grounded_bus = 0;  // bus eliminated by a bolted fault, 0 = none

  int dimension() const { return static_cast<int>(bus_ids.size()); }
  // Row/col of a bus id, or -1 when absent (grounded).
  int pos_of(int bus_id) const;
};

struct PowerFlowSolution {
  Eigen::VectorXd v_mag, v_ang;  // per case bus position
  Eigen::VectorXd p_inj, q_inj;  // realized net injection per bus, pu
  Eigen::VectorXd p_gen_sync, q_gen_sync;  // per machine, case order
  Eigen::VectorXd p_gen_gfl, q_gen_gfl;    // per gfl unit, case order
  int iterations = 0;
  double max_mismatch = 0.0;
};

// Reduction onto {machine internal nodes} ++ {in-service GFL terminal buses}.
// Machine node i sits at row i; active GFL j follows the machines.
struct ReducedNetwork {
  NetworkPhase phase = NetworkPhase::PreFault;
  int grounded_bus = 0;
  int n_sync = 0, n_gfl = 0;   // fleet sizes (a grounded GFL is still counted)
  std::vector<bool> gfl_active;  // false when the unit's bus is grounded
  Eigen::MatrixXcd y_red;      // (n_sync + n_active) square

  // Voltage recovery for eliminated physical buses: v_elim = recovery * v_dev.
  Eigen::MatrixXcd recovery;
  std::vector<int> eliminated_bus_ids;

  // Cached pieces for the algebraic solve.
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu_ygg;  // active-gfl diagonal block
  Eigen::MatrixXcd y_gm;                         // active-gfl rows x machine cols

  int n_active() const;
  int dimension() const { return n_sync + n_active(); }
  int mach_node(int i) const { return i; }
  // Row of gfl unit j in y_red, or -1 when its bus is grounded.
  int gfl_node(int j) const;
};

struct AlgebraicOptions {
  double tol = 1e-10;   // max voltage change per fixed-point sweep, pu
  int max_iters = 100;
  bool allow_newton_fallback = true;
};

struct AlgebraicSolution {
  // Full physical-bus view (filled by recover_bus_voltages; grounded bus = 0).
  Eigen::VectorXd v_mag, v_ang;  // per case bus position
  // Device view.
  Eigen::VectorXcd i_sync, i_gfl;     // injected currents, pu
  Eigen::VectorXd p_e_sync, p_e_gfl;  // electrical power, pu
  // Algebraic unknowns: terminal (V, theta) per gfl unit. A grounded unit
  // reports (0, theta_P). theta is kept angle-continuous against the warm
  // start so finite differences across steps stay clean.
  Eigen::VectorXd v_gfl, th_gfl;
  int iterations = 0;
  bool converged = false;
  bool used_newton_fallback = false;
};

// Raw branch assembly (pi model with off-nominal taps). pre_fault uses all
// in-service branches; during_fault additionally grounds scenario.fault_bus;
// post_fault removes scenario.tripped_branch. pre/post verify connectivity
// and throw naming any islanded buses.
AdmittanceMatrix build_admittance(const NetworkCase& c, NetworkPhase phase,
                                  const FaultScenario& scenario);

// Bolted fault as exact node elimination: V = 0 enforced by deleting the
// bus's row/column. Dimension drops by one.
AdmittanceMatrix apply_bolted_fault(const AdmittanceMatrix& y, int fault_bus);

// Newton-Raphson AC power flow; mismatch < 1e-8 pu within 50 iterations or
// throws with the final mismatch and worst bus.
PowerFlowSolution initial_power_flow(const NetworkCase& c);

// Loads become constant shunts y = (P - jQ)/V^2 frozen at the equilibrium;
// machines are extended with internal nodes behind xd_prime; everything but
// device nodes is eliminated exactly (Schur complement).
ReducedNetwork reduce_to_sources(const AdmittanceMatrix& y, const NetworkCase& c,
                                 const PowerFlowSolution& equilibrium);

// Solves the algebraic network equations for GFL terminal voltages given
// machine sources E'∠δ and converter states (P_v, θ_P): fixed-point on the
// converter current magnitude with Aitken acceleration, damped-Newton
// fallback on stall. Non-convergence is reported via `converged`, not thrown
// (the TDS engine treats it as algebraic collapse).
AlgebraicSolution solve_algebraic(const ReducedNetwork& net, const NetworkCase& c,
                                  const Eigen::VectorXd& e_mag,
                                  const Eigen::VectorXd& delta,
                                  const Eigen::VectorXd& p_v,
                                  const Eigen::VectorXd& theta_p,
                                  const AlgebraicOptions& opts = {},
                                  const AlgebraicSolution* warm = nullptr);

// Fills alg.v_mag / alg.v_ang for every physical bus from the device-node
// voltages via the reduction's recovery operator.
void recover_bus_voltages(const ReducedNetwork& net, const NetworkCase& c,
                          const Eigen::VectorXd& e_mag, const Eigen::VectorXd& delta,
                          AlgebraicSolution& alg);

// ‖(Y v)_gfl - I_gfl‖∞ over active converter nodes — solver self-check.
double algebraic_residual_inf(const ReducedNetwork& net, const NetworkCase& c,
                              const Eigen::VectorXd& e_mag, const Eigen::VectorXd& delta,
                              const Eigen::VectorXd& p_v, const Eigen::VectorXd& theta_p,
                              const AlgebraicSolution& alg);

}  // namespace cctkit
