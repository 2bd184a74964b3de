#pragma once
// Device differential models: classical synchronous machine (E' behind xd')
// and grid-following converter (virtual-inertia power tracking + PLL), their
// equilibrium initialization, and the analytic Jacobian blocks used by the
// implicit integrator and the variational sensitivity equations.
//
// Angle convention: all angle states (delta, theta_P) are integrated in the
// synchronous reference frame, i.e. d(delta)/dt = omega - omega0 and
// d(theta_P)/dt = omega_P (the PLL frequency deviation). Adding omega0 to the
// two angle rates recovers the stationary-frame form.

#include <array>

#include <Eigen/Dense>

#include "cctkit/case_model.hpp"
#include "cctkit/network_solver.hpp"

namespace cctkit {

struct SyncState {
  double delta = 0.0;  // rotor angle, rad (synchronous frame)
  double omega = 0.0;  // rotor speed, rad/s (absolute)
};

struct GflState {
  double x_v = 0.0;      // filtered PLL frequency deviation, rad/s
  double p_v = 0.0;      // converter output power, pu
  double theta_p = 0.0;  // PLL angle, rad (synchronous frame)
  double x_p = 0.0;      // PLL integrator state
};

// Flat state layout: [delta_i, omega_i] per machine, then
// [x_v_j, p_v_j, theta_p_j, x_p_j] per GFL unit, device order as in the case.
struct StateLayout {
  int n_sync = 0;
  int n_gfl = 0;

  int nx() const { return 2 * n_sync + 4 * n_gfl; }
  int delta(int i) const { return 2 * i; }
  int omega(int i) const { return 2 * i + 1; }
  int x_v(int j) const { return 2 * n_sync + 4 * j; }
  int p_v(int j) const { return 2 * n_sync + 4 * j + 1; }
  int theta_p(int j) const { return 2 * n_sync + 4 * j + 2; }
  int x_p(int j) const { return 2 * n_sync + 4 * j + 3; }
  // Human-readable component name, e.g. "delta_b31".
  std::string component_name(int k, const NetworkCase& c) const;
};

struct SystemState {
  double t = 0.0;
  std::vector<SyncState> sync;
  std::vector<GflState> gfl;

  Eigen::VectorXd to_vector() const;
  static SystemState from_vector(double t, const Eigen::VectorXd& x,
                                 const StateLayout& layout);
};

// dδ/dt = ω - ω₀;  dω/dt = (ω₀/2H)(P_M - P_e - D(ω - ω₀)), ω in rad/s.
struct SyncDerivatives {
  double d_delta = 0.0;
  double d_omega = 0.0;
};
SyncDerivatives sync_derivatives(const SyncState& s, double p_e,
                                 const SyncMachineParams& m, double omega0);

// v_q = V sin(θ - θ_P);  ω_P = K_p v_q + K_i x_P;
// dx_v/dt = (ω_P - x_v)/T_v;  dP_v/dt = (P_vs - 2H_v dx_v/dt - P_v)/T_p;
// dθ_P/dt = ω_P (synchronous frame);  dx_P/dt = v_q.
struct GflDerivatives {
  double d_x_v = 0.0;
  double d_p_v = 0.0;
  double d_theta_p = 0.0;
  double d_x_p = 0.0;
};
GflDerivatives gfl_derivatives(const GflState& s, double v, double theta,
                               const GflParams& g);

// The four variational blocks at a consistent (x, y) point. y is the packed
// algebraic vector [V_j, theta_j] over *active* GFL units.
struct JacobianBlocks {
  Eigen::MatrixXd dfdx;  // ∂P/∂x, nx x nx
  Eigen::MatrixXd dfdy;  // ∂P/∂y, nx x ny
  Eigen::MatrixXd dsdx;  // ∂S/∂x, ny x nx
  Eigen::MatrixXd dsdy;  // ∂S/∂y, ny x ny

  // State-space matrix of the index-1 DAE: A - B D⁻¹ C. Throws on singular
  // dsdy (conditioning reported) — the system is then not index-1 here.
  Eigen::MatrixXd reduced() const;
};

// Immutable bundle of case + initialized fleet the engines evaluate against.
class SystemModel {
 public:
  SystemModel(const NetworkCase& c, std::vector<SyncMachineParams> machines);

  const NetworkCase& network_case() const { return *case_; }
  const std::vector<SyncMachineParams>& machines() const { return machines_; }
  const StateLayout& layout() const { return layout_; }
  double omega0() const { return omega0_; }
  int nx() const { return layout_.nx(); }
  int ny(const ReducedNetwork& net) const { return 2 * net.n_active(); }

  // Split a flat state into the device vectors the network solver consumes.
  void unpack(const Eigen::VectorXd& x, Eigen::VectorXd& e_mag,
              Eigen::VectorXd& delta, Eigen::VectorXd& p_v,
              Eigen::VectorXd& theta_p) const;
  // Packed algebraic vector [V, theta] per active unit from a solution.
  Eigen::VectorXd pack_y(const ReducedNetwork& net, const AlgebraicSolution& alg) const;
  AlgebraicSolution solve_network(const ReducedNetwork& net, const Eigen::VectorXd& x,
                                  const AlgebraicOptions& opts = {},
                                  const AlgebraicSolution* warm = nullptr) const;

  // Full RHS P(x, y) at an explicit algebraic point.
  Eigen::VectorXd rhs(const ReducedNetwork& net, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& y) const;
  // Network residual S(x, y): real/imag current balance per active GFL node.
  Eigen::VectorXd algebraic_residual(const ReducedNetwork& net, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& y) const;
  JacobianBlocks jacobian_blocks(const ReducedNetwork& net, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& y) const;

 private:
  const NetworkCase* case_;
  std::vector<SyncMachineParams> machines_;  // p_mech / e_prime_mag filled
  StateLayout layout_;
  double omega0_;
};

// Equilibrium initialization from a converged power flow: machines get E'∠δ
// from terminal conditions and P_M from the realized electrical power; GFL
// units start at (x_v, P_v, θ_P, x_P) = (0, P_vs, θ_bus, 0). The assembled
// state satisfies ‖RHS‖∞ < 1e-8 on the pre-fault network or this throws.
struct InitializedSystem {
  SystemState x0;
  std::vector<SyncMachineParams> machines;  // with p_mech / e_prime_mag
  AlgebraicSolution y0;                     // pre-fault algebraic point
};
InitializedSystem init_devices(const NetworkCase& c, const PowerFlowSolution& pf,
                               const ReducedNetwork& pre_net);

}  // namespace cctkit
