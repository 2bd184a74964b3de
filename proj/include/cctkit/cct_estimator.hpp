#pragma once
// Two-evaluation CCT estimation: peak sensitivity norms m(SN) at two stable
// probe clearing times give lambda = 1/m per fleet; the line through the two
// (T_cl, lambda) points is extrapolated to lambda = 0, and the smallest
// per-fleet root is the system CCT. Includes automatic probe selection and
// the comparison report against the bisection oracle.

#include "cctkit/sensitivity_engine.hpp"

namespace cctkit {

struct LambdaPoint {
  double t_cl = 0.0;
  double m_sn = 0.0;    // peak of the fleet SN series
  double lambda = 0.0;  // 1 / m_sn
  Fleet fleet = Fleet::Sync;
};

// t_cr = t_cl1 - lambda1 (t_cl2 - t_cl1) / (lambda2 - lambda1). Requires same
// fleet, distinct probe times and a negative slope (lambda decreasing toward
// the margin); order of the two points does not matter.
double extrapolate_root(const LambdaPoint& p1, const LambdaPoint& p2);

struct FleetResult {
  Fleet fleet = Fleet::Sync;
  LambdaPoint p1, p2;  // p1.t_cl < p2.t_cl
  double t_cr = 0.0;
  double slope = 0.0;                   // d lambda / d T_cl, negative
  double extrapolation_distance = 0.0;  // t_cr - p2.t_cl
  bool low_confidence = false;          // distance beyond the linear regime
};

struct CctEstimate {
  std::pair<double, double> probes{0.0, 0.0};
  std::vector<FleetResult> fleets;  // sync first when present
  double t_cr_system = 0.0;
  Fleet system_fleet = Fleet::Sync;  // fleet attaining the minimum (ties: sync)
  bool low_confidence = false;       // flag of the binding fleet

  const FleetResult* fleet_result(Fleet f) const;
};

struct EstimatorOptions {
  SensitivityOptions sensitivity;
  // How each probe's sensitivity is computed. The default keeps the
  // two-simulation economy; the finite-difference alternative costs two
  // extra simulations per probe.
  SensitivityMethod method = SensitivityMethod::Variational;
  double fd_h = 0.0;  // finite-difference offset, <= 0 means dt
  // Extrapolating further than this beyond the upper probe leaves the
  // validated linear regime; the estimate is flagged, not rejected.
  double low_confidence_distance = 0.15;
  ClassifierOptions classifier;
};

// lambda at a single clearing time. Requires a completable post-fault window
// (collapse at t_cl is an error: probe too close to instability) and nonzero
// sensitivity. Does not require stability — estimate_cct enforces that for
// its probes.
LambdaPoint lambda_at(const ScenarioAssembly& assembly, const FaultScenario& tmpl,
                      double t_cl, Fleet fleet, const EstimatorOptions& options = {});
LambdaPoint lambda_at(const NetworkCase& c, const FaultScenario& tmpl, double t_cl,
                      Fleet fleet, const EstimatorOptions& options = {});

// Full two-probe procedure. Exactly two time-domain simulations are run
// (concurrently); both fleets share them and only the SN projection differs.
// Both probes must classify stable or this throws.
CctEstimate estimate_cct(const ScenarioAssembly& assembly, const FaultScenario& tmpl,
                         std::pair<double, double> probes,
                         const EstimatorOptions& options = {});
CctEstimate estimate_cct(const NetworkCase& c, const FaultScenario& tmpl,
                         std::pair<double, double> probes,
                         const EstimatorOptions& options = {});

// Default probe rule: an exploratory sweep (0.15 / 0.30 / 0.45 s) finds the
// first unstable clearing time b, the stable/unstable bracket is tightened
// to <= 0.03 s, and the probes land 0.02 s apart just below the stable
// bound — near the margin but outside the terminal region where lambda
// stops being linear. Retreats by 0.04 s up to three times if the upper
// probe still classifies unstable.
std::pair<double, double> auto_probes(const ScenarioAssembly& assembly,
                                      const FaultScenario& tmpl,
                                      const EstimatorOptions& options = {});

struct ComparisonReport {
  CctEstimate estimate;
  CctBracket bracket;
  double tol = 0.01;
  bool contained = false;  // t_cr inside the bracket widened by tol each way
  long sims_estimate = 0;
  long sims_bisect = 0;
  double wall_estimate_s = 0.0;
  double wall_bisect_s = 0.0;
};

// Runs the estimator and the bisection oracle on the same fault and reports
// agreement, simulation counts, and wall-clock times. Empty probes (zeros)
// trigger auto_probes; the initial bracket is widened up to three times when
// its endpoints do not straddle the margin.
ComparisonReport compare_with_tds(const NetworkCase& c, const FaultScenario& tmpl,
                                  std::pair<double, double> probes = {0.0, 0.0},
                                  double tol = 0.01,
                                  std::pair<double, double> bracket0 = {0.1, 0.7},
                                  const EstimatorOptions& options = {});

}  // namespace cctkit
