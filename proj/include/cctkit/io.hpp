#pragma once
// Deterministic, plot-ready serialization of results. Numbers are printed
// with round-trip precision (%.17g); nothing volatile (timestamps, wall
// clocks, hostnames) goes into files, so identical invocations produce
// byte-identical outputs.

#include <string>
#include <vector>

#include "cctkit/cct_estimator.hpp"

namespace cctkit::io {

std::string format_double(double v);  // %.17g, locale-independent

// CSV: t, every state component, then V / theta at every bus.
std::string trajectory_csv(const Trajectory& traj, const NetworkCase& c);
std::string trajectory_json(const Trajectory& traj, const NetworkCase& c);
std::string verdict_json(const Trajectory& traj, const StabilityVerdict& verdict);

// CSV: s, every dW/dT_cl component, dU components, then one SN column per
// provided series.
std::string sensitivity_csv(const SensitivityTrajectory& sens, const NetworkCase& c,
                            const std::vector<SnSeries>& sn = {});
std::string sensitivity_json(const SensitivityTrajectory& sens, const NetworkCase& c,
                             const std::vector<SnSeries>& sn = {});

std::string estimate_json(const CctEstimate& estimate);
std::string bracket_json(const CctBracket& bracket);
// Machine-readable comparison; carries simulation counts but not wall-clock
// times (those are printed, not persisted, to keep outputs deterministic).
std::string report_json(const ComparisonReport& report);
// Fixed-layout text table: Fault Bus | Tripped Line | CCT (TDS) | CCT (Proposed).
std::string report_table(const std::vector<std::pair<FaultScenario, ComparisonReport>>& rows,
                         const NetworkCase& c);

struct SweepRow {
  int fault_bus = 0;
  std::string tripped_line;  // "from-to"
  bool ok = false;
  std::string error;  // set when !ok
  double tds_lower = 0.0, tds_upper = 0.0, proposed = 0.0;
  bool contained = false;
  long sims_estimate = 0, sims_bisect = 0;
};

std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string sweep_json(const std::vector<SweepRow>& rows);

// Minimal gnuplot script plotting rotor angles / converter powers from a
// trajectory CSV written next to it.
std::string gnuplot_script(const std::string& csv_name, const NetworkCase& c);

void write_file(const std::string& path, const std::string& content);

}  // namespace cctkit::io
