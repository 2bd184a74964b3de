#pragma once
// Case model: network description, device parameters, fault scenarios, and
// the JSON load/save/validate path shared by files and built-in cases.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cctkit {

// Base error for everything this library throws on bad input or failed
// numerics; message always names the offending entity.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BusKind { Slack, Pv, Pq };

std::string to_string(BusKind kind);
BusKind bus_kind_from_string(const std::string& s);

struct Bus {
  int index = 0;         // external 1-based id, unique
  double base_kv = 0.0;  // > 0
  BusKind kind = BusKind::Pq;
  double v_setpoint = 1.0;  // pu, used for slack/pv buses

  bool operator==(const Bus&) const = default;
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;      // pu series resistance
  double x = 0.0;      // pu series reactance, != 0
  double b_shunt = 0.0;  // pu total line charging
  double tap = 1.0;    // off-nominal turns ratio on the from side, > 0
  bool in_service = true;

  bool operator==(const Branch&) const = default;
};

struct Load {
  int bus = 0;
  double p = 0.0;  // pu on system base
  double q = 0.0;  // pu

  bool operator==(const Load&) const = default;
};

struct SyncMachineParams {
  int bus = 0;
  double rated_mva = 0.0;  // base the file parameters are given on
  // The fields below are stored on the system base regardless of rated_mva.
  double h = 0.0;         // inertia constant, s
  double d = 0.0;         // damping torque coefficient, pu torque per pu speed
  double xd_prime = 0.0;  // transient reactance, pu
  double p_dispatch = 0.0;  // scheduled output, pu (power-flow target)
  // Filled by init_devices(); NaN until then.
  double p_mech = std::nan("");
  double e_prime_mag = std::nan("");

  bool operator==(const SyncMachineParams&) const = default;
};

struct GflParams {
  int bus = 0;
  double p_vs = 0.0;    // power setpoint, pu on system base
  double t_v = 0.0;     // frequency-filter time constant, s
  double t_p = 0.0;     // power-tracking time constant, s
  double h_v = 0.0;     // virtual inertia constant, s
  double k_p = 0.0;     // pll proportional gain
  double k_i = 0.0;     // pll integral gain
  double v_floor = 0.01;  // voltage magnitude floor for the current law, pu

  bool operator==(const GflParams&) const = default;
};

// A fault scenario is runtime input, not part of the network, but cases may
// ship defaults. Branch ids are 1-based positions in NetworkCase::branches.
struct FaultScenario {
  int fault_bus = 0;       // 0 = no fault applied
  int tripped_branch = 0;  // 0 = no topology change at clearing
  double t1 = 5.0;         // fault application time, s
  double t_cl = 0.2;       // clearing delay after t1, s
  double horizon = 15.0;   // total simulated time, s
  double dt = 0.01;        // fixed step, s

  double clearing_time() const { return t1 + t_cl; }
  bool has_fault() const { return (fault_bus > 0 || tripped_branch > 0) && t1 < horizon; }

  bool operator==(const FaultScenario&) const = default;
};

struct NetworkCase {
  std::string name;
  std::string description;
  double system_base_mva = 100.0;
  double frequency_hz = 60.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Load> loads;
  std::vector<SyncMachineParams> sync_machines;
  std::vector<GflParams> gfl_units;
  std::optional<FaultScenario> default_scenario;

  double omega0() const { return 2.0 * M_PI * frequency_hz; }
  int n_buses() const { return static_cast<int>(buses.size()); }
  int n_sync() const { return static_cast<int>(sync_machines.size()); }
  int n_gfl() const { return static_cast<int>(gfl_units.size()); }

  // Position of a bus id in `buses`, or -1.
  int bus_pos(int bus_id) const;
  // Same but throws Error naming the bus.
  int require_bus(int bus_id) const;
  // 1-based id of the first in-service branch joining the unordered pair, or 0.
  int find_branch(int bus_a, int bus_b) const;

  bool operator==(const NetworkCase&) const = default;
};

struct ValidationIssue {
  std::string location;  // e.g. "branch 12", "sync_machine at bus 31"
  std::string message;

  bool operator==(const ValidationIssue&) const = default;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const { return issues.empty(); }
  std::string to_string() const;
};

// Structural validation of a case: id uniqueness, branch endpoints, positive
// physical parameters, device-bus existence, one slack, etc.
ValidationReport validate_case(const NetworkCase& c);

// Scenario validation against a case: bus/branch existence, dt > 0, event
// times commensurate with dt and inside the horizon. Throws Error.
void validate_scenario(const NetworkCase& c, const FaultScenario& s);

// JSON round trip. load_case/case_from_json run validate_case and throw on
// any issue; save_case writes the same schema load_case reads.
NetworkCase case_from_json(const std::string& text, const std::string& origin);
NetworkCase load_case(const std::string& path);
std::string case_to_json(const NetworkCase& c);
void save_case(const NetworkCase& c, const std::string& path);

// Bundled cases, embedded at build time: "smib", "ieee39_sync", "ieee39_gfl2".
NetworkCase builtin_case(const std::string& name);
std::vector<std::string> builtin_case_names();

// Case resolution used by the CLI and bindings: exact builtin name, then
// $CCTKIT_CASE_DIR/<name>.json, then a filesystem path.
NetworkCase resolve_case(const std::string& name_or_path);

}  // namespace cctkit
