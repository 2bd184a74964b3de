#include "cctkit/case_model.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cctkit {

using nlohmann::json;

std::string to_string(BusKind kind) {
  switch (kind) {
    case BusKind::Slack: return "slack";
    case BusKind::Pv: return "pv";
    case BusKind::Pq: return "pq";
  }
  return "pq";
}

BusKind bus_kind_from_string(const std::string& s) {
  if (s == "slack") return BusKind::Slack;
  if (s == "pv") return BusKind::Pv;
  if (s == "pq") return BusKind::Pq;
  throw Error("unknown bus kind '" + s + "' (expected slack|pv|pq)");
}

int NetworkCase::bus_pos(int bus_id) const {
  for (int i = 0; i < n_buses(); ++i)
    if (buses[i].index == bus_id) return i;
  return -1;
}

int NetworkCase::require_bus(int bus_id) const {
  int pos = bus_pos(bus_id);
  if (pos < 0)
    throw Error("case '" + name + "' has no bus " + std::to_string(bus_id));
  return pos;
}

int NetworkCase::find_branch(int bus_a, int bus_b) const {
  for (int i = 0; i < static_cast<int>(branches.size()); ++i) {
    const Branch& br = branches[i];
    if (!br.in_service) continue;
    if ((br.from_bus == bus_a && br.to_bus == bus_b) ||
        (br.from_bus == bus_b && br.to_bus == bus_a))
      return i + 1;
  }
  return 0;
}

std::string ValidationReport::to_string() const {
  if (ok()) return "case is valid";
  std::ostringstream os;
  os << issues.size() << " validation issue(s):";
  for (const auto& issue : issues) os << "\n  " << issue.location << ": " << issue.message;
  return os.str();
}

ValidationReport validate_case(const NetworkCase& c) {
  ValidationReport rep;
  auto add = [&rep](std::string where, std::string what) {
    rep.issues.push_back({std::move(where), std::move(what)});
  };

  if (c.system_base_mva <= 0) add("system", "base_mva must be positive");
  if (c.frequency_hz <= 0) add("system", "frequency_hz must be positive");
  if (c.buses.empty()) add("system", "case has no buses");

  int n_slack = 0;
  for (size_t i = 0; i < c.buses.size(); ++i) {
    const Bus& b = c.buses[i];
    std::string where = "bus " + std::to_string(b.index);
    if (b.index <= 0) add(where, "bus index must be a positive integer");
    for (size_t j = 0; j < i; ++j)
      if (c.buses[j].index == b.index) add(where, "duplicate bus index");
    if (b.base_kv <= 0) add(where, "base_kv must be positive");
    if (b.kind == BusKind::Slack) ++n_slack;
    if (b.kind != BusKind::Pq && b.v_setpoint <= 0)
      add(where, "v_setpoint must be positive on a voltage-controlled bus");
  }
  if (n_slack != 1)
    add("system", "exactly one slack bus required, found " + std::to_string(n_slack));

  for (size_t i = 0; i < c.branches.size(); ++i) {
    const Branch& br = c.branches[i];
    std::string where = "branch " + std::to_string(i + 1);
    if (c.bus_pos(br.from_bus) < 0)
      add(where, "from bus " + std::to_string(br.from_bus) + " does not exist");
    if (c.bus_pos(br.to_bus) < 0)
      add(where, "to bus " + std::to_string(br.to_bus) + " does not exist");
    if (br.from_bus == br.to_bus) add(where, "self-loop branch");
    if (br.x == 0.0) add(where, "series reactance x must be nonzero");
    if (br.tap <= 0) add(where, "tap ratio must be positive");
  }

  for (const Load& l : c.loads)
    if (c.bus_pos(l.bus) < 0)
      add("load at bus " + std::to_string(l.bus), "bus does not exist");

  std::vector<int> device_buses;
  auto claim_bus = [&](int bus, const std::string& where) {
    for (int seen : device_buses)
      if (seen == bus) add(where, "more than one device at this bus");
    device_buses.push_back(bus);
  };

  for (const SyncMachineParams& m : c.sync_machines) {
    std::string where = "sync_machine at bus " + std::to_string(m.bus);
    if (c.bus_pos(m.bus) < 0) add(where, "bus does not exist");
    claim_bus(m.bus, where);
    if (m.rated_mva <= 0) add(where, "rated_mva must be positive");
    if (m.h <= 0) add(where, "inertia constant h must be positive");
    if (m.d < 0) add(where, "damping d must be non-negative");
    if (m.xd_prime <= 0) add(where, "transient reactance xd_prime must be positive");
  }

  for (const GflParams& g : c.gfl_units) {
    std::string where = "gfl_unit at bus " + std::to_string(g.bus);
    int pos = c.bus_pos(g.bus);
    if (pos < 0) add(where, "bus does not exist");
    claim_bus(g.bus, where);
    if (pos >= 0 && c.buses[pos].kind != BusKind::Pq)
      add(where, "gfl bus must be a pq bus (converter injects fixed P, zero Q)");
    if (g.t_v <= 0) add(where, "filter time constant t_v must be positive");
    if (g.t_p <= 0) add(where, "tracking time constant t_p must be positive");
    if (g.h_v < 0) add(where, "virtual inertia h_v must be non-negative");
    if (g.k_p <= 0) add(where, "pll gain k_p must be positive");
    if (g.k_i <= 0) add(where, "pll gain k_i must be positive");
    if (g.v_floor <= 0 || g.v_floor > 0.1)
      add(where, "v_floor must lie in (0, 0.1] pu");
  }

  // Voltage-controlled buses need a synchronous machine behind them so the
  // dynamic model has a device to own the injection found by the power flow.
  for (const Bus& b : c.buses) {
    if (b.kind == BusKind::Pq) continue;
    bool has_machine = false;
    for (const SyncMachineParams& m : c.sync_machines)
      if (m.bus == b.index) has_machine = true;
    if (!has_machine)
      add("bus " + std::to_string(b.index),
          to_string(b.kind) + " bus has no sync machine attached");
  }

  if (c.default_scenario && rep.ok()) {
    try {
      validate_scenario(c, *c.default_scenario);
    } catch (const Error& e) {
      add("scenario_defaults", e.what());
    }
  }
  return rep;
}

namespace {

bool on_grid(double t, double dt) {
  double k = t / dt;
  return std::abs(k - std::round(k)) < 1e-6;
}

}  // namespace

void validate_scenario(const NetworkCase& c, const FaultScenario& s) {
  if (s.dt <= 0) throw Error("scenario: dt must be positive");
  if (s.horizon <= 0) throw Error("scenario: horizon must be positive");
  if (s.t1 < 0) throw Error("scenario: fault time t1 must be non-negative");
  if (s.t_cl <= 0) throw Error("scenario: clearing delay t_cl must be positive");
  if (s.fault_bus != 0) c.require_bus(s.fault_bus);
  if (s.tripped_branch != 0) {
    if (s.tripped_branch < 0 || s.tripped_branch > static_cast<int>(c.branches.size()))
      throw Error("scenario: tripped_branch " + std::to_string(s.tripped_branch) +
                  " is out of range (case has " + std::to_string(c.branches.size()) +
                  " branches)");
    if (!c.branches[s.tripped_branch - 1].in_service)
      throw Error("scenario: branch " + std::to_string(s.tripped_branch) +
                  " is already out of service");
  }
  if (!on_grid(s.t1, s.dt) || !on_grid(s.clearing_time(), s.dt))
    throw Error("scenario: t1 and t1+t_cl must fall on the dt time grid "
                "(events are applied exactly on grid points)");
  if (s.has_fault() && s.clearing_time() >= s.horizon)
    throw Error("scenario: clearing time t1+t_cl must lie before the horizon");
}

// ----------------------------------------------------------------- json i/o

namespace {

double get_num(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key))
    throw Error(where + ": missing required field '" + key + "'");
  if (!j[key].is_number())
    throw Error(where + ": field '" + key + "' must be a number");
  return j[key].get<double>();
}

double get_num_or(const json& j, const std::string& key, double fallback) {
  return j.contains(key) ? j[key].get<double>() : fallback;
}

int get_int(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key))
    throw Error(where + ": missing required field '" + key + "'");
  return j[key].get<int>();
}

std::pair<int, int> parse_branch_pair(const std::string& text) {
  auto dash = text.find('-');
  if (dash == std::string::npos)
    throw Error("branch designator '" + text + "' must look like 'A-B'");
  try {
    return {std::stoi(text.substr(0, dash)), std::stoi(text.substr(dash + 1))};
  } catch (const std::exception&) {
    throw Error("branch designator '" + text + "' must contain two bus ids");
  }
}

FaultScenario scenario_from_json(const json& j, const NetworkCase& c) {
  FaultScenario s;
  s.fault_bus = j.contains("fault_bus") ? j["fault_bus"].get<int>() : 0;
  if (j.contains("tripped_branch")) {
    s.tripped_branch = j["tripped_branch"].get<int>();
  } else if (j.contains("trip")) {
    auto [a, b] = parse_branch_pair(j["trip"].get<std::string>());
    s.tripped_branch = c.find_branch(a, b);
    if (s.tripped_branch == 0)
      throw Error("scenario: no in-service branch " + std::to_string(a) + "-" +
                  std::to_string(b) + " in case '" + c.name + "'");
  }
  FaultScenario defaults;
  s.t1 = get_num_or(j, "t1_s", defaults.t1);
  s.t_cl = get_num_or(j, "t_cl_s", defaults.t_cl);
  s.horizon = get_num_or(j, "horizon_s", defaults.horizon);
  s.dt = get_num_or(j, "dt_s", defaults.dt);
  return s;
}

}  // namespace

NetworkCase case_from_json(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(origin + ": not valid JSON: " + e.what());
  }

  NetworkCase c;
  const json& sys = j.value("system", json::object());
  c.name = sys.value("name", origin);
  c.description = sys.value("description", "");
  c.system_base_mva = get_num_or(sys, "base_mva", 100.0);
  c.frequency_hz = get_num_or(sys, "frequency_hz", 60.0);
  if (c.system_base_mva <= 0) throw Error(origin + ": system.base_mva must be positive");
  const double sbase = c.system_base_mva;

  for (const json& jb : j.value("buses", json::array())) {
    Bus b;
    b.index = get_int(jb, "index", origin + ": bus");
    std::string where = origin + ": bus " + std::to_string(b.index);
    b.base_kv = get_num(jb, "base_kv", where);
    b.kind = bus_kind_from_string(jb.value("kind", "pq"));
    b.v_setpoint = get_num_or(jb, "v_setpoint", 1.0);
    c.buses.push_back(b);
  }

  for (const json& jb : j.value("branches", json::array())) {
    Branch br;
    std::string where = origin + ": branch " + std::to_string(c.branches.size() + 1);
    br.from_bus = get_int(jb, "from", where);
    br.to_bus = get_int(jb, "to", where);
    br.r = get_num_or(jb, "r", 0.0);
    br.x = get_num(jb, "x", where);
    br.b_shunt = get_num_or(jb, "b", 0.0);
    br.tap = get_num_or(jb, "tap", 1.0);
    if (br.tap == 0.0) br.tap = 1.0;
    br.in_service = jb.value("in_service", true);
    c.branches.push_back(br);
  }

  for (const json& jl : j.value("loads", json::array())) {
    Load l;
    l.bus = get_int(jl, "bus", origin + ": load");
    std::string where = origin + ": load at bus " + std::to_string(l.bus);
    l.p = get_num(jl, "p_mw", where) / sbase;
    l.q = get_num(jl, "q_mvar", where) / sbase;
    c.loads.push_back(l);
  }

  for (const json& jm : j.value("sync_machines", json::array())) {
    SyncMachineParams m;
    m.bus = get_int(jm, "bus", origin + ": sync_machine");
    std::string where = origin + ": sync_machine at bus " + std::to_string(m.bus);
    m.rated_mva = get_num_or(jm, "rated_mva", sbase);
    if (m.rated_mva <= 0) throw Error(where + ": rated_mva must be positive");
    // h and d scale with the machine base; reactance scales against it
    double scale = m.rated_mva / sbase;
    m.h = get_num(jm, "h_s", where) * scale;
    m.d = get_num_or(jm, "d", 0.0) * scale;
    m.xd_prime = get_num(jm, "xd_prime", where) / scale;
    m.p_dispatch = get_num(jm, "p_dispatch_mw", where) / sbase;
    c.sync_machines.push_back(m);
  }

  for (const json& jg : j.value("gfl_units", json::array())) {
    GflParams g;
    g.bus = get_int(jg, "bus", origin + ": gfl_unit");
    std::string where = origin + ": gfl_unit at bus " + std::to_string(g.bus);
    g.p_vs = get_num(jg, "p_vs_mw", where) / sbase;
    g.t_v = get_num(jg, "t_v_s", where);
    g.t_p = get_num(jg, "t_p_s", where);
    g.h_v = get_num(jg, "h_v_s", where);
    g.k_p = get_num(jg, "k_p", where);
    g.k_i = get_num(jg, "k_i", where);
    g.v_floor = get_num_or(jg, "v_floor_pu", 0.01);
    c.gfl_units.push_back(g);
  }

  if (j.contains("scenario_defaults"))
    c.default_scenario = scenario_from_json(j["scenario_defaults"], c);

  ValidationReport rep = validate_case(c);
  if (!rep.ok()) throw Error(origin + ": " + rep.to_string());
  return c;
}

NetworkCase load_case(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open case file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return case_from_json(buf.str(), path);
}

std::string case_to_json(const NetworkCase& c) {
  json j;
  j["system"] = {{"name", c.name},
                 {"base_mva", c.system_base_mva},
                 {"frequency_hz", c.frequency_hz}};
  if (!c.description.empty()) j["system"]["description"] = c.description;
  const double sbase = c.system_base_mva;

  j["buses"] = json::array();
  for (const Bus& b : c.buses) {
    json jb = {{"index", b.index}, {"base_kv", b.base_kv}, {"kind", to_string(b.kind)}};
    if (b.kind != BusKind::Pq) jb["v_setpoint"] = b.v_setpoint;
    j["buses"].push_back(jb);
  }

  j["branches"] = json::array();
  for (const Branch& br : c.branches) {
    json jb = {{"from", br.from_bus}, {"to", br.to_bus},
               {"r", br.r}, {"x", br.x}, {"b", br.b_shunt}};
    if (br.tap != 1.0) jb["tap"] = br.tap;
    if (!br.in_service) jb["in_service"] = false;
    j["branches"].push_back(jb);
  }

  j["loads"] = json::array();
  for (const Load& l : c.loads)
    j["loads"].push_back({{"bus", l.bus}, {"p_mw", l.p * sbase}, {"q_mvar", l.q * sbase}});

  j["sync_machines"] = json::array();
  for (const SyncMachineParams& m : c.sync_machines) {
    double scale = m.rated_mva / sbase;
    j["sync_machines"].push_back({{"bus", m.bus},
                                  {"rated_mva", m.rated_mva},
                                  {"h_s", m.h / scale},
                                  {"d", m.d / scale},
                                  {"xd_prime", m.xd_prime * scale},
                                  {"p_dispatch_mw", m.p_dispatch * sbase}});
  }

  j["gfl_units"] = json::array();
  for (const GflParams& g : c.gfl_units)
    j["gfl_units"].push_back({{"bus", g.bus}, {"p_vs_mw", g.p_vs * sbase},
                              {"t_v_s", g.t_v}, {"t_p_s", g.t_p}, {"h_v_s", g.h_v},
                              {"k_p", g.k_p}, {"k_i", g.k_i},
                              {"v_floor_pu", g.v_floor}});

  if (c.default_scenario) {
    const FaultScenario& s = *c.default_scenario;
    j["scenario_defaults"] = {{"fault_bus", s.fault_bus},
                              {"tripped_branch", s.tripped_branch},
                              {"t1_s", s.t1}, {"t_cl_s", s.t_cl},
                              {"horizon_s", s.horizon}, {"dt_s", s.dt}};
  }
  return j.dump(1) + "\n";
}

void save_case(const NetworkCase& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write case file '" + path + "'");
  out << case_to_json(c);
}

NetworkCase resolve_case(const std::string& name_or_path) {
  for (const std::string& name : builtin_case_names())
    if (name == name_or_path) return builtin_case(name);
  namespace fs = std::filesystem;
  if (const char* dir = std::getenv("CCTKIT_CASE_DIR")) {
    fs::path p = fs::path(dir) / (name_or_path + ".json");
    if (fs::exists(p)) return load_case(p.string());
    p = fs::path(dir) / name_or_path;
    if (fs::exists(p)) return load_case(p.string());
  }
  if (fs::exists(name_or_path)) return load_case(name_or_path);
  throw Error("cannot resolve case '" + name_or_path +
              "': not a builtin case, not under CCTKIT_CASE_DIR, not a file");
}

}  // namespace cctkit
