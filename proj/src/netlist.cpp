#include "subsweep/netlist.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace subsweep {

using nlohmann::json;

double Branch::capacitance(double w0) const {
  if (kind == BranchKind::ShuntC) return b ? *b / w0 : 0.0;
  if (x_c && *x_c > 0.0) return 1.0 / (*x_c * w0);
  return 0.0;
}

bool Scenario::has_bus(const BusId& id) const {
  return std::find(buses.begin(), buses.end(), id) != buses.end();
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ScenarioError(path.empty() ? msg : path + ": " + msg);
}

void require_keys(const json& obj, const std::string& path,
                  const std::set<std::string>& required,
                  const std::set<std::string>& optional) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (const auto& item : obj.items()) {
    if (!required.count(item.key()) && !optional.count(item.key()))
      fail(path, "unknown field '" + item.key() + "'");
  }
  for (const auto& key : required) {
    if (!obj.contains(key)) fail(path, "missing required field '" + key + "'");
  }
}

double get_number(const json& obj, const std::string& path, const std::string& key) {
  const json& v = obj.at(key);
  if (!v.is_number()) fail(path + "." + key, "expected a number");
  return v.get<double>();
}

std::string get_string(const json& obj, const std::string& path, const std::string& key) {
  const json& v = obj.at(key);
  if (!v.is_string()) fail(path + "." + key, "expected a string");
  return v.get<std::string>();
}

SignalSpec parse_signal(const json& obj, const std::string& path) {
  SignalSpec sig;
  std::string kind = get_string(obj, path, "kind");
  if (kind == "zero") {
    require_keys(obj, path, {"kind"}, {});
    sig.kind = SignalKind::Zero;
  } else if (kind == "step") {
    require_keys(obj, path, {"kind", "amplitude", "t_on"}, {});
    sig.kind = SignalKind::Step;
    sig.amplitude = get_number(obj, path, "amplitude");
    sig.t_on = get_number(obj, path, "t_on");
  } else if (kind == "chirp") {
    require_keys(obj, path, {"kind", "amplitude", "f_start", "f_end", "t_on", "t_off"}, {});
    sig.kind = SignalKind::Chirp;
    sig.amplitude = get_number(obj, path, "amplitude");
    sig.f_start = get_number(obj, path, "f_start");
    sig.f_end = get_number(obj, path, "f_end");
    sig.t_on = get_number(obj, path, "t_on");
    sig.t_off = get_number(obj, path, "t_off");
    if (!(sig.f_start > 0.0) || !(sig.f_end > sig.f_start))
      fail(path, "chirp requires 0 < f_start < f_end");
    if (!(sig.t_off > sig.t_on)) fail(path, "chirp requires t_off > t_on");
  } else if (kind == "tone") {
    require_keys(obj, path, {"kind", "amplitude", "f_p", "t_on"}, {});
    sig.kind = SignalKind::Tone;
    sig.amplitude = get_number(obj, path, "amplitude");
    sig.f_p = get_number(obj, path, "f_p");
    sig.t_on = get_number(obj, path, "t_on");
    if (sig.f_p < 1.0 || sig.f_p > 40.0)
      fail(path + ".f_p", "tone frequency must lie in [1, 40] Hz");
  } else {
    fail(path + ".kind", "unknown signal kind '" + kind + "'");
  }
  if (sig.kind != SignalKind::Zero && !(sig.amplitude > 0.0 && sig.amplitude < 1.0))
    fail(path + ".amplitude", "modulation amplitude must lie in (0, 1)");
  if (sig.kind != SignalKind::Zero && sig.t_on < 0.0)
    fail(path + ".t_on", "activation time must be non-negative");
  return sig;
}

Branch parse_branch(const json& obj, const std::string& path) {
  Branch br;
  std::string kind = get_string(obj, path, "kind");
  if (kind == "series_rl") {
    require_keys(obj, path, {"kind", "from", "to", "r", "x_l"}, {});
    br.kind = BranchKind::SeriesRL;
    br.from = get_string(obj, path, "from");
    br.to = get_string(obj, path, "to");
    br.r = get_number(obj, path, "r");
    br.x_l = get_number(obj, path, "x_l");
    if (*br.x_l < 0.0) fail(path + ".x_l", "reactance must be non-negative");
    if (br.r == 0.0 && *br.x_l == 0.0) fail(path, "branch impedance must be nonzero");
  } else if (kind == "series_rlc") {
    require_keys(obj, path, {"kind", "from", "to", "r", "x_l", "x_c"}, {});
    br.kind = BranchKind::SeriesRLC;
    br.from = get_string(obj, path, "from");
    br.to = get_string(obj, path, "to");
    br.r = get_number(obj, path, "r");
    br.x_l = get_number(obj, path, "x_l");
    br.x_c = get_number(obj, path, "x_c");
    if (*br.x_l < 0.0) fail(path + ".x_l", "reactance must be non-negative");
    if (!(*br.x_c > 0.0)) fail(path + ".x_c", "capacitive reactance must be positive");
  } else if (kind == "shunt_c") {
    require_keys(obj, path, {"kind", "from", "b"}, {});
    br.kind = BranchKind::ShuntC;
    br.from = get_string(obj, path, "from");
    br.b = get_number(obj, path, "b");
    if (!(*br.b > 0.0)) fail(path + ".b", "susceptance must be positive");
  } else if (kind == "shunt_r") {
    require_keys(obj, path, {"kind", "from", "r"}, {});
    br.kind = BranchKind::ShuntR;
    br.from = get_string(obj, path, "from");
    br.r = get_number(obj, path, "r");
    if (!(br.r > 0.0)) fail(path + ".r", "shunt resistance must be positive");
  } else {
    fail(path + ".kind", "unknown branch kind '" + kind + "'");
  }
  if (br.r < 0.0) fail(path + ".r", "resistance must be non-negative");
  return br;
}

ControlGains parse_gains(const json& obj, const std::string& path) {
  ControlGains g;
  require_keys(obj, path, {},
               {"k_ip", "k_ii", "k_pp", "k_pi", "k_vp", "k_vi", "k_ppll", "k_ipll"});
  if (obj.contains("k_ip")) g.k_ip = get_number(obj, path, "k_ip");
  if (obj.contains("k_ii")) g.k_ii = get_number(obj, path, "k_ii");
  if (obj.contains("k_pp")) g.k_pp = get_number(obj, path, "k_pp");
  if (obj.contains("k_pi")) g.k_pi = get_number(obj, path, "k_pi");
  if (obj.contains("k_vp")) g.k_vp = get_number(obj, path, "k_vp");
  if (obj.contains("k_vi")) g.k_vi = get_number(obj, path, "k_vi");
  if (obj.contains("k_ppll")) g.k_ppll = get_number(obj, path, "k_ppll");
  if (obj.contains("k_ipll")) g.k_ipll = get_number(obj, path, "k_ipll");
  return g;
}

IbrUnit parse_ibr(const json& obj, const std::string& path) {
  IbrUnit u;
  require_keys(obj, path,
               {"bus", "rating_w", "dc_voltage_v", "choke", "p_ref", "q_axis_mode"},
               {"v_ref", "q_ref", "gains", "sogi_gain"});
  u.bus = get_string(obj, path, "bus");
  u.rating_w = get_number(obj, path, "rating_w");
  u.dc_voltage_v = get_number(obj, path, "dc_voltage_v");
  if (!(u.rating_w > 0.0)) fail(path + ".rating_w", "rating must be positive");
  if (!(u.dc_voltage_v > 0.0)) fail(path + ".dc_voltage_v", "dc voltage must be positive");
  const json& choke = obj.at("choke");
  require_keys(choke, path + ".choke", {"r", "l"}, {});
  u.choke_r = get_number(choke, path + ".choke", "r");
  u.choke_l = get_number(choke, path + ".choke", "l");
  if (!(u.choke_l > 0.0)) fail(path + ".choke.l", "choke inductance must be positive");
  if (u.choke_r < 0.0) fail(path + ".choke.r", "choke resistance must be non-negative");
  u.p_ref = get_number(obj, path, "p_ref");
  std::string mode = get_string(obj, path, "q_axis_mode");
  if (mode == "voltage_control") {
    u.q_axis_mode = QAxisMode::VoltageControl;
    if (!obj.contains("v_ref")) fail(path, "voltage_control requires v_ref");
    if (obj.contains("q_ref")) fail(path, "voltage_control forbids q_ref");
    u.v_ref = get_number(obj, path, "v_ref");
    if (!(*u.v_ref > 0.0)) fail(path + ".v_ref", "voltage reference must be positive");
  } else if (mode == "reactive_power_control") {
    u.q_axis_mode = QAxisMode::ReactivePowerControl;
    if (!obj.contains("q_ref")) fail(path, "reactive_power_control requires q_ref");
    if (obj.contains("v_ref")) fail(path, "reactive_power_control forbids v_ref");
    u.q_ref = get_number(obj, path, "q_ref");
  } else {
    fail(path + ".q_axis_mode", "unknown mode '" + mode + "'");
  }
  if (obj.contains("gains")) u.gains = parse_gains(obj.at("gains"), path + ".gains");
  if (obj.contains("sogi_gain")) {
    u.sogi_gain = get_number(obj, path, "sogi_gain");
    if (!(u.sogi_gain > 0.0)) fail(path + ".sogi_gain", "gain must be positive");
  }
  return u;
}

void check_bus(const Scenario& s, const BusId& id, const std::string& path) {
  if (!s.has_bus(id)) fail(path, "references undeclared bus '" + id + "'");
}

}  // namespace

Scenario parse_scenario(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(std::string("JSON syntax error: ") + e.what());
  }

  require_keys(doc, "",
               {"schema_version", "name", "base_power_w", "base_voltage_v",
                "nominal_freq_hz", "buses", "branches", "sources", "probe",
                "recorders", "solver"},
               {"ibrs", "current_injector"});
  if (!doc.at("schema_version").is_number_integer() ||
      doc.at("schema_version").get<int>() != 1)
    fail("schema_version", "unsupported schema version (expected 1)");

  Scenario s;
  s.name = get_string(doc, "", "name");
  if (s.name.empty()) fail("name", "must be non-empty");
  s.base_power_w = get_number(doc, "", "base_power_w");
  s.base_voltage_v = get_number(doc, "", "base_voltage_v");
  s.nominal_freq_hz = get_number(doc, "", "nominal_freq_hz");
  if (!(s.base_power_w > 0.0)) fail("base_power_w", "must be positive");
  if (!(s.base_voltage_v > 0.0)) fail("base_voltage_v", "must be positive");
  if (!(s.nominal_freq_hz > 0.0)) fail("nominal_freq_hz", "must be positive");

  const json& buses = doc.at("buses");
  if (!buses.is_array() || buses.empty()) fail("buses", "expected a non-empty array");
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (!buses[i].is_string()) fail("buses[" + std::to_string(i) + "]", "expected a string");
    BusId id = buses[i].get<std::string>();
    if (id.empty()) fail("buses[" + std::to_string(i) + "]", "bus name must be non-empty");
    if (s.has_bus(id)) fail("buses[" + std::to_string(i) + "]", "duplicate bus '" + id + "'");
    s.buses.push_back(id);
  }

  const json& branches = doc.at("branches");
  if (!branches.is_array()) fail("branches", "expected an array");
  for (std::size_t i = 0; i < branches.size(); ++i) {
    std::string path = "branches[" + std::to_string(i) + "]";
    Branch br = parse_branch(branches[i], path);
    check_bus(s, br.from, path + ".from");
    if (br.kind == BranchKind::SeriesRL || br.kind == BranchKind::SeriesRLC) {
      check_bus(s, br.to, path + ".to");
      if (br.from == br.to) fail(path, "series branch endpoints must differ");
    }
    s.branches.push_back(br);
  }

  const json& sources = doc.at("sources");
  if (!sources.is_array() || sources.empty())
    fail("sources", "expected a non-empty array (at least one voltage source)");
  for (std::size_t i = 0; i < sources.size(); ++i) {
    std::string path = "sources[" + std::to_string(i) + "]";
    require_keys(sources[i], path, {"bus", "kind", "magnitude", "phase"}, {});
    if (get_string(sources[i], path, "kind") != "ideal_ac_voltage")
      fail(path + ".kind", "only 'ideal_ac_voltage' is supported");
    Source src;
    src.bus = get_string(sources[i], path, "bus");
    src.magnitude = get_number(sources[i], path, "magnitude");
    src.phase = get_number(sources[i], path, "phase");
    check_bus(s, src.bus, path + ".bus");
    if (!(src.magnitude > 0.0)) fail(path + ".magnitude", "must be positive");
    for (const Source& prev : s.sources)
      if (prev.bus == src.bus) fail(path + ".bus", "duplicate source on bus '" + src.bus + "'");
    s.sources.push_back(src);
  }

  if (doc.contains("ibrs")) {
    const json& ibrs = doc.at("ibrs");
    if (!ibrs.is_array()) fail("ibrs", "expected an array");
    for (std::size_t i = 0; i < ibrs.size(); ++i) {
      std::string path = "ibrs[" + std::to_string(i) + "]";
      IbrUnit u = parse_ibr(ibrs[i], path);
      check_bus(s, u.bus, path + ".bus");
      for (const IbrUnit& prev : s.ibrs)
        if (prev.bus == u.bus) fail(path + ".bus", "duplicate unit on bus '" + u.bus + "'");
      s.ibrs.push_back(u);
    }
  }

  {
    const json& probe = doc.at("probe");
    require_keys(probe, "probe", {"bus", "r0", "signal"}, {});
    s.probe.bus = get_string(probe, "probe", "bus");
    s.probe.r0 = get_number(probe, "probe", "r0");
    check_bus(s, s.probe.bus, "probe.bus");
    if (!(s.probe.r0 > 0.0)) fail("probe.r0", "nominal resistance must be positive");
    s.probe.signal = parse_signal(probe.at("signal"), "probe.signal");
  }

  if (doc.contains("current_injector")) {
    const json& inj = doc.at("current_injector");
    require_keys(inj, "current_injector", {"bus", "axis", "amplitude", "t_on"}, {});
    InjectorSpec spec;
    spec.bus = get_string(inj, "current_injector", "bus");
    std::string axis = get_string(inj, "current_injector", "axis");
    if (axis == "d") spec.axis = InjectorAxis::D;
    else if (axis == "q") spec.axis = InjectorAxis::Q;
    else fail("current_injector.axis", "expected 'd' or 'q'");
    spec.amplitude = get_number(inj, "current_injector", "amplitude");
    spec.t_on = get_number(inj, "current_injector", "t_on");
    check_bus(s, spec.bus, "current_injector.bus");
    if (!(spec.amplitude > 0.0)) fail("current_injector.amplitude", "must be positive");
    if (spec.t_on < 0.0) fail("current_injector.t_on", "must be non-negative");
    s.current_injector = spec;
  }

  const json& recorders = doc.at("recorders");
  if (!recorders.is_array() || recorders.empty())
    fail("recorders", "expected a non-empty array");
  for (std::size_t i = 0; i < recorders.size(); ++i) {
    std::string path = "recorders[" + std::to_string(i) + "]";
    require_keys(recorders[i], path, {"bus", "sample_rate"}, {});
    RecorderSpec rec;
    rec.bus = get_string(recorders[i], path, "bus");
    rec.sample_rate = get_number(recorders[i], path, "sample_rate");
    check_bus(s, rec.bus, path + ".bus");
    if (!(rec.sample_rate > 0.0)) fail(path + ".sample_rate", "must be positive");
    s.recorders.push_back(rec);
  }

  {
    const json& solver = doc.at("solver");
    require_keys(solver, "solver", {"step", "duration", "settle", "record_rate"}, {});
    s.solver.step = get_number(solver, "solver", "step");
    s.solver.duration = get_number(solver, "solver", "duration");
    s.solver.settle = get_number(solver, "solver", "settle");
    s.solver.record_rate = get_number(solver, "solver", "record_rate");
    if (!(s.solver.step > 0.0)) fail("solver.step", "must be positive");
    if (!(s.solver.record_rate > 0.0)) fail("solver.record_rate", "must be positive");
    if (s.solver.step > 0.5 / s.solver.record_rate)
      fail("solver.step", "must not exceed half the recording interval");
    if (!(s.solver.settle >= 0.0)) fail("solver.settle", "must be non-negative");
    if (!(s.solver.duration > s.solver.settle))
      fail("solver.duration", "must exceed the settling time");
  }

  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scenario(buf.str());
  } catch (const ScenarioError& e) {
    throw ScenarioError(path + ": " + e.what());
  }
}

namespace {

json signal_to_json(const SignalSpec& sig) {
  json j;
  switch (sig.kind) {
    case SignalKind::Zero:
      j["kind"] = "zero";
      break;
    case SignalKind::Step:
      j["kind"] = "step";
      j["amplitude"] = sig.amplitude;
      j["t_on"] = sig.t_on;
      break;
    case SignalKind::Chirp:
      j["kind"] = "chirp";
      j["amplitude"] = sig.amplitude;
      j["f_start"] = sig.f_start;
      j["f_end"] = sig.f_end;
      j["t_on"] = sig.t_on;
      j["t_off"] = sig.t_off;
      break;
    case SignalKind::Tone:
      j["kind"] = "tone";
      j["amplitude"] = sig.amplitude;
      j["f_p"] = sig.f_p;
      j["t_on"] = sig.t_on;
      break;
  }
  return j;
}

json scenario_to_json(const Scenario& s) {
  json doc;
  doc["schema_version"] = 1;
  doc["name"] = s.name;
  doc["base_power_w"] = s.base_power_w;
  doc["base_voltage_v"] = s.base_voltage_v;
  doc["nominal_freq_hz"] = s.nominal_freq_hz;
  doc["buses"] = s.buses;

  json branches = json::array();
  for (const Branch& br : s.branches) {
    json j;
    switch (br.kind) {
      case BranchKind::SeriesRL:
        j["kind"] = "series_rl";
        j["from"] = br.from;
        j["to"] = br.to;
        j["r"] = br.r;
        j["x_l"] = br.x_l.value_or(0.0);
        break;
      case BranchKind::SeriesRLC:
        j["kind"] = "series_rlc";
        j["from"] = br.from;
        j["to"] = br.to;
        j["r"] = br.r;
        j["x_l"] = br.x_l.value_or(0.0);
        j["x_c"] = br.x_c.value_or(0.0);
        break;
      case BranchKind::ShuntC:
        j["kind"] = "shunt_c";
        j["from"] = br.from;
        j["b"] = br.b.value_or(0.0);
        break;
      case BranchKind::ShuntR:
        j["kind"] = "shunt_r";
        j["from"] = br.from;
        j["r"] = br.r;
        break;
    }
    branches.push_back(j);
  }
  doc["branches"] = branches;

  json sources = json::array();
  for (const Source& src : s.sources) {
    json j;
    j["bus"] = src.bus;
    j["kind"] = "ideal_ac_voltage";
    j["magnitude"] = src.magnitude;
    j["phase"] = src.phase;
    sources.push_back(j);
  }
  doc["sources"] = sources;

  if (!s.ibrs.empty()) {
    json ibrs = json::array();
    for (const IbrUnit& u : s.ibrs) {
      json j;
      j["bus"] = u.bus;
      j["rating_w"] = u.rating_w;
      j["dc_voltage_v"] = u.dc_voltage_v;
      j["choke"] = {{"r", u.choke_r}, {"l", u.choke_l}};
      j["p_ref"] = u.p_ref;
      if (u.q_axis_mode == QAxisMode::VoltageControl) {
        j["q_axis_mode"] = "voltage_control";
        j["v_ref"] = u.v_ref.value_or(1.0);
      } else {
        j["q_axis_mode"] = "reactive_power_control";
        j["q_ref"] = u.q_ref.value_or(0.0);
      }
      j["gains"] = {{"k_ip", u.gains.k_ip},     {"k_ii", u.gains.k_ii},
                    {"k_pp", u.gains.k_pp},     {"k_pi", u.gains.k_pi},
                    {"k_vp", u.gains.k_vp},     {"k_vi", u.gains.k_vi},
                    {"k_ppll", u.gains.k_ppll}, {"k_ipll", u.gains.k_ipll}};
      j["sogi_gain"] = u.sogi_gain;
      ibrs.push_back(j);
    }
    doc["ibrs"] = ibrs;
  }

  {
    json probe;
    probe["bus"] = s.probe.bus;
    probe["r0"] = s.probe.r0;
    probe["signal"] = signal_to_json(s.probe.signal);
    doc["probe"] = probe;
  }

  if (s.current_injector) {
    json inj;
    inj["bus"] = s.current_injector->bus;
    inj["axis"] = s.current_injector->axis == InjectorAxis::D ? "d" : "q";
    inj["amplitude"] = s.current_injector->amplitude;
    inj["t_on"] = s.current_injector->t_on;
    doc["current_injector"] = inj;
  }

  json recorders = json::array();
  for (const RecorderSpec& rec : s.recorders)
    recorders.push_back({{"bus", rec.bus}, {"sample_rate", rec.sample_rate}});
  doc["recorders"] = recorders;

  doc["solver"] = {{"step", s.solver.step},
                   {"duration", s.solver.duration},
                   {"settle", s.solver.settle},
                   {"record_rate", s.solver.record_rate}};
  return doc;
}

}  // namespace

std::string serialize_scenario(const Scenario& s) {
  return scenario_to_json(s).dump(2);
}

std::vector<Diagnostic> validate(const Scenario& s) {
  std::vector<Diagnostic> out;
  auto error = [&](const std::string& path, const std::string& msg) {
    out.push_back({Diagnostic::Severity::Error, path, msg});
  };
  auto warning = [&](const std::string& path, const std::string& msg) {
    out.push_back({Diagnostic::Severity::Warning, path, msg});
  };

  // Re-run the parser's semantic checks on the canonical form; a Scenario
  // built in code may violate invariants the parser would have rejected.
  try {
    parse_scenario(serialize_scenario(s));
  } catch (const ScenarioError& e) {
    error("", e.what());
  }

  for (std::size_t i = 0; i < s.recorders.size(); ++i) {
    if (s.solver.step >= 0.5 / s.recorders[i].sample_rate)
      warning("recorders[" + std::to_string(i) + "].sample_rate",
              "solver step is coarse relative to this recording rate; aliasing risk");
  }

  // Connectivity: every bus must reach a source through branches (an island
  // without a source has no defined operating point).
  if (!s.sources.empty()) {
    std::set<BusId> reached;
    std::vector<BusId> frontier;
    for (const Source& src : s.sources) {
      if (reached.insert(src.bus).second) frontier.push_back(src.bus);
    }
    while (!frontier.empty()) {
      BusId at = frontier.back();
      frontier.pop_back();
      for (const Branch& br : s.branches) {
        if (br.kind != BranchKind::SeriesRL && br.kind != BranchKind::SeriesRLC) continue;
        BusId next;
        if (br.from == at) next = br.to;
        else if (br.to == at) next = br.from;
        else continue;
        if (reached.insert(next).second) frontier.push_back(next);
      }
    }
    for (const BusId& bus : s.buses) {
      if (!reached.count(bus))
        error("buses", "bus '" + bus + "' is not connected to any source");
    }
  }

  return out;
}

std::uint64_t scenario_hash(const Scenario& s) {
  const std::string text = serialize_scenario(s);
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a offset basis
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;  // FNV prime
  }
  return h;
}

std::string scenario_hash_hex(const Scenario& s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(scenario_hash(s)));
  return std::string(buf);
}

}  // namespace subsweep
