#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

// Scenario data model and config-file ingestion. One JSON document fully
// determines a run; all electrical quantities are per-unit on (base_power,
// base_voltage) with SI conversion only at I/O edges.

namespace subsweep {

using BusId = std::string;

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class BranchKind { SeriesRL, SeriesRLC, ShuntC, ShuntR };

struct Branch {
  BranchKind kind = BranchKind::SeriesRL;
  BusId from;
  BusId to;  // empty for shunt kinds (implicit ground)
  double r = 0.0;                // pu
  std::optional<double> x_l;     // pu reactance at f0 (series kinds)
  std::optional<double> x_c;     // pu capacitive reactance at f0 (SeriesRLC)
  std::optional<double> b;       // pu susceptance at f0 (ShuntC)

  // pu-second element values at a given nominal angular frequency.
  double inductance(double w0) const { return x_l ? *x_l / w0 : 0.0; }
  double capacitance(double w0) const;
};

struct Source {
  BusId bus;
  double magnitude = 1.0;  // pu
  double phase = 0.0;      // rad
};

enum class SignalKind { Zero, Step, Chirp, Tone };

struct SignalSpec {
  SignalKind kind = SignalKind::Zero;
  double amplitude = 0.0;  // dimensionless, (0,1) for non-Zero kinds
  double t_on = 0.0;       // s
  double t_off = 0.0;      // s (chirp only)
  double f_start = 0.0;    // Hz (chirp)
  double f_end = 0.0;      // Hz (chirp)
  double f_p = 0.0;        // Hz (tone)
};

struct ProbeSpec {
  BusId bus;
  double r0 = 0.0;  // pu nominal resistance
  SignalSpec signal;
};

enum class InjectorAxis { D, Q };

struct InjectorSpec {
  BusId bus;
  InjectorAxis axis = InjectorAxis::D;
  double amplitude = 0.0;  // pu
  double t_on = 0.0;       // s
};

enum class QAxisMode { VoltageControl, ReactivePowerControl };

struct ControlGains {
  double k_ip = 0.3;
  double k_ii = 5.0;
  double k_pp = 0.4;
  double k_pi = 40.0;
  double k_vp = 0.4;
  double k_vi = 40.0;
  double k_ppll = 100.0;
  double k_ipll = 1400.0;
};

struct IbrUnit {
  BusId bus;
  double rating_w = 0.0;
  double dc_voltage_v = 400.0;
  double choke_r = 0.005;  // pu
  double choke_l = 0.15;   // pu
  double p_ref = 0.0;      // pu
  QAxisMode q_axis_mode = QAxisMode::VoltageControl;
  std::optional<double> v_ref;  // pu, VoltageControl
  std::optional<double> q_ref;  // pu, ReactivePowerControl
  ControlGains gains;
  double sogi_gain = std::sqrt(2.0);
};

struct RecorderSpec {
  BusId bus;
  double sample_rate = 4000.0;  // Hz
};

struct SolverSettings {
  double step = 50e-6;        // s
  double duration = 0.0;      // s
  double settle = 2.0;        // s, pre-perturbation hold
  double record_rate = 4000.0;  // Hz
};

struct Scenario {
  std::string name;
  double base_power_w = 0.0;
  double base_voltage_v = 0.0;   // nominal RMS
  double nominal_freq_hz = 60.0;
  std::vector<BusId> buses;
  std::vector<Branch> branches;
  std::vector<Source> sources;
  std::vector<IbrUnit> ibrs;
  ProbeSpec probe;
  std::optional<InjectorSpec> current_injector;
  std::vector<RecorderSpec> recorders;
  SolverSettings solver;

  double omega0() const { return 2.0 * 3.141592653589793238462643383279502884 * nominal_freq_hz; }
  bool has_bus(const BusId& id) const;
};

struct Diagnostic {
  enum class Severity { Error, Warning };
  Severity severity = Severity::Error;
  std::string path;     // field path, e.g. "recorders[0].bus"
  std::string message;
};

// Throws ScenarioError with position info on syntax errors and with the
// offending field path on semantic errors.
Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::string& path);

// Canonical form: sorted keys, absent optionals omitted. parse(serialize(s))
// equals s field-by-field.
std::string serialize_scenario(const Scenario& s);

// Empty iff every invariant holds; warnings do not block a run.
std::vector<Diagnostic> validate(const Scenario& s);

// FNV-1a over the canonical serialized form.
std::uint64_t scenario_hash(const Scenario& s);
std::string scenario_hash_hex(const Scenario& s);

}  // namespace subsweep
