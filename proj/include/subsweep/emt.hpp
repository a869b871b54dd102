#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "subsweep/ibr.hpp"
#include "subsweep/netlist.hpp"
#include "subsweep/waveform.hpp"

// Fixed-step time-domain solver: trapezoidal companion models assembled into
// a nodal conductance system, time-varying probe resistance, optional
// dq-frame current injector, and inverter units coupled as one-step-delayed
// controlled voltage sources behind their chokes.

namespace subsweep {

struct SimulationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SimulationResult {
  // One "v:<bus>" record per recorder, then "i:probe" (probe branch current),
  // "p:probe" (modulation depth), and "i:inj" when an injector is active.
  std::vector<WaveformRecord> records;
  std::vector<cplx> operating_point;  // fundamental phasor per scenario bus
  double onset = 0.0;                 // perturbation activation time, s
  bool any_ibr_saturated = false;

  const WaveformRecord& channel(const std::string& name) const;
  bool has_channel(const std::string& name) const;
};

// Run with an explicit perturbation signal for the probe (the scenario's own
// probe.signal is ignored in favor of this one).
SimulationResult run_simulation(const Scenario& s, const SignalSpec& perturbation);

// Run with the scenario's configured probe signal.
SimulationResult run_simulation(const Scenario& s);

struct SteadyStats {
  double rms = 0.0;  // pu
  double thd = 0.0;  // non-fundamental RMS over fundamental RMS
};

// Stats over the last `window_s` seconds before `t_end` (typically the settle
// boundary). The fundamental is isolated over an exact-cycle span of f0.
SteadyStats steady_state_check(const WaveformRecord& record, double window_s,
                               double f0, double t_end);

// Fundamental operating point with probe connected and injector inactive:
// passive networks solve a complex nodal system; scenarios with inverter
// units solve a power flow (units hold p_ref and v_ref or q_ref). Indexed
// like s.buses.
std::vector<cplx> operating_point(const Scenario& s);

}  // namespace subsweep
