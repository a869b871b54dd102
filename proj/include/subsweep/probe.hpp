#pragma once

#include "subsweep/netlist.hpp"

// Perturbation generators: the modulated-resistor signal p(t) with
// R(t) = r0 * (1 + p(t)), and the dq-axis current-injection benchmark source.

namespace subsweep {

// Modulation depth p(t) for a signal description. Zero -> 0. Step ->
// amplitude for t >= t_on. Tone -> amplitude * sin(2*pi*f_p*(t - t_on)) from
// t_on on. Chirp -> amplitude-enveloped sine with linear instantaneous
// frequency f_start -> f_end over [t_on, t_off]; raised-cosine ramps make the
// envelope zero and smooth at both boundaries, and p = 0 after t_off.
// Throws std::invalid_argument when t is not finite.
double evaluate_signal(const SignalSpec& spec, double t);

// Linear-chirp instantaneous frequency in Hz (0 outside [t_on, t_off]).
double chirp_instantaneous_freq(const SignalSpec& spec, double t);

// Probe resistance r0 * (1 + p(t)).
double probe_resistance(const ProbeSpec& spec, double t);

// Benchmark current source: a step of `amplitude` on the chosen dq axis,
// rotated into the instantaneous network frame,
//   i(t) = a * cos(theta_grid)   (d axis)
//   i(t) = -a * sin(theta_grid)  (q axis)
// for t >= t_on, zero before.
double injected_current(const InjectorSpec& spec, double theta_grid, double t);

}  // namespace subsweep
