#pragma once

#include "subsweep/netlist.hpp"
#include "subsweep/rational.hpp"  // cplx

// Grid-following single-phase inverter control: quadrature-signal generator
// (SOGI), PLL, outer power / voltage-or-reactive loops, inner current loop
// with decoupling and feedforward. All controller quantities are pu on the
// unit's own rating; the network-frame command is a plain voltage in pu.

namespace subsweep {

struct SogiState {
  double x1 = 0.0;      // in-phase output
  double x2 = 0.0;      // quadrature output (lags x1 by 90 deg at resonance)
  double v_prev = 0.0;  // previous input, for trapezoidal integration
};

struct DqPair {
  double d = 0.0;
  double q = 0.0;
};

struct IbrState {
  SogiState sogi_v, sogi_i;
  double pll_integ = 0.0;
  double theta = 0.0;   // rad, wrapped to [-pi, pi)
  double omega = 0.0;   // rad/s, instantaneous PLL frequency
  double outer_d_integ = 0.0;
  double outer_q_integ = 0.0;
  double inner_d_integ = 0.0;
  double inner_q_integ = 0.0;
  double cmd_network = 0.0;  // network-frame voltage command, applied next step
  bool saturated = false;    // 1.2 pu command clamp engaged at least once
};

// One trapezoidal update of x1' = w0 (k_s (v - x1) - x2), x2' = w0 x1.
void sogi_step(SogiState& st, double v, double dt, double w0, double k_s);

// PLL update on the quadrature pair: v_q = -v_alpha sin(theta) + v_beta
// cos(theta); backward-Euler PI drives the frequency deviation; returns the
// advanced, wrapped angle.
double pll_step(IbrState& st, double v_alpha, double v_beta,
                const ControlGains& g, double w0, double dt);

// Stationary (alpha, beta) to the PLL dq frame at angle theta.
DqPair to_dq(double alpha, double beta, double theta);

struct ControlInputs {
  DqPair v_dq;  // terminal voltage, PLL frame, unit pu
  DqPair i_dq;  // converter current into the bus, PLL frame, unit pu
};

// Outer + inner loops; returns the network-frame voltage command (also stored
// in st.cmd_network). Command magnitude is clamped at 1.2 pu, setting
// st.saturated when the clamp engages.
double control_step(IbrState& st, const ControlInputs& in, const IbrUnit& unit,
                    double w0, double dt);

// Steady-state seeding from the fundamental operating point: bus voltage
// phasor and converter current phasor (unit pu, peak convention). The command
// equals the back-computed internal EMF so the first solver steps hold the
// operating point.
IbrState init_ibr_state(const IbrUnit& unit, cplx v_bus, cplx i_conv, double w0);

// Wrap an angle to [-pi, pi).
double wrap_angle(double theta);

}  // namespace subsweep
