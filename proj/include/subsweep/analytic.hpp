#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "subsweep/netlist.hpp"
#include "subsweep/rational.hpp"

// Closed-form dq-frame impedance models: exact transfer matrices for the
// circuit primitives, the scalar-to-dq lifting rule, probe-response algebra,
// and network reduction helpers used as references for measured spectra.

namespace subsweep {

// 2x2 rational transfer matrix [[dd, dq], [qd, qq]] in the synchronous frame.
struct DqTransferMatrix {
  RationalFn dd, dq, qd, qq;

  RationalMatrix2 as_matrix() const { return RationalMatrix2{dd, dq, qd, qq}; }
  static DqTransferMatrix from_matrix(const RationalMatrix2& m) {
    return DqTransferMatrix{m.a11, m.a12, m.a21, m.a22};
  }
  Eigen::Matrix2cd eval(cplx s) const;
  Eigen::Matrix2cd eval_hz(double f_hz) const;
};

// Series R + L + C branch lifted to dq at nominal angular frequency w0.
// Arguments are pu quantities at w0: resistance r, inductive reactance x_l,
// capacitive reactance x_c (> 0 required; use series_rl_dq when there is no
// capacitor). The qd entry carries the frequency-coupling term; dq = -qd and
// qq = dd by circuit symmetry.
DqTransferMatrix series_rlc_dq(double r, double x_l, double x_c, double w0);

// Series R + L branch lifted to dq (x_l may be zero for a pure resistor).
DqTransferMatrix series_rl_dq(double r, double x_l, double w0);

// Lift an arbitrary scalar impedance z(s) into dq:
//   dd(s) = [z(s + j w0) + z(s - j w0)] / 2,
//   qd(s) = [z(s + j w0) - z(s - j w0)] / (2 j),
// realized with real polynomial coefficients. Requires z proper or at most
// first-order improper; throws std::invalid_argument otherwise.
DqTransferMatrix scalar_to_dq(const RationalFn& z, double w0);

// Undamped LC resonance image: f0 / sqrt(x_l * b) in Hz, for pu inductive
// reactance x_l and pu shunt susceptance b at nominal frequency f0.
double natural_frequency(double x_l, double b, double f0_hz);

struct ProbeResponse {
  RationalFn h_mag;    // per-unit modulation -> voltage-magnitude deviation
  RationalFn h_ang;    // per-unit modulation -> voltage-angle deviation
  RationalFn approx_mag;  // small-|Z|/r0 approximation of h_mag
  RationalFn approx_ang;
  double max_rel_gap = 0.0;  // worst |exact-approx|/|exact| over 0.1-40 Hz
};

// Exact linearized response of the modulated-resistor probe: with loop gain
// G(s) = (Z(s) + r0 I)^{-1} Z(s), the magnitude channel is G_dd * v0 and the
// angle channel is G_qd. The approximations replace G by Z / r0.
ProbeResponse probe_response(const DqTransferMatrix& z, double r0, double v0);

// Voltage-divider ratio seen from a downstream measurement point:
// Z10 * (Z10 + Z12)^{-1} as a dq matrix.
DqTransferMatrix upstream_ratio(const DqTransferMatrix& z10,
                                const DqTransferMatrix& z12);

// Rotate a dq matrix into a frame leading by delta radians:
// T(delta) * z * T(-delta) with T = [[cos, -sin], [sin, cos]].
Eigen::Matrix2cd frame_rotate(const Eigen::Matrix2cd& z, double delta);

// Eigenvalues of a complex 2x2, sorted by (real, imag) for determinism.
std::array<cplx, 2> eigenvalues2(const Eigen::Matrix2cd& m);

// Two-port reduction of the four-bus feeder: per-frequency equivalent ratio
// Z2 (Z2 + Z23)^{-1} at the measurement bus, where Z1 = Zs || Zibr1 and
// Z2 = (Z12 + Z1) || Zibr2. Unit impedances are tabulated spectra on
// freqs_hz; an empty table means that unit is absent (open circuit).
struct Bus2Inputs {
  DqTransferMatrix zs, z12, z23;
  std::vector<Eigen::Matrix2cd> z_ibr1;  // per frequency, may be empty
  std::vector<Eigen::Matrix2cd> z_ibr2;
};
std::vector<Eigen::Matrix2cd> bus2_equivalent(const Bus2Inputs& in,
                                              const std::vector<double>& freqs_hz);

// --- Scenario-derived references (passive networks only) ------------------

// Fundamental-frequency operating point with the probe resistor connected:
// complex bus-voltage phasors (pu peak magnitude, rad angle), indexed like
// s.buses. Throws on scenarios with inverter units.
std::vector<cplx> passive_operating_point(const Scenario& s);

// Scalar driving-point impedance of the passive network at `bus`, with ideal
// sources shorted and the probe resistor excluded. Throws if the scenario
// contains inverter units (no rational closed form in that case).
RationalFn scenario_bus_impedance(const Scenario& s, const BusId& bus);

// dq lift of scenario_bus_impedance at the scenario's nominal frequency.
DqTransferMatrix scenario_bus_impedance_dq(const Scenario& s, const BusId& bus);

// Scalar transfer ratio V(measure)/V(probe) through the passive network when
// a test source replaces the probe: product of voltage-divider ratios along
// the unique path. Requires a radial (tree) network.
RationalFn scenario_transfer_ratio(const Scenario& s, const BusId& probe_bus,
                                   const BusId& measure_bus);

// Exact linearized modulation response at any recorded bus: probe response at
// the probe bus propagated through the divider chain. Entries are
// [magnitude channel; angle channel] per unit modulation depth.
ProbeResponse scenario_probe_response(const Scenario& s, const BusId& measure_bus);

}  // namespace subsweep
