#pragma once

#include <cstddef>
#include <vector>

#include "subsweep/rational.hpp"  // cplx
#include "subsweep/waveform.hpp"

// Point-on-wave to dq-phasor conversion: demodulation against the nominal
// frequency, one-cycle-family moving-average low-pass filtering, magnitude and
// unwrapped-angle extraction, and the filter's exact frequency response.

namespace subsweep {

struct LpfSpec {
  double window = 1.0 / 120.0;  // s
};

// Output rate of the phasor stream after decimation.
inline constexpr double kPhasorRate = 400.0;

struct PhasorSeries {
  double sample_rate = 0.0;     // Hz
  double t0 = 0.0;              // s, time of magnitude[0]
  std::vector<double> magnitude;  // pu, >= 0
  std::vector<double> angle;      // rad relative to theta0, unwrapped
  double theta0 = 0.0;          // rad, demodulation reference angle
  double v0 = 0.0;              // pu, pre-perturbation magnitude (set by deviations)
  std::size_t warmup = 0;       // leading samples within the first filter window

  double time_at(std::size_t k) const { return t0 + static_cast<double>(k) / sample_rate; }
};

struct Deviations {
  std::vector<double> dvhat;   // pu, magnitude deviation
  std::vector<double> dtheta;  // rad, angle deviation
  double v0 = 0.0;             // pu
  double a0 = 0.0;             // rad, pre-perturbation mean angle (relative to theta0)
  std::size_t onset_index = 0;  // first sample at or after the perturbation onset
};

// Rectangular (d, q) deviations in the demodulation frame — used when the
// excitation axes, not the local voltage phasor, define the frame of interest.
struct RectDeviations {
  std::vector<double> dvd;     // pu, d-axis deviation
  std::vector<double> dvq;     // pu, q-axis deviation
  double v0 = 0.0;             // pu, baseline magnitude
  double a0 = 0.0;             // rad, baseline angle in the demodulation frame
  std::size_t onset_index = 0;
};

// A scalar signal passed through exactly the same filter and decimation as
// extract_dq applies, so it shares a timebase (t0, rate) with the phasor
// stream extracted from a record of equal rate and t0.
struct FilteredSeries {
  double sample_rate = 0.0;  // Hz
  double t0 = 0.0;           // s, time of values[0]
  std::vector<double> values;

  double time_at(std::size_t k) const { return t0 + static_cast<double>(k) / sample_rate; }
};

// FIR taps c[0..L-1] (y[n] = sum_i c[i] x[n-i]) realizing the sliding-window
// time average of length window_s at the given rate: each tap block is the
// exact integral of a degree-5 local polynomial interpolant, then the taps are
// minimally adjusted so the DC gain is exactly 1 and the response at null_hz
// is exactly 0 (pass null_hz <= 0 to skip the null constraint).
std::vector<double> design_window_integral_fir(double rate, double window_s,
                                               double null_hz);

// Valid-region convolution: output length max(0, x.size() - taps.size() + 1),
// first output aligned with x[taps.size() - 1].
std::vector<double> fir_filter_valid(const std::vector<double>& x,
                                     const std::vector<double>& taps);

// Exact complex gain (1 - e^{-j 2 pi f T_w}) / (j 2 pi f T_w), limit 1 at 0.
cplx moving_average_response(const LpfSpec& lpf, double f_hz);

// Demodulate a waveform record into a dq phasor stream:
//   v_d = LPF(2 v(t) cos(w0 t + theta0)),  v_q = LPF(-2 v(t) sin(w0 t + theta0)),
// magnitude = hypot(v_d, v_q), angle = unwrapped atan2(v_q, v_d), decimated to
// kPhasorRate. Requires record.sample_rate >= 20 f0 and a non-empty record
// longer than the filter window.
PhasorSeries extract_dq(const WaveformRecord& record, double f0, double theta0,
                        const LpfSpec& lpf);

// Steady-state phase of the fundamental over the first `window_s` seconds of
// the record, using an exact-cycle truncation so the quadrature sums are
// leakage-free. Throws if the window overlaps `onset` (perturbation start) or
// if no fundamental is present (amplitude < 0.01 pu).
double reference_angle(const WaveformRecord& record, double f0, double window_s,
                       double onset = 1e300);

// Subtract pre-perturbation means; the pre region is [t0 + guard, onset - guard]
// and must span at least 0.5 s.
Deviations deviations(const PhasorSeries& series, double onset_time,
                      const LpfSpec& lpf = {});

// Rectangular-component variant of `deviations`: works on v_d = m cos(angle),
// v_q = m sin(angle) in the demodulation frame and subtracts their
// pre-perturbation means. Same pre-region rules as `deviations`.
RectDeviations deviations_rect(const PhasorSeries& series, double onset_time,
                               const LpfSpec& lpf = {});

// Run a known scalar signal through the identical filter + decimation chain
// used by extract_dq (window FIR with a null at 2 f0, then decimation to
// kPhasorRate) so ratios against the phasor stream cancel the filter exactly.
FilteredSeries filter_decimate(const WaveformRecord& record, double f0,
                               const LpfSpec& lpf = {});

// Largest n <= n_max such that n samples at `rate` span an exact integer
// number of periods of f0 (0 when none exists up to the search bound).
std::size_t exact_cycle_samples(double rate, double f0, std::size_t n_max);

// Nearest-branch angle unwrapping, in place.
void unwrap_angles(std::vector<double>& angles);

}  // namespace subsweep
