#pragma once

#include <cstddef>
#include <vector>

#include "subsweep/dsp.hpp"      // LpfSpec, moving_average_response
#include "subsweep/netlist.hpp"  // InjectorAxis
#include "subsweep/rational.hpp"

// Transfer-function identification from perturbation records, spectrum
// evaluation, peak detection, and spectrum comparison.
//
// The estimator is deterministic and two-stage: an empirical frequency
// response from (Welch-averaged) cross-/auto-spectra of the input and output,
// followed by an iterated weighted linear least-squares rational fit and a
// time-domain output-error refinement.

namespace subsweep {

enum class TfChannel { MagOverP, AngOverP, VdOverId, VqOverId, VdOverIq, VqOverIq };

const char* tf_channel_name(TfChannel channel);

struct IdentifiedModel {
  TfChannel channel = TfChannel::MagOverP;
  RationalFn tf;        // continuous-time; den monic in the scaled variable
  int order = 0;        // max(deg num, deg den)
  double fit = 0.0;     // percent; 100 (1 - ||y-yhat|| / ||y-mean(y)||)
  double f_lo = 0.0;    // Hz, identification band
  double f_hi = 0.0;    // Hz
  bool unstable = false;  // true when any identified pole lies in Re s > 0
};

enum class Provenance { Measured, Analytic, CurrentInjection };

const char* provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

struct SpectrumPeak {
  double freq_hz = 0.0;
  double prominence_db = 0.0;
  double width_hz = 0.0;  // span between the half-prominence crossings
};

struct ImpedanceSpectrum {
  std::vector<double> freqs;   // Hz, strictly increasing
  std::vector<cplx> zdd;       // pu
  std::vector<cplx> zqd;       // pu
  Provenance provenance = Provenance::Measured;
  bool lpf_applied = false;    // true when the phasor filter response is included
  std::vector<SpectrumPeak> peaks;  // conventionally the dd-channel peaks
};

enum class SpectrumChannel { Dd, Qd };

struct EstimateOptions {
  int n_segments = 1;    // Welch segments (Hann, 50% overlap) when > 1
  int grid_points = 200; // log-spaced frequency-response samples over the band
  bool refine = true;    // run the time-domain output-error refinement stage
};

// Default logarithmic analysis grid.
std::vector<double> log_frequency_grid(double f_lo = 0.5, double f_hi = 40.0,
                                       int n = 200);

// Identify a continuous-time transfer function y = G(s) u of the given order
// over [f_lo, f_hi]. u and y must be equally long, sampled at `rate`, and
// aligned; both are first-differenced before the frequency-response estimate,
// which leaves the ratio unchanged while removing step offsets. The band is
// further restricted to frequencies where the input spectrum stays within
// 40 dB of its in-band peak. The reported fit is computed on the simulated
// model output against y (undifferenced).
IdentifiedModel estimate_tf(const std::vector<double>& u, const std::vector<double>& y,
                            double rate, int order, double f_lo, double f_hi,
                            const EstimateOptions& opt = {});

// Run estimate_tf for each candidate order and return the model with the
// highest fit; fits within 0.1 percentage points are ties, broken toward the
// lower order.
IdentifiedModel select_order(const std::vector<double>& u, const std::vector<double>& y,
                             double rate, const std::vector<int>& orders,
                             double f_lo, double f_hi, const EstimateOptions& opt = {});

// Zero-state simulation of y = G(s) u with first-order-hold input, exact
// matrix-exponential discretization at `rate`. G must be proper.
std::vector<double> lsim(const RationalFn& tf, const std::vector<double>& u,
                         double rate);

// 100 (1 - ||y - lsim(tf,u)|| / ||y - mean(y)||); -infinity when the
// simulation diverges.
double model_fit_percent(const RationalFn& tf, const std::vector<double>& u,
                         const std::vector<double>& y, double rate);

// Assemble the apparent-impedance spectrum from the two probe-channel models
// (magnitude-per-modulation and angle-per-modulation):
//   Z_dd = r0 H_mag / v0,   Z_qd = r0 H_ang.
// When apply_lpf is true both channels are multiplied by the moving-average
// filter response, producing the spectrum as the phasor instrument sees it;
// lpf_applied records the choice.
ImpedanceSpectrum to_spectrum(const IdentifiedModel& mag_model,
                              const IdentifiedModel& ang_model, double r0, double v0,
                              const LpfSpec& lpf, const std::vector<double>& freqs_hz,
                              bool apply_lpf = true);

// Hann-windowed, mean-removed spectral content of one record, evaluated at
// the given frequencies and scaled to one-sided amplitude. For ring-down
// studies the response spectrum itself (not an input-normalized ratio) is the
// displayed object: a decaying oscillation peaks at its damped frequency, so
// spectrum peaks land on the system modes.
std::vector<cplx> signal_spectrum(const std::vector<double>& x, double rate,
                                  const std::vector<double>& freqs_hz);

// Local maxima of 20 log10 |z| with topographic prominence >= the floor.
// Peak frequencies are refined by quadratic interpolation in (log f, dB) and
// widths measured between the half-prominence crossings. Requires >= 8 points.
std::vector<SpectrumPeak> find_peaks(const std::vector<double>& freqs_hz,
                                     const std::vector<cplx>& z,
                                     double prominence_floor_db);
std::vector<SpectrumPeak> find_peaks(const ImpedanceSpectrum& spectrum,
                                     double prominence_floor_db,
                                     SpectrumChannel channel = SpectrumChannel::Dd);

// One current-injection experiment: a step of injected current on one dq axis
// (u, in the injection frame) and the resulting bus-voltage deviations
// (vd, vq, same frame, same timebase).
struct AxisExperiment {
  InjectorAxis axis = InjectorAxis::D;
  std::vector<double> u;
  std::vector<double> vd;
  std::vector<double> vq;
  double rate = 0.0;  // Hz
};

// Identify the full 2x2 impedance from one d-axis and one q-axis experiment
// and rotate it into the frame whose d-axis sits at `delta_rad` (measured in
// the injection frame); pass the steady-state voltage angle to land in the
// probe-voltage frame, or 0 when the frames already coincide. Throws when
// both experiments excite the same axis.
ImpedanceSpectrum identify_current_injection(const AxisExperiment& d_exp,
                                             const AxisExperiment& q_exp, int order,
                                             double f_lo, double f_hi,
                                             const std::vector<double>& freqs_hz,
                                             double delta_rad,
                                             const EstimateOptions& opt = {});

struct SpectrumComparison {
  double max_mag_err_db = 0.0;    // worst over both channels
  double max_phase_err_deg = 0.0;
  double dd_mag_err_db = 0.0;
  double dd_phase_err_deg = 0.0;
  double qd_mag_err_db = 0.0;
  double qd_phase_err_deg = 0.0;
  std::vector<double> peak_freq_delta_hz;  // a's peaks to nearest peak of b
  double f_lo = 0.0;  // Hz, band actually compared
  double f_hi = 0.0;
};

// Worst-case magnitude/phase discrepancies over the overlap of both spectra
// with [f_lo, f_hi], evaluated on a common log grid (linear interpolation of
// dB and unwrapped phase in log f). Throws when the bands are disjoint.
SpectrumComparison compare_spectra(const ImpedanceSpectrum& a,
                                   const ImpedanceSpectrum& b, double f_lo,
                                   double f_hi);

}  // namespace subsweep
