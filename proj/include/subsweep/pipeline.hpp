#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "subsweep/emt.hpp"
#include "subsweep/io.hpp"
#include "subsweep/netlist.hpp"
#include "subsweep/sysid.hpp"

// End-to-end studies: run a scenario, reduce the point-on-wave records to
// dq-frame deviations, identify perturbation-to-phasor transfer models, and
// assemble apparent-impedance spectra plus report artifacts for the canned
// study ids used by `repro`.

namespace subsweep {

struct IdentifyOptions {
  std::vector<int> orders{2, 3, 4, 5, 6, 7, 8};  // candidate model orders
  double f_lo = 0.5;   // Hz, identification band request
  double f_hi = 40.0;  // Hz (estimate_tf trims to the excited band)
  std::vector<double> freqs_hz = log_frequency_grid();  // spectrum grid
  EstimateOptions estimate;
  double preroll_s = 0.5;      // context kept before the perturbation onset
  double peak_floor_db = 1.0;  // prominence floor for reported peaks
};

// Resistor-modulation identification at one recorded bus.
struct GridSweepResult {
  double theta0 = 0.0;  // rad, demodulation reference at the measured bus
  PhasorSeries phasor;
  Deviations dev;
  FilteredSeries input;        // modulation depth through the matched filter
  IdentifiedModel mag_model;   // MagOverP
  IdentifiedModel ang_model;   // AngOverP
  ImpedanceSpectrum spectrum;      // filter response attached (instrument view)
  ImpedanceSpectrum spectrum_raw;  // plant only
};

GridSweepResult identify_gridsweep(const SimulationResult& sim, const Scenario& sc,
                                   const BusId& measure_bus,
                                   const IdentifyOptions& opt = {});

// Current-injection benchmark assembled from a d-axis run and a q-axis run of
// the same scenario (probe at rest, injector active). sim_d must come from
// the d-axis variant and sim_q from the q-axis variant.
struct InjectionResult {
  int order = 0;           // shared model order picked on the dominant channel
  double delta_rad = 0.0;  // measured steady voltage angle in the injection frame
  ImpedanceSpectrum spectrum;  // provenance CurrentInjection, plant only
};

InjectionResult identify_injection(const SimulationResult& sim_d,
                                   const SimulationResult& sim_q, const Scenario& sc,
                                   const BusId& measure_bus,
                                   const IdentifyOptions& opt = {});

// Closed-form reference spectra at a recorded bus of a passive scenario: the
// plant-only spectrum and the same spectrum with the phasor-filter response
// attached (what the measurement chain converges to).
struct AnalyticSpectra {
  ImpedanceSpectrum raw;
  ImpedanceSpectrum filtered;
};

AnalyticSpectra analytic_spectra(const Scenario& sc, const BusId& measure_bus,
                                 const std::vector<double>& freqs_hz = log_frequency_grid(),
                                 const LpfSpec& lpf = {}, double peak_floor_db = 1.0);

// One canned study: simulations, identification, overlays; artifacts land
// under out_dir (CSV payloads with JSON sidecars, SVG overlays, report.json,
// manifest.json). Spectra carried in-memory under stable keys per study:
//   fig6 : measured, measured_raw, analytic, analytic_lpf
//   fig10: measured, measured_raw, analytic, analytic_lpf
//   fig12: bus1_measured, bus1_analytic_lpf, bus2_measured, bus2_analytic_lpf
//   fig16: gridsweep_raw, gridsweep, injection
//   fig17: voltage_control, reactive_power_control
//   fig18: bus2, bus3
struct FigureReport {
  std::string figure;
  std::vector<std::pair<std::string, std::string>> notes;
  std::map<std::string, double> metrics;
  std::map<std::string, ImpedanceSpectrum> spectra;
  std::vector<std::string> artifacts;  // paths relative to out_dir
  RunManifest manifest;
};

// Ids accepted by repro_figure, in presentation order.
const std::vector<std::string>& known_figures();

FigureReport repro_figure(const std::string& figure_id,
                          const std::filesystem::path& scenario_dir,
                          const std::filesystem::path& out_dir);

}  // namespace subsweep
