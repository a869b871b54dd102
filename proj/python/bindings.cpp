// Python bindings: scenario loading, time-domain simulation, impedance
// identification, analytic references, and the figure-study runner.

#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <stdexcept>

#include "subsweep/analytic.hpp"
#include "subsweep/dsp.hpp"
#include "subsweep/emt.hpp"
#include "subsweep/io.hpp"
#include "subsweep/netlist.hpp"
#include "subsweep/pipeline.hpp"
#include "subsweep/sysid.hpp"

namespace py = pybind11;
using namespace subsweep;

namespace {

SpectrumChannel channel_from(const std::string& name) {
  if (name == "dd") return SpectrumChannel::Dd;
  if (name == "qd") return SpectrumChannel::Qd;
  throw std::invalid_argument("channel must be 'dd' or 'qd'");
}

}  // namespace

PYBIND11_MODULE(_subsweep, m) {
  m.doc() =
      "Subsynchronous apparent-impedance toolkit: time-domain simulation of "
      "probe-modulated networks, dq spectrum identification, and analytic "
      "references.";
  m.attr("__version__") = kToolVersion;

  py::register_exception<ScenarioError>(m, "ScenarioError", PyExc_ValueError);
  py::register_exception<SimulationError>(m, "SimulationError", PyExc_RuntimeError);

  // --- waveforms and simulation ------------------------------------------
  py::class_<WaveformRecord>(m, "WaveformRecord")
      .def_readonly("channel", &WaveformRecord::channel)
      .def_readonly("sample_rate", &WaveformRecord::sample_rate)
      .def_readonly("t0", &WaveformRecord::t0)
      .def_readonly("samples", &WaveformRecord::samples)
      .def("time_at", &WaveformRecord::time_at, py::arg("n"))
      .def("duration", &WaveformRecord::duration)
      .def("__repr__", [](const WaveformRecord& r) {
        return "<WaveformRecord '" + r.channel + "' " + std::to_string(r.samples.size()) +
               " samples @ " + std::to_string(r.sample_rate) + " Hz>";
      });

  py::class_<SolverSettings>(m, "SolverSettings")
      .def_readwrite("step", &SolverSettings::step)
      .def_readwrite("duration", &SolverSettings::duration)
      .def_readwrite("settle", &SolverSettings::settle)
      .def_readwrite("record_rate", &SolverSettings::record_rate);

  py::class_<Scenario>(m, "Scenario")
      .def_readonly("name", &Scenario::name)
      .def_readonly("base_power_w", &Scenario::base_power_w)
      .def_readonly("base_voltage_v", &Scenario::base_voltage_v)
      .def_readonly("nominal_freq_hz", &Scenario::nominal_freq_hz)
      .def_readonly("buses", &Scenario::buses)
      .def_readwrite("solver", &Scenario::solver)
      .def("omega0", &Scenario::omega0)
      .def("__repr__",
           [](const Scenario& s) { return "<Scenario '" + s.name + "'>"; });

  m.def("load_scenario", &load_scenario, py::arg("path"),
        "Parse and validate a scenario JSON file.");
  m.def("scenario_hash", &scenario_hash, py::arg("scenario"),
        "Stable content hash of a scenario's canonical serialization.");

  py::class_<SimulationResult>(m, "SimulationResult")
      .def_readonly("records", &SimulationResult::records)
      .def_readonly("operating_point", &SimulationResult::operating_point)
      .def_readonly("onset", &SimulationResult::onset)
      .def_readonly("any_ibr_saturated", &SimulationResult::any_ibr_saturated)
      .def("channel", &SimulationResult::channel, py::arg("name"),
           py::return_value_policy::reference_internal)
      .def("has_channel", &SimulationResult::has_channel, py::arg("name"));

  m.def("run_simulation",
        static_cast<SimulationResult (*)(const Scenario&)>(&run_simulation),
        py::arg("scenario"),
        "Run the fixed-step solver with the scenario's configured probe signal.");

  py::class_<SteadyStats>(m, "SteadyStats")
      .def_readonly("rms", &SteadyStats::rms)
      .def_readonly("thd", &SteadyStats::thd);

  m.def("steady_state_check", &steady_state_check, py::arg("record"),
        py::arg("window_s"), py::arg("f0"), py::arg("t_end"),
        "RMS and distortion over the trailing window before t_end.");

  // --- dsp ------------------------------------------------------------------
  py::class_<LpfSpec>(m, "LpfSpec")
      .def(py::init<>())
      .def_readwrite("window", &LpfSpec::window);

  m.def(
      "lpf_response",
      [](double f_hz, double window) {
        LpfSpec spec;
        spec.window = window;
        return moving_average_response(spec, f_hz);
      },
      py::arg("f_hz"), py::arg("window") = 1.0 / 120.0,
      "Complex response of the moving-average phasor filter at f_hz.");

  // --- analytic ---------------------------------------------------------------
  m.def("natural_frequency", &natural_frequency, py::arg("x_l"), py::arg("b"),
        py::arg("f0"),
        "Series-L / shunt-C resonance frequency in Hz for pu reactances.");
  m.def("log_frequency_grid", &log_frequency_grid, py::arg("f_lo") = 0.5,
        py::arg("f_hi") = 40.0, py::arg("n") = 200,
        "Logarithmically spaced frequency grid in Hz.");

  // --- spectra and identification ---------------------------------------------
  py::enum_<Provenance>(m, "Provenance")
      .value("Measured", Provenance::Measured)
      .value("Analytic", Provenance::Analytic)
      .value("CurrentInjection", Provenance::CurrentInjection);

  py::class_<SpectrumPeak>(m, "SpectrumPeak")
      .def_readonly("freq_hz", &SpectrumPeak::freq_hz)
      .def_readonly("prominence_db", &SpectrumPeak::prominence_db)
      .def_readonly("width_hz", &SpectrumPeak::width_hz)
      .def("__repr__", [](const SpectrumPeak& p) {
        return "<SpectrumPeak " + std::to_string(p.freq_hz) + " Hz, " +
               std::to_string(p.prominence_db) + " dB>";
      });

  py::class_<ImpedanceSpectrum>(m, "ImpedanceSpectrum")
      .def_readonly("freqs", &ImpedanceSpectrum::freqs)
      .def_readonly("zdd", &ImpedanceSpectrum::zdd)
      .def_readonly("zqd", &ImpedanceSpectrum::zqd)
      .def_readonly("provenance", &ImpedanceSpectrum::provenance)
      .def_readonly("lpf_applied", &ImpedanceSpectrum::lpf_applied)
      .def_readonly("peaks", &ImpedanceSpectrum::peaks);

  m.def(
      "find_peaks",
      [](const ImpedanceSpectrum& s, double floor_db, const std::string& channel) {
        return find_peaks(s, floor_db, channel_from(channel));
      },
      py::arg("spectrum"), py::arg("floor_db") = 1.0, py::arg("channel") = "dd",
      "Locate local magnitude maxima with at least floor_db prominence.");

  py::class_<IdentifiedModel>(m, "IdentifiedModel")
      .def_readonly("order", &IdentifiedModel::order)
      .def_readonly("fit", &IdentifiedModel::fit)
      .def_readonly("f_lo", &IdentifiedModel::f_lo)
      .def_readonly("f_hi", &IdentifiedModel::f_hi)
      .def_readonly("unstable", &IdentifiedModel::unstable);

  py::class_<EstimateOptions>(m, "EstimateOptions")
      .def(py::init<>())
      .def_readwrite("n_segments", &EstimateOptions::n_segments)
      .def_readwrite("grid_points", &EstimateOptions::grid_points)
      .def_readwrite("refine", &EstimateOptions::refine);

  py::class_<IdentifyOptions>(m, "IdentifyOptions")
      .def(py::init<>())
      .def_readwrite("orders", &IdentifyOptions::orders)
      .def_readwrite("f_lo", &IdentifyOptions::f_lo)
      .def_readwrite("f_hi", &IdentifyOptions::f_hi)
      .def_readwrite("freqs_hz", &IdentifyOptions::freqs_hz)
      .def_readwrite("estimate", &IdentifyOptions::estimate)
      .def_readwrite("preroll_s", &IdentifyOptions::preroll_s)
      .def_readwrite("peak_floor_db", &IdentifyOptions::peak_floor_db);

  py::class_<GridSweepResult>(m, "GridSweepResult")
      .def_readonly("theta0", &GridSweepResult::theta0)
      .def_readonly("mag_model", &GridSweepResult::mag_model)
      .def_readonly("ang_model", &GridSweepResult::ang_model)
      .def_readonly("spectrum", &GridSweepResult::spectrum)
      .def_readonly("spectrum_raw", &GridSweepResult::spectrum_raw);

  m.def("identify_gridsweep", &identify_gridsweep, py::arg("sim"),
        py::arg("scenario"), py::arg("measure_bus"),
        py::arg("options") = IdentifyOptions{},
        "Identify the apparent-impedance spectrum from a probe-modulation run.");

  py::class_<InjectionResult>(m, "InjectionResult")
      .def_readonly("order", &InjectionResult::order)
      .def_readonly("delta_rad", &InjectionResult::delta_rad)
      .def_readonly("spectrum", &InjectionResult::spectrum);

  m.def("identify_injection", &identify_injection, py::arg("sim_d"),
        py::arg("sim_q"), py::arg("scenario"), py::arg("measure_bus"),
        py::arg("options") = IdentifyOptions{},
        "Identify the dq impedance from paired d- and q-axis injection runs.");

  py::class_<AnalyticSpectra>(m, "AnalyticSpectra")
      .def_readonly("raw", &AnalyticSpectra::raw)
      .def_readonly("filtered", &AnalyticSpectra::filtered);

  m.def(
      "analytic_spectra",
      [](const Scenario& sc, const std::string& bus, const std::vector<double>& freqs,
         double lpf_window, double peak_floor_db) {
        LpfSpec lpf;
        lpf.window = lpf_window;
        return analytic_spectra(sc, bus, freqs, lpf, peak_floor_db);
      },
      py::arg("scenario"), py::arg("measure_bus"),
      py::arg("freqs_hz") = log_frequency_grid(0.5, 40.0, 200),
      py::arg("lpf_window") = 1.0 / 120.0, py::arg("peak_floor_db") = 1.0,
      "Closed-form spectrum for a passive scenario, raw and filter-shaped.");

  py::class_<SpectrumComparison>(m, "SpectrumComparison")
      .def_readonly("max_mag_err_db", &SpectrumComparison::max_mag_err_db)
      .def_readonly("max_phase_err_deg", &SpectrumComparison::max_phase_err_deg)
      .def_readonly("dd_mag_err_db", &SpectrumComparison::dd_mag_err_db)
      .def_readonly("dd_phase_err_deg", &SpectrumComparison::dd_phase_err_deg)
      .def_readonly("qd_mag_err_db", &SpectrumComparison::qd_mag_err_db)
      .def_readonly("qd_phase_err_deg", &SpectrumComparison::qd_phase_err_deg)
      .def_readonly("peak_freq_delta_hz", &SpectrumComparison::peak_freq_delta_hz)
      .def_readonly("f_lo", &SpectrumComparison::f_lo)
      .def_readonly("f_hi", &SpectrumComparison::f_hi);

  m.def("compare_spectra", &compare_spectra, py::arg("a"), py::arg("b"),
        py::arg("f_lo") = 1.0, py::arg("f_hi") = 40.0,
        "Worst-case magnitude/phase separation over the overlapping band.");

  // --- figure studies ----------------------------------------------------------
  py::class_<FigureReport>(m, "FigureReport")
      .def_readonly("figure", &FigureReport::figure)
      .def_readonly("notes", &FigureReport::notes)
      .def_readonly("metrics", &FigureReport::metrics)
      .def_readonly("spectra", &FigureReport::spectra)
      .def_readonly("artifacts", &FigureReport::artifacts);

  m.def("known_figures", &known_figures,
        "Identifiers accepted by repro_figure().");
  m.def("repro_figure", &repro_figure, py::arg("figure"), py::arg("scenario_dir"),
        py::arg("out_dir"),
        "Run one canned study end to end, writing its artifacts to out_dir.");
}
