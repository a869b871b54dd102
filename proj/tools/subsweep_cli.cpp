// Command-line front end: run scenarios, identify spectra from recorded
// waveforms, emit closed-form references, compare spectra, list peaks, and
// reproduce the canned studies.
//
// Exit codes: 0 success / within tolerance, 1 tolerance failure,
//             2 usage or input error, 3 numerical failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "subsweep/analytic.hpp"
#include "subsweep/emt.hpp"
#include "subsweep/io.hpp"
#include "subsweep/netlist.hpp"
#include "subsweep/pipeline.hpp"
#include "subsweep/svg.hpp"
#include "subsweep/sysid.hpp"

namespace fs = std::filesystem;
using namespace subsweep;

namespace {

// Input-side failures (missing/(mal)formed files, bad arguments) exit 2;
// anything thrown past the loading phase is a numerical failure and exits 3.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Fn>
auto load_phase(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

SignalKind signal_kind_from(const std::string& name) {
  if (name == "zero") return SignalKind::Zero;
  if (name == "step") return SignalKind::Step;
  if (name == "chirp") return SignalKind::Chirp;
  if (name == "tone") return SignalKind::Tone;
  throw UsageError("unknown signal kind '" + name + "' (zero|step|chirp|tone)");
}

std::string describe_signal(const SignalSpec& s) {
  char buf[160];
  switch (s.kind) {
    case SignalKind::Zero:
      return "zero";
    case SignalKind::Step:
      std::snprintf(buf, sizeof buf, "step amplitude=%g t_on=%g", s.amplitude, s.t_on);
      return buf;
    case SignalKind::Chirp:
      std::snprintf(buf, sizeof buf, "chirp amplitude=%g f=%g..%g Hz t=%g..%g",
                    s.amplitude, s.f_start, s.f_end, s.t_on, s.t_off);
      return buf;
    case SignalKind::Tone:
      std::snprintf(buf, sizeof buf, "tone amplitude=%g f_p=%g t_on=%g", s.amplitude,
                    s.f_p, s.t_on);
      return buf;
  }
  return "?";
}

void print_peaks(const ImpedanceSpectrum& s) { std::fputs(peaks_report_text(s).c_str(), stdout); }

void write_manifest_for(const fs::path& out_dir, RunManifest m,
                        std::vector<std::string> artifacts) {
  m.tool_version = kToolVersion;
  m.output_dir = out_dir.string();
  std::sort(artifacts.begin(), artifacts.end());
  m.artifacts = std::move(artifacts);
  write_manifest(out_dir / "manifest.json", m);
}

// --- simulate --------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  std::string out = "out";
  std::optional<std::string> signal;
  std::optional<double> amplitude, f_start, f_end, f_p, t_on, t_off;
};

int cmd_simulate(const SimulateArgs& a) {
  Scenario sc = load_phase([&] { return load_scenario(a.scenario); });

  SignalSpec sig = sc.probe.signal;
  std::string override_desc;
  const bool any_override = a.signal || a.amplitude || a.f_start || a.f_end || a.f_p ||
                            a.t_on || a.t_off;
  if (a.signal) sig.kind = signal_kind_from(*a.signal);
  if (a.amplitude) sig.amplitude = *a.amplitude;
  if (a.f_start) sig.f_start = *a.f_start;
  if (a.f_end) sig.f_end = *a.f_end;
  if (a.f_p) sig.f_p = *a.f_p;
  if (a.t_on) sig.t_on = *a.t_on;
  if (a.t_off) sig.t_off = *a.t_off;
  if (any_override) {
    if (sig.t_on <= 0.0) sig.t_on = sc.solver.settle;
    if (sig.kind == SignalKind::Chirp && sig.t_off <= sig.t_on)
      sig.t_off = sc.solver.duration > 0 ? sc.solver.duration : sig.t_on + 28.0;
    override_desc = describe_signal(sig);
  }

  for (const Diagnostic& d : validate(sc))
    std::fprintf(stderr, "%s: %s: %s\n",
                 d.severity == Diagnostic::Severity::Error ? "error" : "warning",
                 d.path.c_str(), d.message.c_str());

  const SimulationResult sim = run_simulation(sc, sig);

  const fs::path out_dir(a.out);
  fs::create_directories(out_dir);
  WaveformBundle b;
  b.records = sim.records;
  b.scenario_name = sc.name;
  b.scenario_hash = scenario_hash_hex(sc);
  b.settle = sc.solver.settle;
  b.onset = sim.onset;
  b.nominal_freq_hz = sc.nominal_freq_hz;
  write_waveforms(out_dir / "waveforms.csv", b);

  RunManifest m;
  m.scenario_path = a.scenario;
  m.scenario_hash = b.scenario_hash;
  m.perturbation = override_desc;
  write_manifest_for(out_dir, m, {"waveforms.csv", "waveforms.csv.json"});

  const SteadyStats st = steady_state_check(sim.channel("v:" + sc.probe.bus),
                                            std::min(1.0, 0.5 * sc.solver.settle),
                                            sc.nominal_freq_hz, sim.onset);
  std::printf("scenario   %s (hash %s)\n", sc.name.c_str(), b.scenario_hash.c_str());
  std::printf("signal     %s\n", describe_signal(sig).c_str());
  std::printf("onset      %g s\n", sim.onset);
  std::printf("steady     rms %.6f pu, distortion %.3e\n", st.rms, st.thd);
  if (sim.any_ibr_saturated)
    std::fprintf(stderr, "warning: an inverter current limit engaged during the run\n");
  std::printf("wrote      %s\n", (out_dir / "waveforms.csv").string().c_str());
  return 0;
}

// --- identify ----------------------------------------------------------------

struct IdentifyArgs {
  std::string waveforms;
  std::string scenario;
  std::string out = "out";
  std::string bus;
  std::vector<int> orders{2, 3, 4, 5, 6, 7, 8};
  double f_lo = 0.5, f_hi = 40.0;
  int segments = 1;
  bool no_refine = false;
};

int cmd_identify(const IdentifyArgs& a) {
  const WaveformBundle b = load_phase([&] { return read_waveforms(a.waveforms); });
  const Scenario sc = load_phase([&] { return load_scenario(a.scenario); });
  if (b.records.empty() || b.records.front().samples.empty())
    throw UsageError("waveform file holds no samples: " + a.waveforms);
  if (!b.scenario_hash.empty() && b.scenario_hash != scenario_hash_hex(sc))
    std::fprintf(stderr,
                 "warning: waveform bundle hash %s does not match scenario hash %s\n",
                 b.scenario_hash.c_str(), scenario_hash_hex(sc).c_str());

  SimulationResult sim;
  sim.records = b.records;
  sim.onset = b.onset;

  IdentifyOptions opt;
  opt.orders = a.orders;
  opt.f_lo = a.f_lo;
  opt.f_hi = a.f_hi;
  opt.estimate.n_segments = a.segments;
  opt.estimate.refine = !a.no_refine;

  const std::string bus = a.bus.empty() ? sc.probe.bus : a.bus;
  const GridSweepResult gs = identify_gridsweep(sim, sc, bus, opt);

  const fs::path out_dir(a.out);
  fs::create_directories(out_dir);
  write_phasor(out_dir / "phasor.csv", gs.phasor, LpfSpec{}.window);
  write_models(out_dir / "models.json", {gs.mag_model, gs.ang_model});
  write_spectrum(out_dir / "spectrum.csv", gs.spectrum);
  write_spectrum(out_dir / "spectrum_raw.csv", gs.spectrum_raw);
  write_bode_svg(out_dir / "bode_zdd.svg", "Apparent impedance Zdd at " + bus,
                 {{"measured", gs.spectrum.freqs, gs.spectrum.zdd, false, ""}});
  write_bode_svg(out_dir / "bode_zqd.svg", "Apparent impedance Zqd at " + bus,
                 {{"measured", gs.spectrum.freqs, gs.spectrum.zqd, false, ""}});

  RunManifest m;
  m.scenario_path = a.scenario;
  m.scenario_hash = scenario_hash_hex(sc);
  write_manifest_for(out_dir, m,
                     {"phasor.csv", "phasor.csv.json", "models.json", "spectrum.csv",
                      "spectrum.csv.json", "spectrum_raw.csv", "spectrum_raw.csv.json",
                      "bode_zdd.svg", "bode_zqd.svg"});

  std::printf("bus        %s (v0 %.6f pu)\n", bus.c_str(), gs.dev.v0);
  std::printf("magnitude  order %d, fit %.2f%%%s\n", gs.mag_model.order, gs.mag_model.fit,
              gs.mag_model.unstable ? " [right-half-plane pole]" : "");
  std::printf("angle      order %d, fit %.2f%%%s\n", gs.ang_model.order, gs.ang_model.fit,
              gs.ang_model.unstable ? " [right-half-plane pole]" : "");
  std::printf("band       %.3g..%.3g Hz\n", gs.mag_model.f_lo, gs.mag_model.f_hi);
  print_peaks(gs.spectrum);
  std::printf("wrote      %s\n", (out_dir / "spectrum.csv").string().c_str());
  return 0;
}

// --- analytic ----------------------------------------------------------------

struct AnalyticArgs {
  std::string scenario;
  std::string out = "out";
  std::string bus;
};

int cmd_analytic(const AnalyticArgs& a) {
  const Scenario sc = load_phase([&] { return load_scenario(a.scenario); });
  if (!sc.ibrs.empty()) {
    std::fprintf(stderr, "no analytic ground truth; use current-injection benchmark\n");
    return 2;
  }

  std::vector<BusId> buses;
  if (!a.bus.empty()) {
    buses.push_back(a.bus);
  } else {
    for (const RecorderSpec& r : sc.recorders)
      if (std::find(buses.begin(), buses.end(), r.bus) == buses.end())
        buses.push_back(r.bus);
    if (buses.empty()) buses.push_back(sc.probe.bus);
  }

  const fs::path out_dir(a.out);
  fs::create_directories(out_dir);
  std::vector<std::string> artifacts;
  for (const BusId& bus : buses) {
    const AnalyticSpectra an = analytic_spectra(sc, bus);
    const std::string stem = "analytic_" + bus;
    write_spectrum(out_dir / (stem + ".csv"), an.raw);
    write_spectrum(out_dir / (stem + "_lpf.csv"), an.filtered);
    write_bode_svg(out_dir / (stem + ".svg"), "Closed-form impedance at " + bus,
                   {{"Zdd", an.raw.freqs, an.raw.zdd, false, ""},
                    {"Zdd x filter", an.filtered.freqs, an.filtered.zdd, true, ""}});
    for (const std::string& suffix :
         {std::string(".csv"), std::string(".csv.json"), std::string("_lpf.csv"),
          std::string("_lpf.csv.json"), std::string(".svg")})
      artifacts.push_back(stem + suffix);
    std::printf("%s: wrote %s and %s\n", bus.c_str(), (stem + ".csv").c_str(),
                (stem + "_lpf.csv").c_str());
  }

  RunManifest m;
  m.scenario_path = a.scenario;
  m.scenario_hash = scenario_hash_hex(sc);
  write_manifest_for(out_dir, m, std::move(artifacts));
  return 0;
}

// --- compare -----------------------------------------------------------------

struct CompareArgs {
  std::string spectrum_a, spectrum_b;
  double f_lo = 1.0, f_hi = 40.0;
  std::optional<double> tol_db, tol_deg;
  std::string svg;
};

int cmd_compare(const CompareArgs& a) {
  const ImpedanceSpectrum sa = load_phase([&] { return read_spectrum(a.spectrum_a); });
  const ImpedanceSpectrum sb = load_phase([&] { return read_spectrum(a.spectrum_b); });
  const SpectrumComparison c = compare_spectra(sa, sb, a.f_lo, a.f_hi);

  std::printf("band            %.4g..%.4g Hz\n", c.f_lo, c.f_hi);
  std::printf("channel   worst magnitude     worst phase\n");
  std::printf("Zdd       %10.4f dB  %12.4f deg\n", c.dd_mag_err_db, c.dd_phase_err_deg);
  std::printf("Zqd       %10.4f dB  %12.4f deg\n", c.qd_mag_err_db, c.qd_phase_err_deg);
  std::printf("overall   %10.4f dB  %12.4f deg\n", c.max_mag_err_db, c.max_phase_err_deg);
  for (std::size_t i = 0; i < c.peak_freq_delta_hz.size(); ++i)
    std::printf("peak %zu delta %.4f Hz\n", i + 1, c.peak_freq_delta_hz[i]);

  if (!a.svg.empty()) {
    write_bode_svg(a.svg, "Spectrum comparison (Zdd)",
                   {{"A", sa.freqs, sa.zdd, false, ""}, {"B", sb.freqs, sb.zdd, true, ""}});
    std::printf("wrote %s\n", a.svg.c_str());
  }

  bool fail = false;
  if (a.tol_db && c.max_mag_err_db > *a.tol_db) fail = true;
  if (a.tol_deg && c.max_phase_err_deg > *a.tol_deg) fail = true;
  if (fail) {
    std::fprintf(stderr, "tolerance exceeded (%.4f dB / %.4f deg vs %g dB / %g deg)\n",
                 c.max_mag_err_db, c.max_phase_err_deg,
                 a.tol_db ? *a.tol_db : std::nan(""), a.tol_deg ? *a.tol_deg : std::nan(""));
    return 1;
  }
  return 0;
}

// --- peaks ---------------------------------------------------------------------

struct PeaksArgs {
  std::string spectrum;
  double floor_db = 1.0;
  std::string channel = "dd";
  std::string out;
};

int cmd_peaks(const PeaksArgs& a) {
  ImpedanceSpectrum s = load_phase([&] { return read_spectrum(a.spectrum); });
  SpectrumChannel ch;
  if (a.channel == "dd")
    ch = SpectrumChannel::Dd;
  else if (a.channel == "qd")
    ch = SpectrumChannel::Qd;
  else
    throw UsageError("unknown channel '" + a.channel + "' (dd|qd)");
  s.peaks = find_peaks(s, a.floor_db, ch);
  const std::string text = peaks_report_text(s);
  std::fputs(text.c_str(), stdout);
  if (!a.out.empty()) {
    std::FILE* f = std::fopen(a.out.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write " + a.out);
    std::fputs(text.c_str(), f);
    std::fclose(f);
  }
  return 0;
}

// --- repro ---------------------------------------------------------------------

struct ReproArgs {
  std::vector<std::string> figures;
  bool all = false;
  std::string scenario_dir = "scenarios";
  std::string out = "out";
};

int cmd_repro(const ReproArgs& a) {
  std::vector<std::string> ids = a.figures;
  if (a.all) ids = known_figures();
  if (ids.empty()) throw UsageError("repro: name at least one study id or pass --all");

  for (const std::string& id : ids) {
    const FigureReport rep = repro_figure(id, a.scenario_dir, fs::path(a.out) / id);
    std::printf("== %s ==\n", rep.figure.c_str());
    for (const auto& [key, value] : rep.metrics)
      std::printf("  %-32s %.6g\n", key.c_str(), value);
    for (const auto& [label, text] : rep.notes)
      std::printf("  note: %s: %s\n", label.c_str(), text.c_str());
    std::printf("  artifacts: %zu files under %s\n", rep.artifacts.size() + 1,
                (fs::path(a.out) / id).string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subsynchronous apparent-impedance toolkit"};
  app.require_subcommand(1);
  int rc = 0;

  SimulateArgs sim_args;
  CLI::App* sim = app.add_subcommand("simulate", "Run a scenario and record waveforms");
  sim->add_option("scenario", sim_args.scenario, "Scenario JSON file")->required();
  sim->add_option("-o,--out", sim_args.out, "Output directory");
  sim->add_option("--signal", [&sim_args](const std::vector<std::string>& v) {
        sim_args.signal = v.front();
        return true;
      },
      "Override probe signal kind (zero|step|chirp|tone)");
  sim->add_option("--amplitude", [&sim_args](const std::vector<std::string>& v) {
        sim_args.amplitude = std::stod(v.front());
        return true;
      },
      "Override signal amplitude");
  sim->add_option("--f-start", [&sim_args](const std::vector<std::string>& v) {
        sim_args.f_start = std::stod(v.front());
        return true;
      },
      "Override chirp start frequency, Hz");
  sim->add_option("--f-end", [&sim_args](const std::vector<std::string>& v) {
        sim_args.f_end = std::stod(v.front());
        return true;
      },
      "Override chirp end frequency, Hz");
  sim->add_option("--f-p", [&sim_args](const std::vector<std::string>& v) {
        sim_args.f_p = std::stod(v.front());
        return true;
      },
      "Override tone frequency, Hz");
  sim->add_option("--t-on", [&sim_args](const std::vector<std::string>& v) {
        sim_args.t_on = std::stod(v.front());
        return true;
      },
      "Override perturbation start, s");
  sim->add_option("--t-off", [&sim_args](const std::vector<std::string>& v) {
        sim_args.t_off = std::stod(v.front());
        return true;
      },
      "Override chirp end time, s");
  sim->callback([&] { rc = cmd_simulate(sim_args); });

  IdentifyArgs id_args;
  CLI::App* ident = app.add_subcommand("identify", "Identify models and spectrum from waveforms");
  ident->add_option("waveforms", id_args.waveforms, "Waveform CSV from `simulate`")->required();
  ident->add_option("-s,--scenario", id_args.scenario, "Scenario JSON the run came from")
      ->required();
  ident->add_option("-o,--out", id_args.out, "Output directory");
  ident->add_option("--bus", id_args.bus, "Measurement bus (default: probe bus)");
  ident->add_option("--orders", id_args.orders, "Candidate model orders")->delimiter(',');
  ident->add_option("--f-lo", id_args.f_lo, "Identification band low edge, Hz");
  ident->add_option("--f-hi", id_args.f_hi, "Identification band high edge, Hz");
  ident->add_option("--segments", id_args.segments, "Averaging segments (1 = none)");
  ident->add_flag("--no-refine", id_args.no_refine, "Skip the time-domain refinement stage");
  ident->callback([&] { rc = cmd_identify(id_args); });

  AnalyticArgs an_args;
  CLI::App* an = app.add_subcommand("analytic", "Emit closed-form reference spectra");
  an->add_option("scenario", an_args.scenario, "Scenario JSON file")->required();
  an->add_option("-o,--out", an_args.out, "Output directory");
  an->add_option("--bus", an_args.bus, "Bus (default: every recorded bus)");
  an->callback([&] { rc = cmd_analytic(an_args); });

  CompareArgs cmp_args;
  CLI::App* cmp = app.add_subcommand("compare", "Compare two spectrum files over a band");
  cmp->add_option("spectrum_a", cmp_args.spectrum_a, "First spectrum CSV")->required();
  cmp->add_option("spectrum_b", cmp_args.spectrum_b, "Second spectrum CSV")->required();
  cmp->add_option("--f-lo", cmp_args.f_lo, "Band low edge, Hz");
  cmp->add_option("--f-hi", cmp_args.f_hi, "Band high edge, Hz");
  cmp->add_option("--tol-db", [&cmp_args](const std::vector<std::string>& v) {
        cmp_args.tol_db = std::stod(v.front());
        return true;
      },
      "Magnitude tolerance, dB (exit 1 when exceeded)");
  cmp->add_option("--tol-deg", [&cmp_args](const std::vector<std::string>& v) {
        cmp_args.tol_deg = std::stod(v.front());
        return true;
      },
      "Phase tolerance, degrees (exit 1 when exceeded)");
  cmp->add_option("--svg", cmp_args.svg, "Write an overlay Bode SVG to this path");
  cmp->callback([&] { rc = cmd_compare(cmp_args); });

  PeaksArgs pk_args;
  CLI::App* pk = app.add_subcommand("peaks", "List spectrum peaks");
  pk->add_option("spectrum", pk_args.spectrum, "Spectrum CSV")->required();
  pk->add_option("--floor-db", pk_args.floor_db, "Prominence floor, dB");
  pk->add_option("--channel", pk_args.channel, "dd or qd");
  pk->add_option("-o,--out", pk_args.out, "Also write the table to this file");
  pk->callback([&] { rc = cmd_peaks(pk_args); });

  ReproArgs rp_args;
  CLI::App* rp = app.add_subcommand("repro", "Reproduce a canned study end to end");
  rp->add_option("figure", rp_args.figures, "Study ids (fig6 fig10 fig12 fig16 fig17 fig18)");
  rp->add_flag("--all", rp_args.all, "Run every study");
  rp->add_option("--scenarios", rp_args.scenario_dir, "Scenario directory");
  rp->add_option("-o,--out", rp_args.out, "Output base directory (one subdir per study)");
  rp->callback([&] { rc = cmd_repro(rp_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ScenarioError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const SimulationError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  }
  return rc;
}
