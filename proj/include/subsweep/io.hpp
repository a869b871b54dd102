#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "subsweep/dsp.hpp"
#include "subsweep/sysid.hpp"
#include "subsweep/waveform.hpp"

// File formats: CSV payloads with JSON sidecars (same path plus ".json").
// All floating-point text uses the shortest decimal form that parses back to
// the identical bit pattern, so export -> import round-trips are exact and
// identical runs produce byte-identical files.

namespace subsweep {

inline constexpr const char* kToolVersion = "1.0.0";

// Shortest round-trip decimal representation.
std::string format_double(double v);
double parse_double(std::string_view text);

// A set of waveform records sharing one timebase (rate, t0, length), plus the
// provenance metadata that goes into the sidecar.
struct WaveformBundle {
  std::vector<WaveformRecord> records;
  std::string scenario_name;
  std::string scenario_hash;  // 16 hex digits
  double settle = 0.0;        // s
  double onset = 0.0;         // s, perturbation start
  double nominal_freq_hz = 0.0;
};

// CSV header: time,<channel>,... ; sidecar carries rates, hash, settle, onset.
void write_waveforms(const std::filesystem::path& csv_path, const WaveformBundle& b);
WaveformBundle read_waveforms(const std::filesystem::path& csv_path);

// CSV header: time,magnitude_pu,angle_rad ; sidecar carries theta0, v0, T_w,
// rate and warmup count.
void write_phasor(const std::filesystem::path& csv_path, const PhasorSeries& s,
                  double window_s);
PhasorSeries read_phasor(const std::filesystem::path& csv_path, double* window_s = nullptr);

// CSV header: freq_hz,zdd_re,zdd_im,zqd_re,zqd_im,provenance ; sidecar carries
// lpf_applied and the peak list.
void write_spectrum(const std::filesystem::path& csv_path, const ImpedanceSpectrum& s);
ImpedanceSpectrum read_spectrum(const std::filesystem::path& csv_path);

// Identified models as a JSON document (channel, order, fit, band,
// coefficients ascending in s, stability flag).
void write_models(const std::filesystem::path& json_path,
                  const std::vector<IdentifiedModel>& models);
std::vector<IdentifiedModel> read_models(const std::filesystem::path& json_path);

// Human-readable peak table for reports.
std::string peaks_report_text(const ImpedanceSpectrum& s);

struct RunManifest {
  std::string tool_version;     // recorded, informational
  std::string scenario_path;
  std::string scenario_hash;    // recorded before the run
  std::string perturbation;     // override summary, empty when none
  std::string output_dir;
  std::vector<std::string> artifacts;  // paths relative to output_dir
};

void write_manifest(const std::filesystem::path& json_path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& json_path);

// Artifacts listed in the manifest that do not exist under base_dir.
std::vector<std::string> missing_artifacts(const RunManifest& m,
                                           const std::filesystem::path& base_dir);

}  // namespace subsweep
