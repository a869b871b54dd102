#include "subsweep/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include <nlohmann/json.hpp>

namespace subsweep {

namespace {

using nlohmann::json;

std::string sidecar_path(const std::filesystem::path& csv_path) {
  return csv_path.string() + ".json";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const std::filesystem::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

json read_json(const std::filesystem::path& path) {
  return json::parse(read_text(path));
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

// Iterate over lines of a CSV payload; returns the header line separately.
struct CsvReader {
  std::string text;
  std::size_t pos = 0;

  explicit CsvReader(const std::filesystem::path& path) : text(read_text(path)) {}

  bool next(std::string_view& line) {
    if (pos >= text.size()) return false;
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    line = std::string_view(text).substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return true;
  }
};

}  // namespace

std::string format_double(double v) {
  char buf[40];
  const std::to_chars_result r = std::to_chars(buf, buf + sizeof(buf), v);
  if (r.ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const std::from_chars_result r = std::from_chars(first, last, v);
  if (r.ec != std::errc() || r.ptr != last)
    throw std::runtime_error("invalid number '" + std::string(text) + "'");
  return v;
}

void write_waveforms(const std::filesystem::path& csv_path, const WaveformBundle& b) {
  if (b.records.empty())
    throw std::invalid_argument("write_waveforms: no records");
  const WaveformRecord& head = b.records.front();
  for (const WaveformRecord& r : b.records) {
    if (r.sample_rate != head.sample_rate || r.t0 != head.t0 ||
        r.samples.size() != head.samples.size())
      throw std::invalid_argument("write_waveforms: records must share a timebase");
  }

  std::string text;
  text.reserve(b.records.size() * head.samples.size() * 20 + 64);
  text += "time";
  for (const WaveformRecord& r : b.records) {
    text += ',';
    text += r.channel;
  }
  text += '\n';
  for (std::size_t k = 0; k < head.samples.size(); ++k) {
    text += format_double(head.time_at(k));
    for (const WaveformRecord& r : b.records) {
      text += ',';
      text += format_double(r.samples[k]);
    }
    text += '\n';
  }
  write_text(csv_path, text);

  json meta;
  meta["kind"] = "waveforms";
  meta["scenario_name"] = b.scenario_name;
  meta["scenario_hash"] = b.scenario_hash;
  meta["sample_rate"] = head.sample_rate;
  meta["t0"] = head.t0;
  meta["settle"] = b.settle;
  meta["onset"] = b.onset;
  meta["nominal_freq_hz"] = b.nominal_freq_hz;
  json channels = json::array();
  for (const WaveformRecord& r : b.records) channels.push_back(r.channel);
  meta["channels"] = channels;
  write_json(sidecar_path(csv_path), meta);
}

WaveformBundle read_waveforms(const std::filesystem::path& csv_path) {
  WaveformBundle b;
  double rate = 0.0, t0 = 0.0;
  bool have_meta = false;
  const std::filesystem::path side = sidecar_path(csv_path);
  if (std::filesystem::exists(side)) {
    const json meta = read_json(side);
    b.scenario_name = meta.value("scenario_name", "");
    b.scenario_hash = meta.value("scenario_hash", "");
    b.settle = meta.value("settle", 0.0);
    b.onset = meta.value("onset", 0.0);
    b.nominal_freq_hz = meta.value("nominal_freq_hz", 0.0);
    rate = meta.value("sample_rate", 0.0);
    t0 = meta.value("t0", 0.0);
    have_meta = true;
  }

  CsvReader reader(csv_path);
  std::string_view line;
  if (!reader.next(line))
    throw std::runtime_error("empty waveform file '" + csv_path.string() + "'");
  const std::vector<std::string_view> header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "time")
    throw std::runtime_error("malformed waveform header in '" + csv_path.string() + "'");
  b.records.resize(header.size() - 1);
  for (std::size_t c = 1; c < header.size(); ++c)
    b.records[c - 1].channel = std::string(header[c]);

  double first_time = 0.0, second_time = 0.0;
  std::size_t rows = 0;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const std::vector<std::string_view> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("ragged waveform row in '" + csv_path.string() + "'");
    const double t = parse_double(cells[0]);
    if (rows == 0) first_time = t;
    if (rows == 1) second_time = t;
    for (std::size_t c = 1; c < cells.size(); ++c)
      b.records[c - 1].samples.push_back(parse_double(cells[c]));
    ++rows;
  }
  if (rows == 0)
    throw std::runtime_error("waveform file has no samples: '" + csv_path.string() + "'");
  if (!have_meta) {
    t0 = first_time;
    rate = (rows > 1) ? 1.0 / (second_time - first_time) : 0.0;
  }
  for (WaveformRecord& r : b.records) {
    r.sample_rate = rate;
    r.t0 = t0;
  }
  return b;
}

void write_phasor(const std::filesystem::path& csv_path, const PhasorSeries& s,
                  double window_s) {
  std::string text = "time,magnitude_pu,angle_rad\n";
  text.reserve(s.magnitude.size() * 48 + 32);
  for (std::size_t k = 0; k < s.magnitude.size(); ++k) {
    text += format_double(s.time_at(k));
    text += ',';
    text += format_double(s.magnitude[k]);
    text += ',';
    text += format_double(s.angle[k]);
    text += '\n';
  }
  write_text(csv_path, text);

  json meta;
  meta["kind"] = "phasor";
  meta["sample_rate"] = s.sample_rate;
  meta["t0"] = s.t0;
  meta["theta0"] = s.theta0;
  meta["v0"] = s.v0;
  meta["window_s"] = window_s;
  meta["warmup"] = s.warmup;
  write_json(sidecar_path(csv_path), meta);
}

PhasorSeries read_phasor(const std::filesystem::path& csv_path, double* window_s) {
  PhasorSeries s;
  const std::filesystem::path side = sidecar_path(csv_path);
  bool have_meta = false;
  if (std::filesystem::exists(side)) {
    const json meta = read_json(side);
    s.sample_rate = meta.value("sample_rate", 0.0);
    s.t0 = meta.value("t0", 0.0);
    s.theta0 = meta.value("theta0", 0.0);
    s.v0 = meta.value("v0", 0.0);
    s.warmup = meta.value("warmup", std::size_t{0});
    if (window_s) *window_s = meta.value("window_s", 0.0);
    have_meta = true;
  } else if (window_s) {
    *window_s = 0.0;
  }

  CsvReader reader(csv_path);
  std::string_view line;
  if (!reader.next(line) || line != "time,magnitude_pu,angle_rad")
    throw std::runtime_error("malformed phasor header in '" + csv_path.string() + "'");
  double first_time = 0.0, second_time = 0.0;
  std::size_t rows = 0;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const std::vector<std::string_view> cells = split_csv_line(line);
    if (cells.size() != 3)
      throw std::runtime_error("ragged phasor row in '" + csv_path.string() + "'");
    const double t = parse_double(cells[0]);
    if (rows == 0) first_time = t;
    if (rows == 1) second_time = t;
    s.magnitude.push_back(parse_double(cells[1]));
    s.angle.push_back(parse_double(cells[2]));
    ++rows;
  }
  if (!have_meta) {
    s.t0 = first_time;
    s.sample_rate = (rows > 1) ? 1.0 / (second_time - first_time) : 0.0;
  }
  return s;
}

void write_spectrum(const std::filesystem::path& csv_path, const ImpedanceSpectrum& s) {
  if (s.freqs.size() != s.zdd.size() || s.freqs.size() != s.zqd.size())
    throw std::invalid_argument("write_spectrum: inconsistent arrays");
  std::string text = "freq_hz,zdd_re,zdd_im,zqd_re,zqd_im,provenance\n";
  const char* prov = provenance_name(s.provenance);
  for (std::size_t k = 0; k < s.freqs.size(); ++k) {
    text += format_double(s.freqs[k]);
    text += ',';
    text += format_double(s.zdd[k].real());
    text += ',';
    text += format_double(s.zdd[k].imag());
    text += ',';
    text += format_double(s.zqd[k].real());
    text += ',';
    text += format_double(s.zqd[k].imag());
    text += ',';
    text += prov;
    text += '\n';
  }
  write_text(csv_path, text);

  json meta;
  meta["kind"] = "spectrum";
  meta["provenance"] = prov;
  meta["lpf_applied"] = s.lpf_applied;
  json peaks = json::array();
  for (const SpectrumPeak& p : s.peaks) {
    json jp;
    jp["freq_hz"] = p.freq_hz;
    jp["prominence_db"] = p.prominence_db;
    jp["width_hz"] = p.width_hz;
    peaks.push_back(jp);
  }
  meta["peaks"] = peaks;
  write_json(sidecar_path(csv_path), meta);
}

ImpedanceSpectrum read_spectrum(const std::filesystem::path& csv_path) {
  ImpedanceSpectrum s;
  CsvReader reader(csv_path);
  std::string_view line;
  if (!reader.next(line) || line != "freq_hz,zdd_re,zdd_im,zqd_re,zqd_im,provenance")
    throw std::runtime_error("malformed spectrum header in '" + csv_path.string() + "'");
  bool have_prov = false;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const std::vector<std::string_view> cells = split_csv_line(line);
    if (cells.size() != 6)
      throw std::runtime_error("ragged spectrum row in '" + csv_path.string() + "'");
    s.freqs.push_back(parse_double(cells[0]));
    s.zdd.emplace_back(parse_double(cells[1]), parse_double(cells[2]));
    s.zqd.emplace_back(parse_double(cells[3]), parse_double(cells[4]));
    if (!have_prov) {
      s.provenance = provenance_from_name(std::string(cells[5]));
      have_prov = true;
    }
  }
  const std::filesystem::path side = sidecar_path(csv_path);
  if (std::filesystem::exists(side)) {
    const json meta = read_json(side);
    s.lpf_applied = meta.value("lpf_applied", false);
    if (meta.contains("peaks")) {
      for (const json& jp : meta["peaks"]) {
        SpectrumPeak p;
        p.freq_hz = jp.value("freq_hz", 0.0);
        p.prominence_db = jp.value("prominence_db", 0.0);
        p.width_hz = jp.value("width_hz", 0.0);
        s.peaks.push_back(p);
      }
    }
  }
  return s;
}

namespace {

TfChannel channel_from_name(const std::string& name) {
  for (const TfChannel c :
       {TfChannel::MagOverP, TfChannel::AngOverP, TfChannel::VdOverId,
        TfChannel::VqOverId, TfChannel::VdOverIq, TfChannel::VqOverIq})
    if (name == tf_channel_name(c)) return c;
  throw std::runtime_error("unknown transfer-function channel '" + name + "'");
}

}  // namespace

void write_models(const std::filesystem::path& json_path,
                  const std::vector<IdentifiedModel>& models) {
  json doc;
  doc["kind"] = "identified_models";
  json list = json::array();
  for (const IdentifiedModel& m : models) {
    json jm;
    jm["channel"] = tf_channel_name(m.channel);
    jm["order"] = m.order;
    jm["fit_percent"] = m.fit;
    jm["f_lo_hz"] = m.f_lo;
    jm["f_hi_hz"] = m.f_hi;
    jm["unstable"] = m.unstable;
    jm["num"] = m.tf.num;
    jm["den"] = m.tf.den;
    jm["omega_scale"] = m.tf.omega_scale;
    list.push_back(jm);
  }
  doc["models"] = list;
  write_json(json_path, doc);
}

std::vector<IdentifiedModel> read_models(const std::filesystem::path& json_path) {
  const json doc = read_json(json_path);
  std::vector<IdentifiedModel> out;
  for (const json& jm : doc.at("models")) {
    IdentifiedModel m;
    m.channel = channel_from_name(jm.at("channel").get<std::string>());
    m.order = jm.value("order", 0);
    m.fit = jm.value("fit_percent", 0.0);
    m.f_lo = jm.value("f_lo_hz", 0.0);
    m.f_hi = jm.value("f_hi_hz", 0.0);
    m.unstable = jm.value("unstable", false);
    m.tf.num = jm.at("num").get<std::vector<double>>();
    m.tf.den = jm.at("den").get<std::vector<double>>();
    m.tf.omega_scale = jm.value("omega_scale", 1.0);
    out.push_back(std::move(m));
  }
  return out;
}

std::string peaks_report_text(const ImpedanceSpectrum& s) {
  std::string text = "peaks (";
  text += provenance_name(s.provenance);
  text += s.lpf_applied ? ", filter included" : ", filter removed";
  text += ")\n";
  if (s.peaks.empty()) {
    text += "  none above the prominence floor\n";
    return text;
  }
  for (const SpectrumPeak& p : s.peaks) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "  %8.3f Hz  prominence %6.2f dB  width %7.3f Hz\n",
                  p.freq_hz, p.prominence_db, p.width_hz);
    text += buf;
  }
  return text;
}

void write_manifest(const std::filesystem::path& json_path, const RunManifest& m) {
  json doc;
  doc["kind"] = "run_manifest";
  doc["tool_version"] = m.tool_version;
  doc["scenario_path"] = m.scenario_path;
  doc["scenario_hash"] = m.scenario_hash;
  doc["perturbation"] = m.perturbation;
  doc["output_dir"] = m.output_dir;
  doc["artifacts"] = m.artifacts;
  write_json(json_path, doc);
}

RunManifest read_manifest(const std::filesystem::path& json_path) {
  const json doc = read_json(json_path);
  RunManifest m;
  m.tool_version = doc.value("tool_version", "");
  m.scenario_path = doc.value("scenario_path", "");
  m.scenario_hash = doc.value("scenario_hash", "");
  m.perturbation = doc.value("perturbation", "");
  m.output_dir = doc.value("output_dir", "");
  if (doc.contains("artifacts"))
    m.artifacts = doc["artifacts"].get<std::vector<std::string>>();
  return m;
}

std::vector<std::string> missing_artifacts(const RunManifest& m,
                                           const std::filesystem::path& base_dir) {
  std::vector<std::string> missing;
  for (const std::string& rel : m.artifacts)
    if (!std::filesystem::exists(base_dir / rel)) missing.push_back(rel);
  return missing;
}

}  // namespace subsweep
