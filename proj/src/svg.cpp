#include "subsweep/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "subsweep/dsp.hpp"  // unwrap_angles

namespace subsweep {

namespace {

constexpr double kWidth = 860.0, kPanelHeight = 280.0, kGap = 46.0;
constexpr double kLeft = 64.0, kRight = 24.0, kTop = 40.0, kBottom = 46.0;

const char* kPalette[6] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                           "#ff7f0e", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string esc(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axis {
  double lo = 0.0, hi = 1.0;  // data range
  double p0 = 0.0, p1 = 1.0;  // pixel range

  double at(double v) const { return p0 + (v - lo) / (hi - lo) * (p1 - p0); }
};

// Round limits outward to a tidy step; returns the tick step.
double tidy(double& lo, double& hi) {
  const double span = std::max(hi - lo, 1e-12);
  const double raw = span / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (const double m : {1.0, 2.0, 5.0, 10.0})
    if (mag * m >= raw) {
      step = mag * m;
      break;
    }
  lo = std::floor(lo / step) * step;
  hi = std::ceil(hi / step) * step;
  if (hi == lo) hi = lo + step;
  return step;
}

void panel_frame(std::string& s, const Axis& x, const Axis& y, double step,
                 const std::string& y_label, bool freq_labels) {
  // Horizontal grid and y tick labels.
  for (double v = y.lo; v <= y.hi + 1e-9; v += step) {
    const double py = y.at(v);
    s += "<line x1='" + num(x.p0) + "' y1='" + num(py) + "' x2='" + num(x.p1) +
         "' y2='" + num(py) + "' stroke='#dddddd' stroke-width='1'/>\n";
    char lbl[32];
    std::snprintf(lbl, sizeof(lbl), "%g", v);
    s += "<text x='" + num(x.p0 - 6.0) + "' y='" + num(py + 3.5) +
         "' font-size='11' text-anchor='end' fill='#444444'>" + lbl + "</text>\n";
  }
  // Vertical grid at decades and 2/5 multiples.
  const double f_lo = std::pow(10.0, x.lo), f_hi = std::pow(10.0, x.hi);
  for (int dec = static_cast<int>(std::floor(x.lo)) - 1;
       dec <= static_cast<int>(std::ceil(x.hi)); ++dec) {
    for (const double m : {1.0, 2.0, 5.0}) {
      const double f = m * std::pow(10.0, dec);
      if (f < f_lo * 0.999 || f > f_hi * 1.001) continue;
      const double px = x.at(std::log10(f));
      const bool major = (m == 1.0);
      s += "<line x1='" + num(px) + "' y1='" + num(y.p1) + "' x2='" + num(px) +
           "' y2='" + num(y.p0) + "' stroke='" + (major ? "#cccccc" : "#eeeeee") +
           "' stroke-width='1'/>\n";
      if (freq_labels) {
        char lbl[32];
        std::snprintf(lbl, sizeof(lbl), "%g", f);
        s += "<text x='" + num(px) + "' y='" + num(std::max(y.p0, y.p1) + 16.0) +
             "' font-size='11' text-anchor='middle' fill='#444444'>" + lbl +
             "</text>\n";
      }
    }
  }
  // Box.
  s += "<rect x='" + num(x.p0) + "' y='" + num(std::min(y.p0, y.p1)) + "' width='" +
       num(x.p1 - x.p0) + "' height='" + num(std::abs(y.p1 - y.p0)) +
       "' fill='none' stroke='#333333' stroke-width='1'/>\n";
  // Axis label (rotated).
  const double cy = 0.5 * (y.p0 + y.p1);
  s += "<text x='" + num(kLeft - 44.0) + "' y='" + num(cy) +
       "' font-size='12' text-anchor='middle' fill='#222222' transform='rotate(-90 " +
       num(kLeft - 44.0) + " " + num(cy) + ")'>" + esc(y_label) + "</text>\n";
}

void polyline(std::string& s, const Axis& x, const Axis& y,
              const std::vector<double>& xs, const std::vector<double>& ys,
              const std::string& color, bool dashed) {
  s += "<polyline fill='none' stroke='" + color + "' stroke-width='1.8'";
  if (dashed) s += " stroke-dasharray='7 4'";
  s += " points='";
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double vy = std::clamp(ys[k], std::min(y.lo, y.hi), std::max(y.lo, y.hi));
    s += num(x.at(xs[k]));
    s += ',';
    s += num(y.at(vy));
    s += ' ';
  }
  s += "'/>\n";
}

}  // namespace

void write_bode_svg(const std::filesystem::path& svg_path, const std::string& title,
                    const std::vector<BodeTrace>& traces) {
  if (traces.empty()) throw std::invalid_argument("write_bode_svg: no traces");
  for (const BodeTrace& t : traces) {
    if (t.freqs.size() != t.values.size() || t.freqs.size() < 2)
      throw std::invalid_argument("write_bode_svg: trace '" + t.label +
                                  "' malformed");
    for (const double f : t.freqs)
      if (!(f > 0.0))
        throw std::invalid_argument("write_bode_svg: frequencies must be positive");
  }

  // Assemble per-trace dB magnitude and unwrapped phase.
  struct Prepared {
    std::vector<double> lf, mag, phase;
    std::string color;
    bool dashed;
    std::string label;
  };
  std::vector<Prepared> prep;
  double lf_lo = 1e300, lf_hi = -1e300, m_lo = 1e300, m_hi = -1e300;
  double p_lo = 1e300, p_hi = -1e300;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    Prepared p;
    p.label = traces[i].label;
    p.dashed = traces[i].dashed;
    p.color = traces[i].color.empty() ? kPalette[i % 6] : traces[i].color;
    std::vector<double> ph;
    for (std::size_t k = 0; k < traces[i].freqs.size(); ++k) {
      p.lf.push_back(std::log10(traces[i].freqs[k]));
      p.mag.push_back(20.0 * std::log10(std::max(std::abs(traces[i].values[k]), 1e-300)));
      ph.push_back(std::arg(traces[i].values[k]));
    }
    unwrap_angles(ph);
    for (const double v : ph) p.phase.push_back(v * 180.0 / kPi);
    lf_lo = std::min(lf_lo, p.lf.front());
    lf_hi = std::max(lf_hi, p.lf.back());
    for (const double v : p.mag) {
      m_lo = std::min(m_lo, v);
      m_hi = std::max(m_hi, v);
    }
    for (const double v : p.phase) {
      p_lo = std::min(p_lo, v);
      p_hi = std::max(p_hi, v);
    }
    prep.push_back(std::move(p));
  }
  const double mag_step = tidy(m_lo, m_hi);
  const double ph_step = tidy(p_lo, p_hi);

  const double total_h = kTop + 2 * kPanelHeight + kGap + kBottom;
  Axis xm{lf_lo, lf_hi, kLeft, kWidth - kRight};
  Axis ym{m_lo, m_hi, kTop + kPanelHeight, kTop};  // inverted pixel direction
  Axis yp{p_lo, p_hi, kTop + kPanelHeight + kGap + kPanelHeight,
          kTop + kPanelHeight + kGap};

  std::string s;
  s += "<svg xmlns='http://www.w3.org/2000/svg' width='" + num(kWidth) +
       "' height='" + num(total_h) + "' viewBox='0 0 " + num(kWidth) + " " +
       num(total_h) + "'>\n";
  s += "<rect width='100%' height='100%' fill='white'/>\n";
  s += "<text x='" + num(kWidth / 2.0) + "' y='24' font-size='15' text-anchor='middle' "
       "font-family='sans-serif' fill='#111111'>" + esc(title) + "</text>\n";
  s += "<g font-family='sans-serif'>\n";

  panel_frame(s, xm, ym, mag_step, "magnitude (dB)", false);
  panel_frame(s, xm, yp, ph_step, "phase (deg)", true);
  s += "<text x='" + num((kLeft + kWidth - kRight) / 2.0) + "' y='" +
       num(total_h - 12.0) +
       "' font-size='12' text-anchor='middle' fill='#222222'>frequency (Hz)</text>\n";

  for (const Prepared& p : prep) {
    polyline(s, xm, ym, p.lf, p.mag, p.color, p.dashed);
    polyline(s, xm, yp, p.lf, p.phase, p.color, p.dashed);
  }

  // Legend in the top panel's upper-right corner.
  const double lx = kWidth - kRight - 210.0;
  double ly = kTop + 10.0;
  s += "<rect x='" + num(lx - 8.0) + "' y='" + num(ly - 4.0) +
       "' width='210' height='" + num(prep.size() * 18.0 + 8.0) +
       "' fill='white' fill-opacity='0.85' stroke='#999999' stroke-width='0.5'/>\n";
  for (const Prepared& p : prep) {
    s += "<line x1='" + num(lx) + "' y1='" + num(ly + 6.0) + "' x2='" +
         num(lx + 26.0) + "' y2='" + num(ly + 6.0) + "' stroke='" + p.color +
         "' stroke-width='2'";
    if (p.dashed) s += " stroke-dasharray='7 4'";
    s += "/>\n";
    s += "<text x='" + num(lx + 32.0) + "' y='" + num(ly + 10.0) +
         "' font-size='11' fill='#222222'>" + esc(p.label) + "</text>\n";
    ly += 18.0;
  }

  s += "</g>\n</svg>\n";

  std::ofstream out(svg_path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot open '" + svg_path.string() + "' for writing");
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!out) throw std::runtime_error("write failed for '" + svg_path.string() + "'");
}

}  // namespace subsweep
