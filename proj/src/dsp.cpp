#include "subsweep/dsp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace subsweep {

WaveformRecord slice(const WaveformRecord& rec, double t_from, double t_to) {
  WaveformRecord out;
  out.channel = rec.channel;
  out.sample_rate = rec.sample_rate;
  if (rec.samples.empty() || !(t_to > t_from)) {
    out.t0 = rec.t0;
    return out;
  }
  const double n0f = std::ceil((t_from - rec.t0) * rec.sample_rate - 1e-9);
  const double n1f = std::floor((t_to - rec.t0) * rec.sample_rate + 1e-9);
  const std::size_t n0 = static_cast<std::size_t>(std::max(0.0, n0f));
  const std::size_t n1 =
      std::min(rec.samples.size(), static_cast<std::size_t>(std::max(0.0, n1f)));
  out.t0 = rec.time_at(n0);
  if (n1 > n0)
    out.samples.assign(rec.samples.begin() + static_cast<std::ptrdiff_t>(n0),
                       rec.samples.begin() + static_cast<std::ptrdiff_t>(n1));
  return out;
}

namespace {

// Integrals over [a, b] (0 <= a <= b <= 5) of the six degree-5 Lagrange basis
// polynomials on nodes {0, 1, 2, 3, 4, 5}.
std::array<double, 6> lagrange6_integrals(double a, double b) {
  std::array<double, 6> out{};
  for (int p = 0; p < 6; ++p) {
    std::array<double, 7> poly{};
    poly[0] = 1.0;
    int deg = 0;
    double denom = 1.0;
    for (int q = 0; q < 6; ++q) {
      if (q == p) continue;
      for (int k = deg + 1; k >= 1; --k) poly[k] = poly[k - 1] - q * poly[k];
      poly[0] *= -q;
      ++deg;
      denom *= (p - q);
    }
    double sum = 0.0;
    double pa = a, pb = b;
    for (int k = 0; k <= deg; ++k) {
      sum += poly[static_cast<std::size_t>(k)] * (pb - pa) / (k + 1);
      pa *= a;
      pb *= b;
    }
    out[static_cast<std::size_t>(p)] = sum / denom;
  }
  return out;
}

}  // namespace

std::vector<double> design_window_integral_fir(double rate, double window_s,
                                               double null_hz) {
  if (!(rate > 0.0) || !(window_s > 0.0))
    throw std::invalid_argument("fir design: rate and window must be positive");
  const double span = window_s * rate;  // samples
  if (span < 8.0)
    throw std::invalid_argument("fir design: window too short for the sample rate");
  int whole = static_cast<int>(std::floor(span + 1e-9));
  double frac = span - whole;
  if (frac < 1e-9) frac = 0.0;
  const int len = whole + (frac > 0.0 ? 4 : 3);

  std::vector<double> taps(static_cast<std::size_t>(len), 0.0);
  auto add_interval = [&](double a, double b) {
    int m0 = std::clamp(static_cast<int>(std::floor(a)) - 2, 0, len - 6);
    const std::array<double, 6> w = lagrange6_integrals(a - m0, b - m0);
    for (int p = 0; p < 6; ++p) taps[static_cast<std::size_t>(m0 + p)] += w[p];
  };
  for (int j = 0; j < whole; ++j) add_interval(j, j + 1.0);
  if (frac > 0.0) add_interval(whole, whole + frac);
  for (double& c : taps) c /= span;

  // Exact-constraint trim: unit DC gain, and a hard zero at null_hz.
  const int rows = null_hz > 0.0 ? 3 : 1;
  Eigen::MatrixXd a(rows, len);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
  b(0) = 1.0;
  for (int j = 0; j < len; ++j) a(0, j) = 1.0;
  if (rows == 3) {
    const double om = 2.0 * kPi * null_hz / rate;
    for (int j = 0; j < len; ++j) {
      a(1, j) = std::cos(om * j);
      a(2, j) = -std::sin(om * j);
    }
  }
  Eigen::Map<Eigen::VectorXd> c(taps.data(), len);
  Eigen::VectorXd resid = a * c - b;
  c -= a.transpose() * (a * a.transpose()).ldlt().solve(resid);
  return taps;
}

std::vector<double> fir_filter_valid(const std::vector<double>& x,
                                     const std::vector<double>& taps) {
  if (taps.empty() || x.size() < taps.size()) return {};
  const std::size_t len = taps.size();
  std::vector<double> y(x.size() - len + 1);
  for (std::size_t n = 0; n < y.size(); ++n) {
    double acc = 0.0;
    const double* xe = x.data() + n + len - 1;
    for (std::size_t i = 0; i < len; ++i) acc += taps[i] * xe[-static_cast<std::ptrdiff_t>(i)];
    y[n] = acc;
  }
  return y;
}

cplx moving_average_response(const LpfSpec& lpf, double f_hz) {
  if (!(lpf.window > 0.0))
    throw std::invalid_argument("moving_average_response: window must be positive");
  if (f_hz < 0.0) throw std::invalid_argument("moving_average_response: f must be >= 0");
  if (f_hz == 0.0) return cplx(1.0, 0.0);
  const double x = 2.0 * kPi * f_hz * lpf.window;
  const cplx jx(0.0, x);
  return (1.0 - std::exp(-jx)) / jx;
}

void unwrap_angles(std::vector<double>& angles) {
  constexpr double tau = 2.0 * kPi;
  for (std::size_t k = 1; k < angles.size(); ++k) {
    const double prev = angles[k - 1];
    angles[k] += tau * std::round((prev - angles[k]) / tau);
  }
}

PhasorSeries extract_dq(const WaveformRecord& record, double f0, double theta0,
                        const LpfSpec& lpf) {
  if (record.samples.empty()) throw std::invalid_argument("extract_dq: empty record");
  if (!(record.sample_rate >= 20.0 * f0))
    throw std::invalid_argument("extract_dq: sample rate below 20x nominal frequency");
  if (!std::isfinite(theta0)) throw std::invalid_argument("extract_dq: theta0 not finite");

  const double rate = record.sample_rate;
  const double w0 = 2.0 * kPi * f0;
  const std::vector<double> taps = design_window_integral_fir(rate, lpf.window, 2.0 * f0);
  if (record.samples.size() < taps.size())
    throw std::invalid_argument("extract_dq: record shorter than the filter window");

  const std::size_t n = record.samples.size();
  std::vector<double> draw(n), qraw(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double ph = w0 * record.time_at(k) + theta0;
    const double v2 = 2.0 * record.samples[k];
    draw[k] = v2 * std::cos(ph);
    qraw[k] = -v2 * std::sin(ph);
  }
  const std::vector<double> vd = fir_filter_valid(draw, taps);
  const std::vector<double> vq = fir_filter_valid(qraw, taps);

  const int decim = std::max(1, static_cast<int>(std::lround(rate / kPhasorRate)));
  PhasorSeries out;
  out.sample_rate = rate / decim;
  out.t0 = record.time_at(taps.size() - 1);
  out.theta0 = theta0;
  const std::size_t m = (vd.size() + decim - 1) / static_cast<std::size_t>(decim);
  out.magnitude.reserve(m);
  out.angle.reserve(m);
  for (std::size_t k = 0; k < vd.size(); k += static_cast<std::size_t>(decim)) {
    out.magnitude.push_back(std::hypot(vd[k], vq[k]));
    out.angle.push_back(std::atan2(vq[k], vd[k]));
  }
  unwrap_angles(out.angle);
  for (std::size_t k = 0; k < out.magnitude.size(); ++k) {
    if (out.time_at(k) - record.t0 < lpf.window) out.warmup = k + 1;
    else break;
  }
  return out;
}

std::size_t exact_cycle_samples(double rate, double f0, std::size_t n_max) {
  if (!(rate > 0.0) || !(f0 > 0.0)) return 0;
  const double per_cycle = rate / f0;
  // Find the smallest cycle group whose sample count is integral.
  for (int g = 1; g <= 1000; ++g) {
    const double samples = g * per_cycle;
    const double rounded = std::round(samples);
    if (std::abs(samples - rounded) < 1e-9 * samples) {
      const std::size_t group = static_cast<std::size_t>(rounded);
      if (group == 0 || group > n_max) return 0;
      return (n_max / group) * group;
    }
  }
  return 0;
}

double reference_angle(const WaveformRecord& record, double f0, double window_s,
                       double onset) {
  if (record.samples.empty()) throw std::invalid_argument("reference_angle: empty record");
  if (!(window_s > 0.0)) throw std::invalid_argument("reference_angle: window must be positive");
  if (record.t0 + window_s > onset)
    throw std::invalid_argument("reference_angle: window overlaps perturbation onset");
  const double rate = record.sample_rate;
  std::size_t n_window = static_cast<std::size_t>(std::lround(window_s * rate));
  n_window = std::min(n_window, record.samples.size());
  std::size_t n_use = exact_cycle_samples(rate, f0, n_window);
  if (n_use == 0) n_use = n_window;  // irrational ratio: accept slight leakage
  if (n_use < static_cast<std::size_t>(rate / f0))
    throw std::invalid_argument("reference_angle: window shorter than one cycle");

  const double w0 = 2.0 * kPi * f0;
  double a = 0.0, b = 0.0;
  for (std::size_t k = 0; k < n_use; ++k) {
    const double ph = w0 * record.time_at(k);
    a += record.samples[k] * std::cos(ph);
    b += record.samples[k] * -std::sin(ph);
  }
  const double amplitude = 2.0 * std::hypot(a, b) / static_cast<double>(n_use);
  if (amplitude < 0.01)
    throw std::invalid_argument("reference_angle: no fundamental detected");
  return std::atan2(b, a);
}

namespace {

// Pre-perturbation sample indices shared by the deviation extractors.
std::vector<std::size_t> pre_region_indices(const PhasorSeries& series,
                                            double onset_time, const LpfSpec& lpf) {
  if (series.magnitude.empty())
    throw std::invalid_argument("deviations: empty phasor series");
  const double guard = std::max(2.0 * lpf.window, 0.02);
  const double pre_from = series.t0 + guard;
  const double pre_to = onset_time - guard;
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < series.magnitude.size(); ++k) {
    const double t = series.time_at(k);
    if (t < pre_from || t > pre_to) continue;
    idx.push_back(k);
  }
  if (static_cast<double>(idx.size()) / series.sample_rate < 0.5)
    throw std::invalid_argument("deviations: insufficient pre-perturbation data");
  return idx;
}

std::size_t onset_sample(const PhasorSeries& series, double onset_time) {
  for (std::size_t k = 0; k < series.magnitude.size(); ++k)
    if (series.time_at(k) >= onset_time) return k;
  return series.magnitude.size();
}

}  // namespace

Deviations deviations(const PhasorSeries& series, double onset_time,
                      const LpfSpec& lpf) {
  const std::vector<std::size_t> pre = pre_region_indices(series, onset_time, lpf);
  double sum_m = 0.0, sum_a = 0.0;
  for (std::size_t k : pre) {
    sum_m += series.magnitude[k];
    sum_a += series.angle[k];
  }
  Deviations out;
  out.v0 = sum_m / static_cast<double>(pre.size());
  out.a0 = sum_a / static_cast<double>(pre.size());
  out.dvhat.resize(series.magnitude.size());
  out.dtheta.resize(series.angle.size());
  for (std::size_t k = 0; k < series.magnitude.size(); ++k) {
    out.dvhat[k] = series.magnitude[k] - out.v0;
    out.dtheta[k] = series.angle[k] - out.a0;
  }
  out.onset_index = onset_sample(series, onset_time);
  return out;
}

RectDeviations deviations_rect(const PhasorSeries& series, double onset_time,
                               const LpfSpec& lpf) {
  const std::vector<std::size_t> pre = pre_region_indices(series, onset_time, lpf);
  const std::size_t n = series.magnitude.size();
  std::vector<double> vd(n), vq(n);
  for (std::size_t k = 0; k < n; ++k) {
    vd[k] = series.magnitude[k] * std::cos(series.angle[k]);
    vq[k] = series.magnitude[k] * std::sin(series.angle[k]);
  }
  double sum_d = 0.0, sum_q = 0.0;
  for (std::size_t k : pre) {
    sum_d += vd[k];
    sum_q += vq[k];
  }
  const double d0 = sum_d / static_cast<double>(pre.size());
  const double q0 = sum_q / static_cast<double>(pre.size());
  RectDeviations out;
  out.v0 = std::hypot(d0, q0);
  out.a0 = std::atan2(q0, d0);
  out.dvd.resize(n);
  out.dvq.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    out.dvd[k] = vd[k] - d0;
    out.dvq[k] = vq[k] - q0;
  }
  out.onset_index = onset_sample(series, onset_time);
  return out;
}

FilteredSeries filter_decimate(const WaveformRecord& record, double f0,
                               const LpfSpec& lpf) {
  if (record.samples.empty())
    throw std::invalid_argument("filter_decimate: empty record");
  const double rate = record.sample_rate;
  const std::vector<double> taps = design_window_integral_fir(rate, lpf.window, 2.0 * f0);
  if (record.samples.size() < taps.size())
    throw std::invalid_argument("filter_decimate: record shorter than the filter window");
  const std::vector<double> filtered = fir_filter_valid(record.samples, taps);
  const int decim = std::max(1, static_cast<int>(std::lround(rate / kPhasorRate)));
  FilteredSeries out;
  out.sample_rate = rate / decim;
  out.t0 = record.time_at(taps.size() - 1);
  out.values.reserve((filtered.size() + decim - 1) / static_cast<std::size_t>(decim));
  for (std::size_t k = 0; k < filtered.size(); k += static_cast<std::size_t>(decim))
    out.values.push_back(filtered[k]);
  return out;
}

}  // namespace subsweep
