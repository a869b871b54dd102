#include "subsweep/probe.hpp"

#include <cmath>
#include <stdexcept>

namespace subsweep {

namespace {

constexpr double kTau = 2.0 * 3.141592653589793238462643383279502884;

// Raised-cosine on/off envelope: 0 at both ends of the active interval with
// zero slope, 1 in the interior. Ramp length adapts to the sweep so the
// lowest frequency still fits inside the taper.
double chirp_envelope(const SignalSpec& s, double t) {
  if (t < s.t_on || t > s.t_off) return 0.0;
  const double span = s.t_off - s.t_on;
  const double ramp = std::min(0.5 / s.f_start, 0.1 * span);
  const double into = t - s.t_on;
  const double from_end = s.t_off - t;
  double w = 1.0;
  if (into < ramp) w *= 0.5 * (1.0 - std::cos(kTau * 0.5 * into / ramp));
  if (from_end < ramp) w *= 0.5 * (1.0 - std::cos(kTau * 0.5 * from_end / ramp));
  return w;
}

}  // namespace

double chirp_instantaneous_freq(const SignalSpec& spec, double t) {
  if (spec.kind != SignalKind::Chirp) return 0.0;
  if (t < spec.t_on || t > spec.t_off) return 0.0;
  const double frac = (t - spec.t_on) / (spec.t_off - spec.t_on);
  return spec.f_start + (spec.f_end - spec.f_start) * frac;
}

double evaluate_signal(const SignalSpec& spec, double t) {
  if (!std::isfinite(t)) throw std::invalid_argument("evaluate_signal: t must be finite");
  switch (spec.kind) {
    case SignalKind::Zero:
      return 0.0;
    case SignalKind::Step:
      return t >= spec.t_on ? spec.amplitude : 0.0;
    case SignalKind::Tone:
      return t >= spec.t_on ? spec.amplitude * std::sin(kTau * spec.f_p * (t - spec.t_on))
                            : 0.0;
    case SignalKind::Chirp: {
      if (t < spec.t_on || t > spec.t_off) return 0.0;
      const double x = t - spec.t_on;
      const double rate = (spec.f_end - spec.f_start) / (spec.t_off - spec.t_on);
      const double phase = spec.f_start * x + 0.5 * rate * x * x;  // cycles
      return spec.amplitude * chirp_envelope(spec, t) * std::sin(kTau * phase);
    }
  }
  throw std::logic_error("unreachable signal kind");
}

double probe_resistance(const ProbeSpec& spec, double t) {
  return spec.r0 * (1.0 + evaluate_signal(spec.signal, t));
}

double injected_current(const InjectorSpec& spec, double theta_grid, double t) {
  if (!std::isfinite(t)) throw std::invalid_argument("injected_current: t must be finite");
  if (t < spec.t_on) return 0.0;
  return spec.axis == InjectorAxis::D ? spec.amplitude * std::cos(theta_grid)
                                      : -spec.amplitude * std::sin(theta_grid);
}

}  // namespace subsweep
