#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace subsweep {

// Uniformly sampled point-on-wave channel, pu.
struct WaveformRecord {
  std::string channel;        // e.g. "v:Bus3" or "i:probe"
  double sample_rate = 0.0;   // Hz
  double t0 = 0.0;            // s, time of samples[0]
  std::vector<double> samples;

  double time_at(std::size_t n) const { return t0 + static_cast<double>(n) / sample_rate; }
  double duration() const {
    return samples.empty() ? 0.0 : static_cast<double>(samples.size()) / sample_rate;
  }
};

// Sub-range copy covering [t_from, t_to); bounds are clamped to the record.
WaveformRecord slice(const WaveformRecord& rec, double t_from, double t_to);

}  // namespace subsweep
