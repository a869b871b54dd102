#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "subsweep/rational.hpp"  // cplx

// Self-contained Bode SVG: a magnitude (dB) panel over a phase (deg) panel,
// shared logarithmic frequency axis, multiple traces with a legend. No
// external plotting dependencies; output bytes are deterministic.

namespace subsweep {

struct BodeTrace {
  std::string label;
  std::vector<double> freqs;  // Hz, positive, increasing
  std::vector<cplx> values;
  bool dashed = false;
  std::string color;  // CSS color; empty selects from the default palette
};

void write_bode_svg(const std::filesystem::path& svg_path, const std::string& title,
                    const std::vector<BodeTrace>& traces);

}  // namespace subsweep
