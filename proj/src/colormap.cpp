#include "seilab/colormap.hpp"

#include <algorithm>
#include <cmath>

namespace seilab::features {

namespace {

// cubehelix with start 0.5, rotations -1.5, hue 0.9, gamma 1. The hue
// amplitude is low enough that no channel leaves [0,1], keeping the table
// exactly reproducible from this closed form.
std::array<Rgb, 256> build_table() {
  std::array<Rgb, 256> table;
  constexpr double start = 0.5, rotations = -1.5, hue = 0.9;
  for (int i = 0; i < 256; ++i) {
    const double t = static_cast<double>(i) / 255.0;
    const double angle = 2.0 * M_PI * (start / 3.0 + rotations * t);
    const double amp = hue * t * (1.0 - t) / 2.0;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    Rgb v;
    v.r = t + amp * (-0.14861 * c + 1.78277 * s);
    v.g = t + amp * (-0.29227 * c - 0.90649 * s);
    v.b = t + amp * (1.97294 * c);
    v.r = std::clamp(v.r, 0.0, 1.0);
    v.g = std::clamp(v.g, 0.0, 1.0);
    v.b = std::clamp(v.b, 0.0, 1.0);
    table[static_cast<size_t>(i)] = v;
  }
  return table;
}

}  // namespace

const std::array<Rgb, 256>& colormap_table() {
  static const std::array<Rgb, 256> table = build_table();
  return table;
}

}  // namespace seilab::features
