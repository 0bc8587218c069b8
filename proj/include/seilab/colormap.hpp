#pragma once

#include <array>

namespace seilab::features {

struct Rgb {
  double r, g, b;
};

/// Fixed 256-entry perceptual colormap ("cubehelix-v1"). Entry 0 is black,
/// entry 255 is white, and luminance increases monotonically along the
/// ramp, so intensity ordering survives the RGB mapping.
const std::array<Rgb, 256>& colormap_table();

inline const char* colormap_id() { return "cubehelix-v1"; }

}  // namespace seilab::features
