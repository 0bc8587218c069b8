#pragma once

#include <vector>

#include "seilab/colormap.hpp"
#include "seilab/pipeline.hpp"

namespace seilab::features {

/// Unit-norm circular Gaussian analysis window for the Gabor lattice.
struct GaborWindowSpec {
  double sigma = 16.0;  // samples
};

/// Patch grid over the 320x320 surface; every patch must hold at least 15
/// elements. The 16x16 default gives 20x20-element patches (N_P = 256).
struct PatchGridSpec {
  int rows = 16;
  int cols = 16;
};

/// Gabor coefficients on the critically-indexed lattice: hop 1, 320
/// frequency bins. Row index = bin, column index = time shift.
struct GaborCoefficients {
  cvec values;  // 320*320, row-major [bin][time]
  cplx at(int bin, int time) const {
    return values[static_cast<size_t>(bin) * kPreambleLen +
                  static_cast<size_t>(time)];
  }
};

/// Normalized squared-magnitude time-frequency surface; max value is 1 for
/// any nonzero input.
struct GaborSurface {
  std::vector<double> values;  // 320*320, row-major [bin][time]
  double at(int bin, int time) const {
    return values[static_cast<size_t>(bin) * kPreambleLen +
                  static_cast<size_t>(time)];
  }
};

/// Per-patch (variance, skewness, excess kurtosis) triples in row-major
/// patch order, with the whole-surface triple appended last.
struct Fingerprint {
  std::vector<double> stats;  // 3 * (patch_count + 1)
  int patch_count = 0;
};

/// Rows (i, q, lambda, theta) of the 320 time-domain samples.
struct TimeTensor {
  std::vector<double> rows;  // 4*320, row-major
  double at(int row, int n) const {
    return rows[static_cast<size_t>(row) * kPreambleLen +
                static_cast<size_t>(n)];
  }
};

/// Rows (I, Q, Lambda, Theta) of the unnormalized 320-point DFT.
struct FreqTensor {
  std::vector<double> rows;  // 4*320, row-major
  double at(int row, int n) const {
    return rows[static_cast<size_t>(row) * kPreambleLen +
                static_cast<size_t>(n)];
  }
};

/// [320 x 320 x 3] RGB rendering of the surface, channel-last.
struct GaborImage {
  std::vector<double> pixels;  // 320*320*3
};

/// Analysis coefficients; invertible with reconstruct() to ~1e-14.
GaborCoefficients dgt(std::span<const cplx> p,
                      const GaborWindowSpec& window = {});

/// Synthesis with the canonical dual window (which, at hop 1, is the
/// analysis window itself up to the frame constant).
cvec reconstruct(const GaborCoefficients& c,
                 const GaborWindowSpec& window = {});

/// |dgt|^2 normalized so the maximum is exactly 1.
GaborSurface gabor_surface(std::span<const cplx> p,
                           const GaborWindowSpec& window = {});

Fingerprint fingerprint(const GaborSurface& surface,
                        const PatchGridSpec& grid = {});

/// dgt -> surface -> patch statistics in one call.
Fingerprint gabor_fingerprint(std::span<const cplx> p,
                              const GaborWindowSpec& window = {},
                              const PatchGridSpec& grid = {});

TimeTensor time_tensor(std::span<const cplx> p);
FreqTensor freq_tensor(std::span<const cplx> p);

GaborImage gabor_image(const GaborSurface& surface);

/// Affine maps that put tensor rows into [0,1] for the sigmoid networks.
/// Amplitude-like rows of a unit-energy preamble are scaled around 0.5 by
/// sqrt(320)/6 (peak factor of the per-sample scale); angles map their
/// (-pi, pi] range onto the unit interval. Frequency rows use a 1/12
/// slope for the +/-6 span of 320-point DFT coefficients.
namespace scaling {
double scale_amp(double v);
double unscale_amp(double v);
double scale_angle(double v);
double scale_freq(double v);
}  // namespace scaling

/// TimeTensor with all rows mapped into [0,1], flattened to length 1280.
std::vector<double> scaled_time_tensor(std::span<const cplx> p);
/// FreqTensor mapped into [0,1], flattened to length 1280.
std::vector<double> scaled_freq_tensor(std::span<const cplx> p);
/// Rebuilds a complex sequence from the first two rows (i, q) of a scaled
/// time tensor, undoing the affine map. No normalization is applied.
cvec complex_from_scaled_iq(std::span<const double> scaled_rows);

/// Euclidean distance between fingerprint vectors.
double fingerprint_distance(const Fingerprint& a, const Fingerprint& b);

}  // namespace seilab::features
