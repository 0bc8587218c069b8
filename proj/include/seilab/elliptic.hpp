#pragma once

#include <span>
#include <vector>

#include "seilab/common.hpp"

namespace seilab::pipeline {

/// Band-filtering front end of the receive chain. Values default to the
/// collection setup every experiment uses.
struct FilterSpec {
  int order = 4;
  double passband_ripple_db = 0.5;
  double stopband_atten_db = 20.0;
  double cutoff_hz = 8.865e6;

  void validate(double sample_rate_hz) const;
};

/// One second-order section, direct form coefficients (b0 b1 b2 / 1 a1 a2).
struct Biquad {
  double b0, b1, b2;
  double a1, a2;
};

struct IirFilter {
  std::vector<Biquad> sections;
  double gain = 1.0;

  /// Causal cascade evaluation.
  cvec apply(std::span<const cplx> x) const;
  /// |H(e^{j*2*pi*f/fs})|.
  double magnitude_at(double freq_hz, double sample_rate_hz) const;
};

/// Elliptic low-pass via Jacobi elliptic functions and the bilinear
/// transform; the passband edge lands exactly on spec.cutoff_hz.
IirFilter design_elliptic_filter(const FilterSpec& spec,
                                 double sample_rate_hz);

}  // namespace seilab::pipeline
