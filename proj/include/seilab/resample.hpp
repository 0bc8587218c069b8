#pragma once

#include <span>
#include <vector>

#include "seilab/common.hpp"

namespace seilab {

/// Kaiser-windowed sinc lowpass, odd length, unit DC gain.
std::vector<double> design_kaiser_lowpass(double cutoff_norm, double atten_db,
                                          double transition_norm);

/// Linear-phase FIR with the group delay removed; edges are zero-padded.
cvec fir_filter_centered(std::span<const cplx> x,
                         std::span<const double> taps);

/// Anti-alias filtered decimation by an integer factor. Output length is
/// ceil(n / factor); factor 1 is the identity.
cvec decimate_int(std::span<const cplx> x, int factor);

/// Zero-stuff + interpolation filter, gain compensated. Factor 1 is the
/// identity.
cvec upsample_int(std::span<const cplx> x, int factor);

/// Integer-ratio resampling between the two rates (one of them must divide
/// the other). Equal rates return the input unchanged.
cvec resample(std::span<const cplx> x, double from_hz, double to_hz);

}  // namespace seilab
