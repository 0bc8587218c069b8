#pragma once

#include <span>

#include "seilab/common.hpp"

namespace seilab {

/// Complex FFT of a fixed size, backed by FFTW. Plans are created once per
/// size (FFTW_ESTIMATE | FFTW_UNALIGNED) so execution is deterministic and
/// safe to call from multiple threads with distinct buffers.
class Fft {
 public:
  explicit Fft(int n);

  int size() const { return n_; }

  /// out[k] = sum_l in[l] * exp(-2*pi*i*k*l/n)   (no scaling)
  void forward(const cplx* in, cplx* out) const;
  /// out[l] = (1/n) * sum_k in[k] * exp(+2*pi*i*k*l/n)
  void inverse(const cplx* in, cplx* out) const;

  cvec forward(std::span<const cplx> in) const;
  cvec inverse(std::span<const cplx> in) const;

 private:
  int n_;
  void* fwd_;  // fftw_plan
  void* inv_;
};

/// Shared plan cache; cheap to call repeatedly.
const Fft& fft_for(int n);

}  // namespace seilab
