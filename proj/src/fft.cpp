#include "seilab/fft.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>

namespace seilab {

namespace {
std::mutex g_plan_mutex;  // fftw plan creation is not thread-safe
}

Fft::Fft(int n) : n_(n) {
  require(n > 0, "fft size must be positive");
  std::lock_guard<std::mutex> lock(g_plan_mutex);
  // UNALIGNED keeps fftw from dispatching on buffer alignment, so a plan
  // executes the same code path (and rounding) for every caller's buffers.
  fftw_complex* tmp = fftw_alloc_complex(static_cast<size_t>(n));
  fwd_ = fftw_plan_dft_1d(n, tmp, tmp, FFTW_FORWARD,
                          FFTW_ESTIMATE | FFTW_UNALIGNED);
  inv_ = fftw_plan_dft_1d(n, tmp, tmp, FFTW_BACKWARD,
                          FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(tmp);
}

void Fft::forward(const cplx* in, cplx* out) const {
  fftw_execute_dft(static_cast<fftw_plan>(fwd_),
                   reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in)),
                   reinterpret_cast<fftw_complex*>(out));
}

void Fft::inverse(const cplx* in, cplx* out) const {
  fftw_execute_dft(static_cast<fftw_plan>(inv_),
                   reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in)),
                   reinterpret_cast<fftw_complex*>(out));
  const double scale = 1.0 / static_cast<double>(n_);
  for (int i = 0; i < n_; ++i) out[i] *= scale;
}

cvec Fft::forward(std::span<const cplx> in) const {
  require(static_cast<int>(in.size()) == n_, "fft input size mismatch");
  cvec out(in.size());
  forward(in.data(), out.data());
  return out;
}

cvec Fft::inverse(std::span<const cplx> in) const {
  require(static_cast<int>(in.size()) == n_, "fft input size mismatch");
  cvec out(in.size());
  inverse(in.data(), out.data());
  return out;
}

const Fft& fft_for(int n) {
  static std::mutex cache_mutex;
  static std::map<int, std::unique_ptr<Fft>> cache;
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto it = cache.find(n);
  if (it == cache.end()) {
    it = cache.emplace(n, std::make_unique<Fft>(n)).first;
  }
  return *it->second;
}

}  // namespace seilab
