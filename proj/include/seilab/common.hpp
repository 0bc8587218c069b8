#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace seilab {

using cplx = std::complex<double>;
using cvec = std::vector<cplx>;

/// Length of a conditioned 802.11a preamble at 20 MHz (16 us).
inline constexpr int kPreambleLen = 320;
/// Baseband rate every preamble is conditioned to.
inline constexpr double kBaseRate = 20e6;
/// Carrier all emitters transmit on.
inline constexpr double kCarrierHz = 5.805e9;

/// Bad arguments / config. CLI maps this to exit code 1.
class validation_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure while processing valid inputs. CLI maps this to exit code 2.
class processing_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double energy(std::span<const cplx> x) {
  double e = 0.0;
  for (const cplx& v : x) e += std::norm(v);
  return e;
}

inline double mean_power(std::span<const cplx> x) {
  return x.empty() ? 0.0 : energy(x) / static_cast<double>(x.size());
}

inline double db10(double ratio) { return 10.0 * std::log10(ratio); }
inline double db20(double ratio) { return 20.0 * std::log10(ratio); }
inline double undb10(double db) { return std::pow(10.0, db / 10.0); }
inline double undb20(double db) { return std::pow(10.0, db / 20.0); }

inline void require(bool cond, const std::string& what) {
  if (!cond) throw validation_error(what);
}

}  // namespace seilab
