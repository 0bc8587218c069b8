#include "seilab/resample.hpp"

#include <cmath>

namespace seilab {

namespace {

// 802.11a occupies +/-8.125 MHz; protect up to 8.6 MHz and stop by
// 11.4 MHz (the fold point of a 20 MHz output rate), expressed here as
// fractions of whichever rate the filter runs at.
constexpr double kPassHz = 8.6e6;
constexpr double kStopHz = 11.4e6;
constexpr double kAttenDb = 70.0;

double bessel_i0(double x) {
  // power series; converges quickly for the beta range we use
  double sum = 1.0;
  double term = 1.0;
  for (int k = 1; k < 64; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

std::vector<double> anti_alias_taps(double rate_hz) {
  const double cutoff = 0.5 * (kPassHz + kStopHz) / rate_hz;
  const double transition = (kStopHz - kPassHz) / rate_hz;
  return design_kaiser_lowpass(cutoff, kAttenDb, transition);
}

}  // namespace

std::vector<double> design_kaiser_lowpass(double cutoff_norm, double atten_db,
                                          double transition_norm) {
  require(cutoff_norm > 0.0 && cutoff_norm < 0.5, "cutoff out of range");
  require(transition_norm > 0.0, "transition width must be positive");

  double beta = 0.0;
  if (atten_db > 50.0) {
    beta = 0.1102 * (atten_db - 8.7);
  } else if (atten_db >= 21.0) {
    beta = 0.5842 * std::pow(atten_db - 21.0, 0.4) +
           0.07886 * (atten_db - 21.0);
  }
  int len = static_cast<int>(
      std::ceil((atten_db - 8.0) / (2.285 * 2.0 * M_PI * transition_norm)));
  if (len % 2 == 0) ++len;
  if (len < 7) len = 7;

  const int mid = (len - 1) / 2;
  const double i0b = bessel_i0(beta);
  std::vector<double> taps(static_cast<size_t>(len));
  double sum = 0.0;
  for (int k = 0; k < len; ++k) {
    const double t = k - mid;
    const double sinc = (t == 0.0)
                            ? 2.0 * cutoff_norm
                            : std::sin(2.0 * M_PI * cutoff_norm * t) /
                                  (M_PI * t);
    const double r = 2.0 * t / (len - 1);
    const double win = bessel_i0(beta * std::sqrt(1.0 - r * r)) / i0b;
    taps[static_cast<size_t>(k)] = sinc * win;
    sum += taps[static_cast<size_t>(k)];
  }
  for (double& h : taps) h /= sum;  // exact unit DC gain
  return taps;
}

cvec fir_filter_centered(std::span<const cplx> x,
                         std::span<const double> taps) {
  const int n = static_cast<int>(x.size());
  const int m = static_cast<int>(taps.size());
  const int mid = (m - 1) / 2;
  cvec y(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    cplx acc{0.0, 0.0};
    const int k_lo = std::max(0, i + mid - (n - 1));
    const int k_hi = std::min(m - 1, i + mid);
    for (int k = k_lo; k <= k_hi; ++k) {
      acc += taps[static_cast<size_t>(k)] * x[static_cast<size_t>(i + mid - k)];
    }
    y[static_cast<size_t>(i)] = acc;
  }
  return y;
}

cvec decimate_int(std::span<const cplx> x, int factor) {
  require(factor >= 1, "decimation factor must be >= 1");
  if (factor == 1) return cvec(x.begin(), x.end());

  // the output grid is always 20 MHz here, so the filter runs at
  // factor * 20 MHz
  const double in_rate = static_cast<double>(factor) * kBaseRate;
  const auto h = anti_alias_taps(in_rate);

  const cvec filtered = fir_filter_centered(x, h);
  const int n_out =
      static_cast<int>((x.size() + static_cast<size_t>(factor) - 1) /
                       static_cast<size_t>(factor));
  cvec y(static_cast<size_t>(n_out));
  for (int i = 0; i < n_out; ++i) {
    y[static_cast<size_t>(i)] =
        filtered[static_cast<size_t>(i) * static_cast<size_t>(factor)];
  }
  return y;
}

cvec upsample_int(std::span<const cplx> x, int factor) {
  require(factor >= 1, "upsampling factor must be >= 1");
  if (factor == 1) return cvec(x.begin(), x.end());

  const double out_rate = kBaseRate * static_cast<double>(factor);
  const auto h = anti_alias_taps(out_rate);
  cvec stuffed(x.size() * static_cast<size_t>(factor), cplx{0.0, 0.0});
  for (size_t i = 0; i < x.size(); ++i) {
    stuffed[i * static_cast<size_t>(factor)] = x[i];
  }
  cvec y = fir_filter_centered(stuffed, h);
  const double gain = static_cast<double>(factor);
  for (cplx& v : y) v *= gain;
  return y;
}

cvec resample(std::span<const cplx> x, double from_hz, double to_hz) {
  require(from_hz > 0.0 && to_hz > 0.0, "rates must be positive");
  if (from_hz == to_hz) return cvec(x.begin(), x.end());
  if (to_hz > from_hz) {
    const double ratio = to_hz / from_hz;
    const int factor = static_cast<int>(std::lround(ratio));
    require(std::abs(ratio - factor) < 1e-9, "non-integer resampling ratio");
    return upsample_int(x, factor);
  }
  const double ratio = from_hz / to_hz;
  const int factor = static_cast<int>(std::lround(ratio));
  require(std::abs(ratio - factor) < 1e-9, "non-integer resampling ratio");
  return decimate_int(x, factor);
}

}  // namespace seilab
