#include "seilab/features.hpp"

#include <algorithm>
#include <cmath>

#include "seilab/fft.hpp"
#include "seilab/parallel.hpp"

namespace seilab::features {

namespace {

constexpr int kN = kPreambleLen;

// circular unit-norm Gaussian; g[d] depends on the wrap-around distance
std::vector<double> gauss_window(const GaborWindowSpec& spec) {
  require(spec.sigma > 0.0 && std::isfinite(spec.sigma),
          "degenerate gabor window");
  std::vector<double> g(kN);
  double e = 0.0;
  for (int d = 0; d < kN; ++d) {
    const double dist = std::min(d, kN - d);
    g[static_cast<size_t>(d)] =
        std::exp(-dist * dist / (2.0 * spec.sigma * spec.sigma));
    e += g[static_cast<size_t>(d)] * g[static_cast<size_t>(d)];
  }
  const double s = 1.0 / std::sqrt(e);
  for (double& v : g) v *= s;
  return g;
}

}  // namespace

GaborCoefficients dgt(std::span<const cplx> p, const GaborWindowSpec& window) {
  require(static_cast<int>(p.size()) == kN, "dgt expects 320 samples");
  const auto g = gauss_window(window);
  const Fft& fft = fft_for(kN);

  GaborCoefficients out;
  out.values.resize(static_cast<size_t>(kN) * kN);
  // one windowed FFT per time shift; columns are independent
  parallel::parallel_for(kN, [&](std::int64_t n) {
    cvec buf(kN), col(kN);
    for (int l = 0; l < kN; ++l) {
      buf[static_cast<size_t>(l)] =
          p[static_cast<size_t>(l)] *
          g[static_cast<size_t>((l - static_cast<int>(n) + kN) % kN)];
    }
    fft.forward(buf.data(), col.data());
    for (int m = 0; m < kN; ++m) {
      out.values[static_cast<size_t>(m) * kN + static_cast<size_t>(n)] =
          col[static_cast<size_t>(m)];
    }
  });
  return out;
}

cvec reconstruct(const GaborCoefficients& c, const GaborWindowSpec& window) {
  require(c.values.size() == static_cast<size_t>(kN) * kN,
          "coefficient matrix must be 320x320");
  const auto g = gauss_window(window);
  const Fft& fft = fft_for(kN);

  // sum_n g[l-n] * ifft(column n)[l]; ||g|| = 1 so no extra constant
  cvec out(kN, cplx{0.0, 0.0});
  for (int n = 0; n < kN; ++n) {
    cvec col(kN), v(kN);
    for (int m = 0; m < kN; ++m) {
      col[static_cast<size_t>(m)] =
          c.values[static_cast<size_t>(m) * kN + static_cast<size_t>(n)];
    }
    fft.inverse(col.data(), v.data());
    for (int l = 0; l < kN; ++l) {
      out[static_cast<size_t>(l)] +=
          v[static_cast<size_t>(l)] *
          g[static_cast<size_t>((l - n + kN) % kN)];
    }
  }
  return out;
}

GaborSurface gabor_surface(std::span<const cplx> p,
                           const GaborWindowSpec& window) {
  require(energy(p) > 0.0, "gabor_surface: zero input");
  const GaborCoefficients c = dgt(p, window);
  GaborSurface s;
  s.values.resize(c.values.size());
  double peak = 0.0;
  for (size_t i = 0; i < c.values.size(); ++i) {
    s.values[i] = std::norm(c.values[i]);
    peak = std::max(peak, s.values[i]);
  }
  const double inv = 1.0 / peak;
  for (double& v : s.values) v *= inv;
  return s;
}

namespace {

struct Moments {
  double variance, skewness, kurtosis;
};

// population (1/N) moments; zero-variance convention is (0,0,0); kurtosis
// is excess (Gaussian -> 0)
Moments patch_moments(const double* data, int rows, int cols, int row_stride) {
  const double n = static_cast<double>(rows) * cols;
  double mean = 0.0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) mean += data[r * row_stride + c];
  }
  mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double d = data[r * row_stride + c] - mean;
      const double d2 = d * d;
      m2 += d2;
      m3 += d2 * d;
      m4 += d2 * d2;
    }
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (m2 <= 0.0) return {0.0, 0.0, 0.0};
  return {m2, m3 / std::pow(m2, 1.5), m4 / (m2 * m2) - 3.0};
}

}  // namespace

Fingerprint fingerprint(const GaborSurface& surface,
                        const PatchGridSpec& grid) {
  require(grid.rows >= 1 && grid.cols >= 1, "patch grid must be positive");
  require(kN % grid.rows == 0 && kN % grid.cols == 0,
          "patch grid must tile the 320x320 surface");
  const int ph = kN / grid.rows;
  const int pw = kN / grid.cols;
  require(ph * pw >= 15, "patches must contain at least fifteen elements");

  Fingerprint fp;
  fp.patch_count = grid.rows * grid.cols;
  fp.stats.resize(3 * static_cast<size_t>(fp.patch_count + 1));
  parallel::parallel_for(fp.patch_count, [&](std::int64_t idx) {
    const int pr = static_cast<int>(idx) / grid.cols;
    const int pc = static_cast<int>(idx) % grid.cols;
    const double* base =
        surface.values.data() + static_cast<size_t>(pr) * ph * kN + static_cast<size_t>(pc) * pw;
    const Moments m = patch_moments(base, ph, pw, kN);
    fp.stats[3 * static_cast<size_t>(idx) + 0] = m.variance;
    fp.stats[3 * static_cast<size_t>(idx) + 1] = m.skewness;
    fp.stats[3 * static_cast<size_t>(idx) + 2] = m.kurtosis;
  });
  const Moments g = patch_moments(surface.values.data(), kN, kN, kN);
  fp.stats[3 * static_cast<size_t>(fp.patch_count) + 0] = g.variance;
  fp.stats[3 * static_cast<size_t>(fp.patch_count) + 1] = g.skewness;
  fp.stats[3 * static_cast<size_t>(fp.patch_count) + 2] = g.kurtosis;
  return fp;
}

Fingerprint gabor_fingerprint(std::span<const cplx> p,
                              const GaborWindowSpec& window,
                              const PatchGridSpec& grid) {
  return fingerprint(gabor_surface(p, window), grid);
}

TimeTensor time_tensor(std::span<const cplx> p) {
  require(static_cast<int>(p.size()) == kN, "time_tensor expects 320 samples");
  TimeTensor t;
  t.rows.resize(4 * static_cast<size_t>(kN));
  for (int n = 0; n < kN; ++n) {
    const cplx v = p[static_cast<size_t>(n)];
    t.rows[static_cast<size_t>(n)] = v.real();
    t.rows[static_cast<size_t>(kN + n)] = v.imag();
    t.rows[static_cast<size_t>(2 * kN + n)] = std::abs(v);
    t.rows[static_cast<size_t>(3 * kN + n)] = std::atan2(v.imag(), v.real());
  }
  return t;
}

FreqTensor freq_tensor(std::span<const cplx> p) {
  require(static_cast<int>(p.size()) == kN, "freq_tensor expects 320 samples");
  const cvec spec = fft_for(kN).forward(p);
  FreqTensor f;
  f.rows.resize(4 * static_cast<size_t>(kN));
  for (int n = 0; n < kN; ++n) {
    const cplx v = spec[static_cast<size_t>(n)];
    f.rows[static_cast<size_t>(n)] = v.real();
    f.rows[static_cast<size_t>(kN + n)] = v.imag();
    f.rows[static_cast<size_t>(2 * kN + n)] = std::abs(v);
    f.rows[static_cast<size_t>(3 * kN + n)] = std::atan2(v.imag(), v.real());
  }
  return f;
}

GaborImage gabor_image(const GaborSurface& surface) {
  const auto& table = colormap_table();
  GaborImage img;
  img.pixels.resize(surface.values.size() * 3);
  for (size_t i = 0; i < surface.values.size(); ++i) {
    const double v = std::clamp(surface.values[i], 0.0, 1.0);
    const int idx = static_cast<int>(std::lround(v * 255.0));
    const Rgb& c = table[static_cast<size_t>(idx)];
    img.pixels[3 * i + 0] = c.r;
    img.pixels[3 * i + 1] = c.g;
    img.pixels[3 * i + 2] = c.b;
  }
  return img;
}

namespace scaling {

namespace {
const double kAmpSlope = std::sqrt(static_cast<double>(kN)) / 6.0;
constexpr double kFreqSlope = 1.0 / 12.0;
}  // namespace

double scale_amp(double v) { return 0.5 + v * kAmpSlope; }
double unscale_amp(double v) { return (v - 0.5) / kAmpSlope; }
double scale_angle(double v) { return 0.5 + v / (2.0 * M_PI); }
double scale_freq(double v) { return 0.5 + v * kFreqSlope; }

}  // namespace scaling

std::vector<double> scaled_time_tensor(std::span<const cplx> p) {
  const TimeTensor t = time_tensor(p);
  std::vector<double> out(t.rows.size());
  for (int n = 0; n < kN; ++n) {
    out[static_cast<size_t>(n)] = scaling::scale_amp(t.at(0, n));
    out[static_cast<size_t>(kN + n)] = scaling::scale_amp(t.at(1, n));
    out[static_cast<size_t>(2 * kN + n)] = scaling::scale_amp(t.at(2, n));
    out[static_cast<size_t>(3 * kN + n)] = scaling::scale_angle(t.at(3, n));
  }
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
  return out;
}

std::vector<double> scaled_freq_tensor(std::span<const cplx> p) {
  const FreqTensor f = freq_tensor(p);
  std::vector<double> out(f.rows.size());
  for (int n = 0; n < kN; ++n) {
    out[static_cast<size_t>(n)] = scaling::scale_freq(f.at(0, n));
    out[static_cast<size_t>(kN + n)] = scaling::scale_freq(f.at(1, n));
    out[static_cast<size_t>(2 * kN + n)] = scaling::scale_freq(f.at(2, n));
    out[static_cast<size_t>(3 * kN + n)] = scaling::scale_angle(f.at(3, n));
  }
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
  return out;
}

cvec complex_from_scaled_iq(std::span<const double> scaled_rows) {
  require(scaled_rows.size() >= 2 * static_cast<size_t>(kN),
          "need at least the (i, q) rows");
  cvec out(kN);
  for (int n = 0; n < kN; ++n) {
    out[static_cast<size_t>(n)] =
        cplx(scaling::unscale_amp(scaled_rows[static_cast<size_t>(n)]),
             scaling::unscale_amp(scaled_rows[static_cast<size_t>(kN + n)]));
  }
  return out;
}

double fingerprint_distance(const Fingerprint& a, const Fingerprint& b) {
  require(a.stats.size() == b.stats.size(), "fingerprint length mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.stats.size(); ++i) {
    const double d = a.stats[i] - b.stats[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace seilab::features
