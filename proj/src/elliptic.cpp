#include "seilab/elliptic.hpp"

#include <cmath>
#include <complex>

namespace seilab::pipeline {

namespace {

// Descending Landen sequence of moduli, k_{n+1} = (k_n / (1 + k_n'))^2.
std::vector<double> landen(double k) {
  std::vector<double> v;
  while (k > 1e-16 && v.size() < 32) {
    k = std::pow(k / (1.0 + std::sqrt(1.0 - k * k)), 2.0);
    v.push_back(k);
  }
  return v;
}

// Complete elliptic integral K(k) from the same recursion.
double ellip_k(double k) {
  if (k >= 1.0) return INFINITY;
  double prod = 1.0;
  for (double kn : landen(k)) prod *= 1.0 + kn;
  return prod * M_PI / 2.0;
}

// cd(u*K, k) with u in units of K; valid for complex u.
cplx cde(cplx u, double k) {
  const auto v = landen(k);
  cplx w = std::cos(u * (M_PI / 2.0));
  for (auto it = v.rbegin(); it != v.rend(); ++it) {
    w = (1.0 + *it) * w / (1.0 + *it * w * w);
  }
  return w;
}

// sn(u*K, k) with u in units of K; valid for complex u.
cplx sne(cplx u, double k) {
  const auto v = landen(k);
  cplx w = std::sin(u * (M_PI / 2.0));
  for (auto it = v.rbegin(); it != v.rend(); ++it) {
    w = (1.0 + *it) * w / (1.0 + *it * w * w);
  }
  return w;
}

// Inverse of cde: returns u (in units of K) with cd(u*K, k) = w.
cplx acde(cplx w, double k) {
  const auto v = landen(k);
  double kprev = k;
  for (double vn : v) {
    w = w / (1.0 + std::sqrt(cplx(1.0, 0.0) - w * w * (kprev * kprev))) *
        (2.0 / (1.0 + vn));
    kprev = vn;
  }
  return std::acos(w) * (2.0 / M_PI);
}

cplx asne(cplx w, double k) { return cplx(1.0, 0.0) - acde(w, k); }

// Degree equation: selectivity k for given order and ripple ratio k1.
double ellipdeg(int order, double k1) {
  const int half = order / 2;
  const double kc = std::sqrt(1.0 - k1 * k1);
  double prod = 1.0;
  for (int i = 1; i <= half; ++i) {
    const double ui = (2.0 * i - 1.0) / order;
    prod *= sne(cplx(ui, 0.0), kc).real();
  }
  const double kp = std::pow(kc, order) * std::pow(prod, 4.0);
  return std::sqrt(1.0 - kp * kp);
}

}  // namespace

void FilterSpec::validate(double sample_rate_hz) const {
  require(order >= 1 && order <= 12, "filter order out of range");
  require(passband_ripple_db > 0.0, "passband ripple must be positive");
  require(stopband_atten_db > passband_ripple_db,
          "stopband attenuation must exceed the ripple");
  require(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0,
          "cutoff must lie below Nyquist");
}

cvec IirFilter::apply(std::span<const cplx> x) const {
  cvec y(x.begin(), x.end());
  for (const Biquad& s : sections) {
    cplx z1{0.0, 0.0}, z2{0.0, 0.0};
    for (cplx& v : y) {
      const cplx in = v;
      const cplx out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  for (cplx& v : y) v *= gain;
  return y;
}

double IirFilter::magnitude_at(double freq_hz, double sample_rate_hz) const {
  const double w = 2.0 * M_PI * freq_hz / sample_rate_hz;
  const cplx z1 = std::polar(1.0, -w);
  const cplx z2 = z1 * z1;
  cplx h{gain, 0.0};
  for (const Biquad& s : sections) {
    h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  }
  return std::abs(h);
}

IirFilter design_elliptic_filter(const FilterSpec& spec,
                                 double sample_rate_hz) {
  spec.validate(sample_rate_hz);
  require(spec.order % 2 == 0, "odd elliptic orders are not needed here");

  const double ep = std::sqrt(undb10(spec.passband_ripple_db) - 1.0);
  const double es = std::sqrt(undb10(spec.stopband_atten_db) - 1.0);
  const double k1 = ep / es;
  const double k = ellipdeg(spec.order, k1);

  const int half = spec.order / 2;
  const cplx v0 =
      asne(cplx(0.0, 1.0 / ep), k1) * cplx(0.0, -1.0 / spec.order);

  // analog prototype, passband edge prewarped onto the bilinear axis
  const double wc = std::tan(M_PI * spec.cutoff_hz / sample_rate_hz);
  std::vector<cplx> zeros, poles;
  for (int i = 1; i <= half; ++i) {
    const double ui = (2.0 * i - 1.0) / spec.order;
    const double zeta = cde(cplx(ui, 0.0), k).real();
    const cplx zero = cplx(0.0, 1.0) * (wc / (k * zeta));
    const cplx pole = cplx(0.0, 1.0) * cde(cplx(ui, 0.0) - cplx(0.0, 1.0) * v0, k) * wc;
    zeros.push_back(zero);
    zeros.push_back(std::conj(zero));
    poles.push_back(pole);
    poles.push_back(std::conj(pole));
  }

  auto bilinear = [](cplx s) { return (1.0 + s) / (1.0 - s); };

  IirFilter filt;
  for (int i = 0; i < half; ++i) {
    const cplx zz = bilinear(zeros[static_cast<size_t>(2 * i)]);
    const cplx zp = bilinear(poles[static_cast<size_t>(2 * i)]);
    Biquad s{};
    s.b0 = 1.0;
    s.b1 = -2.0 * zz.real();
    s.b2 = std::norm(zz);
    s.a1 = -2.0 * zp.real();
    s.a2 = std::norm(zp);
    filt.sections.push_back(s);
  }

  // even order: |H| at DC equals the ripple floor
  const double target_dc = undb20(-spec.passband_ripple_db);
  filt.gain = 1.0;
  const double h1 = filt.magnitude_at(0.0, sample_rate_hz);
  require(h1 > 0.0, "degenerate filter design");
  filt.gain = target_dc / h1;
  return filt;
}

}  // namespace seilab::pipeline
