#include "seilab/sigmodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "seilab/parallel.hpp"
#include "seilab/resample.hpp"
#include "seilab/rng.hpp"

namespace seilab::sigmodel {

namespace {

constexpr int kFftLen = 64;

// 64-point inverse DFT with twiddles indexed mod 64. Spectra whose only
// occupied bins are multiples of four therefore come out exactly
// 16-periodic, bit for bit.
std::array<cplx, kFftLen> idft64(const std::array<cplx, kFftLen>& bins) {
  std::array<cplx, kFftLen> tw;
  for (int i = 0; i < kFftLen; ++i) {
    const double a = 2.0 * M_PI * static_cast<double>(i) / kFftLen;
    tw[static_cast<size_t>(i)] = cplx(std::cos(a), std::sin(a));
  }
  std::array<cplx, kFftLen> out;
  for (int n = 0; n < kFftLen; ++n) {
    cplx acc{0.0, 0.0};
    for (int k = 0; k < kFftLen; ++k) {
      if (bins[static_cast<size_t>(k)] == cplx{0.0, 0.0}) continue;
      acc += bins[static_cast<size_t>(k)] * tw[static_cast<size_t>((k * n) % kFftLen)];
    }
    out[static_cast<size_t>(n)] = acc;
  }
  return out;
}

std::array<cplx, kFftLen> sts_bins() {
  std::array<cplx, kFftLen> bins{};
  const double scale = std::sqrt(13.0 / 6.0);
  const cplx p = scale * cplx(1.0, 1.0);
  const cplx m = scale * cplx(-1.0, -1.0);
  auto set = [&](int k, cplx v) { bins[static_cast<size_t>((k + kFftLen) % kFftLen)] = v; };
  set(-24, p); set(-20, m); set(-16, p); set(-12, m);
  set(-8, m);  set(-4, p);  set(4, m);   set(8, m);
  set(12, p);  set(16, p);  set(20, p);  set(24, p);
  return bins;
}

std::array<cplx, kFftLen> lts_bins() {
  // L_{-26..26} from the 802.11a long training symbol
  static constexpr int seq[53] = {
      1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1,
      1, -1, 1, -1, 1, 1, 1, 1, 0, 1, -1, -1, 1, 1, -1, 1, -1, 1,
      -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, 1, 1};
  std::array<cplx, kFftLen> bins{};
  for (int k = -26; k <= 26; ++k) {
    bins[static_cast<size_t>((k + kFftLen) % kFftLen)] =
        cplx(static_cast<double>(seq[k + 26]), 0.0);
  }
  return bins;
}

IdealPreamble build_ideal_preamble() {
  const auto s64 = idft64(sts_bins());
  const auto t64 = idft64(lts_bins());

  IdealPreamble p;
  p.samples.resize(kPreambleLen);
  // ten tiled copies of the 16-sample short symbol
  for (int r = 0; r < 10; ++r) {
    for (int i = 0; i < 16; ++i) {
      p.samples[static_cast<size_t>(16 * r + i)] = s64[static_cast<size_t>(i)];
    }
  }
  // 32-sample guard (tail of the long symbol) + two long symbols
  for (int i = 0; i < 32; ++i) {
    p.samples[static_cast<size_t>(160 + i)] = t64[static_cast<size_t>(32 + i)];
  }
  for (int i = 0; i < 64; ++i) {
    p.samples[static_cast<size_t>(192 + i)] = t64[static_cast<size_t>(i)];
    p.samples[static_cast<size_t>(256 + i)] = t64[static_cast<size_t>(i)];
  }

  const double scale = 1.0 / std::sqrt(energy(p.samples));
  for (cplx& v : p.samples) v *= scale;
  return p;
}

double deg2rad(double deg) { return deg * M_PI / 180.0; }

bool transparent(const SdrProfile& profile) {
  return profile.adc_bits >= 32 && profile.sample_rate_hz == kBaseRate &&
         profile.extra_receive_hops == 0;
}

}  // namespace

const IdealPreamble& generate_ideal_preamble() {
  static const IdealPreamble p = build_ideal_preamble();
  return p;
}

bool EmitterProfile::is_neutral() const {
  return iq_gain_imbalance_db == 0.0 && iq_phase_imbalance_deg == 0.0 &&
         cfo_hz == 0.0 && dc_offset == cplx{0.0, 0.0} && pa_a1 == 1.0 &&
         pa_a3 == 0.0 && phase_noise_linewidth_hz == 0.0;
}

void EmitterProfile::validate() const {
  const double vals[] = {iq_gain_imbalance_db, iq_phase_imbalance_deg,
                         cfo_hz,               dc_offset.real(),
                         dc_offset.imag(),     pa_a1,
                         pa_a3,                phase_noise_linewidth_hz};
  for (double v : vals) {
    require(std::isfinite(v), "emitter profile has non-finite values");
  }
  require(pa_a1 > 0.0, "pa_a1 must be positive");
  require(phase_noise_linewidth_hz >= 0.0, "linewidth must be >= 0");
  const double max_cfo = 40e-6 * kCarrierHz;
  require(std::abs(cfo_hz) <= max_cfo, "cfo exceeds +/-40 ppm of the carrier");
}

void SdrProfile::validate() const {
  require(sample_rate_hz == 20e6 || sample_rate_hz == 40e6,
          "sdr sample rate must be 20 MHz or 40 MHz");
  require(adc_bits >= 4 && adc_bits <= 32, "adc_bits out of range");
  require(extra_receive_hops == (full_duplex ? 0 : 1),
          "extra_receive_hops inconsistent with duplex mode");
}

cvec apply_emitter(const EmitterProfile& profile, std::span<const cplx> x,
                   std::uint64_t seed, double sample_rate_hz) {
  profile.validate();
  require(!x.empty(), "apply_emitter: empty input");

  cvec y(x.begin(), x.end());
  const size_t n = y.size();

  // IQ imbalance: y = x_I + j * beta * exp(j*phi) * x_Q
  if (profile.iq_gain_imbalance_db != 0.0 ||
      profile.iq_phase_imbalance_deg != 0.0) {
    const double beta = undb20(profile.iq_gain_imbalance_db);
    const double phi = deg2rad(profile.iq_phase_imbalance_deg);
    const double s = beta * std::sin(phi);
    const double c = beta * std::cos(phi);
    for (cplx& v : y) {
      v = cplx(v.real() - s * v.imag(), c * v.imag());
    }
  }

  // carrier offset + Wiener phase noise
  if (profile.cfo_hz != 0.0 || profile.phase_noise_linewidth_hz > 0.0) {
    const double step = 2.0 * M_PI * profile.cfo_hz / sample_rate_hz;
    if (profile.phase_noise_linewidth_hz > 0.0) {
      Rng rng(derive_seed(seed, 0x706e6f697365ULL));
      const double sigma = std::sqrt(2.0 * M_PI *
                                     profile.phase_noise_linewidth_hz /
                                     sample_rate_hz);
      double phase = 0.0;
      for (size_t i = 0; i < n; ++i) {
        const double a = step * static_cast<double>(i) + phase;
        y[i] *= cplx(std::cos(a), std::sin(a));
        phase += sigma * rng.normal();
      }
    } else {
      for (size_t i = 0; i < n; ++i) {
        const double a = step * static_cast<double>(i);
        y[i] *= cplx(std::cos(a), std::sin(a));
      }
    }
  }

  if (profile.dc_offset != cplx{0.0, 0.0}) {
    const double rms = std::sqrt(mean_power(x));
    const cplx dc = profile.dc_offset * rms;
    for (cplx& v : y) v += dc;
  }

  if (profile.pa_a1 != 1.0 || profile.pa_a3 != 0.0) {
    double peak2 = 0.0;
    for (const cplx& v : y) peak2 = std::max(peak2, std::norm(v));
    require(std::abs(profile.pa_a3) * peak2 < profile.pa_a1,
            "pa nonlinearity folds at this drive level");
    for (cplx& v : y) {
      v = profile.pa_a1 * v + profile.pa_a3 * v * std::norm(v);
    }
  }

  return y;
}

cvec add_noise(std::span<const cplx> x, double noise_power,
               std::uint64_t seed) {
  require(noise_power >= 0.0 && std::isfinite(noise_power),
          "noise power must be finite and >= 0");
  cvec y(x.begin(), x.end());
  if (noise_power == 0.0) return y;
  Rng rng(derive_seed(seed, 0x6177676eULL));
  const double amp = std::sqrt(noise_power);
  for (cplx& v : y) v += amp * rng.cnormal();
  return y;
}

cvec apply_channel(std::span<const cplx> x, double snr_db,
                   std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0.0) return cvec(x.begin(), x.end());
  require(std::isfinite(snr_db), "snr_db must be finite or +inf");
  const double p_sig = mean_power(x);
  require(p_sig > 0.0, "apply_channel: zero-energy input");
  return add_noise(x, p_sig / undb10(snr_db), seed);
}

cvec quantize(std::span<const cplx> x, int bits) {
  require(bits >= 4 && bits <= 32, "adc_bits out of range");
  if (bits >= 32) return cvec(x.begin(), x.end());

  double acc = 0.0;
  for (const cplx& v : x) acc += std::norm(v);
  const double sigma =
      std::sqrt(acc / (2.0 * static_cast<double>(x.size())));
  if (sigma == 0.0) return cvec(x.begin(), x.end());

  const double limit = 4.0 * sigma;
  const double delta = 2.0 * limit / std::pow(2.0, bits);
  const double top = limit - 0.5 * delta;
  auto q = [&](double v) {
    const double level = (std::floor(v / delta) + 0.5) * delta;
    return std::clamp(level, -top, top);
  };
  cvec y(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    y[i] = cplx(q(x[i].real()), q(x[i].imag()));
  }
  return y;
}

IqFrame apply_sdr_receive(const SdrProfile& profile, std::span<const cplx> x,
                          std::uint64_t seed) {
  profile.validate();
  require(!x.empty(), "apply_sdr_receive: empty input");

  IqFrame out;
  out.sample_rate_hz = profile.sample_rate_hz;
  out.seed = seed;
  if (transparent(profile)) {
    out.samples.assign(x.begin(), x.end());
    out.quantize_hops = 0;
    return out;
  }

  cvec y = resample(x, kBaseRate, profile.sample_rate_hz);
  const int hops = 1 + profile.extra_receive_hops;
  for (int h = 0; h < hops; ++h) y = quantize(y, profile.adc_bits);
  out.samples = std::move(y);
  out.quantize_hops = hops;
  return out;
}

cvec sdr_transmit(const SdrProfile& profile, std::span<const cplx> x) {
  profile.validate();
  require(!x.empty(), "sdr_transmit: empty input");
  if (transparent(profile)) return cvec(x.begin(), x.end());

  cvec y = quantize(x, profile.adc_bits);
  if (profile.sample_rate_hz != kBaseRate) {
    // DAC runs at the radio rate; model the round trip back to baseband
    y = resample(y, kBaseRate, profile.sample_rate_hz);
    y = resample(y, profile.sample_rate_hz, kBaseRate);
  }
  const double e = energy(y);
  require(e > 0.0, "sdr_transmit: quantized signal vanished");
  const double scale = 1.0 / std::sqrt(e);
  for (cplx& v : y) v *= scale;
  return y;
}

IqFrame synthesize_frame(const EmitterProfile& profile, double snr_db,
                         std::uint64_t seed,
                         const FrameSynthesisConfig& cfg) {
  require(cfg.record_len > cfg.max_offset + kPreambleLen,
          "record too short for the configured offsets");
  require(cfg.min_offset >= 0 && cfg.max_offset >= cfg.min_offset,
          "bad offset range");

  Rng layout(derive_seed(seed, 0x6c61796f7574ULL));
  const int offset =
      cfg.min_offset +
      static_cast<int>(layout.below(
          static_cast<std::uint64_t>(cfg.max_offset - cfg.min_offset + 1)));
  const int n_sym =
      cfg.min_payload_symbols +
      static_cast<int>(layout.below(static_cast<std::uint64_t>(
          cfg.max_payload_symbols - cfg.min_payload_symbols + 1)));

  const auto& ideal = generate_ideal_preamble();
  cvec record(static_cast<size_t>(cfg.record_len), cplx{0.0, 0.0});
  std::copy(ideal.samples.begin(), ideal.samples.end(),
            record.begin() + offset);

  // QPSK-modulated OFDM-like filler; only there so frame detection has a
  // realistic payload to see
  const double preamble_power = 1.0 / static_cast<double>(kPreambleLen);
  int pos = offset + kPreambleLen;
  for (int s = 0; s < n_sym && pos + 80 <= cfg.record_len; ++s) {
    std::array<cplx, 64> bins{};
    for (int k = -26; k <= 26; ++k) {
      if (k == 0) continue;
      const double re = layout.below(2) ? M_SQRT1_2 : -M_SQRT1_2;
      const double im = layout.below(2) ? M_SQRT1_2 : -M_SQRT1_2;
      bins[static_cast<size_t>((k + 64) % 64)] = cplx(re, im);
    }
    std::array<cplx, 64> sym{};
    for (int t = 0; t < 64; ++t) {
      cplx acc{0.0, 0.0};
      for (int k = 0; k < 64; ++k) {
        if (bins[static_cast<size_t>(k)] == cplx{0.0, 0.0}) continue;
        const double a = 2.0 * M_PI * static_cast<double>((k * t) % 64) / 64.0;
        acc += bins[static_cast<size_t>(k)] * cplx(std::cos(a), std::sin(a));
      }
      sym[static_cast<size_t>(t)] = acc;
    }
    double p_sym = 0.0;
    for (const cplx& v : sym) p_sym += std::norm(v);
    p_sym /= 64.0;
    const double g = std::sqrt(preamble_power / p_sym);
    for (int t = 0; t < 16; ++t) {  // cyclic prefix
      record[static_cast<size_t>(pos + t)] = g * sym[static_cast<size_t>(48 + t)];
    }
    for (int t = 0; t < 64; ++t) {
      record[static_cast<size_t>(pos + 16 + t)] = g * sym[static_cast<size_t>(t)];
    }
    pos += 80;
  }
  const int active_end = pos;

  cvec impaired = apply_emitter(profile, record, derive_seed(seed, 1));

  IqFrame frame;
  frame.sample_rate_hz = kBaseRate;
  frame.emitter_id = profile.emitter_id;
  frame.seed = seed;
  frame.preamble_offset = offset;
  if (std::isinf(snr_db) && snr_db > 0.0) {
    frame.samples = std::move(impaired);
  } else {
    require(std::isfinite(snr_db), "snr_db must be finite or +inf");
    const double p_active =
        mean_power(std::span<const cplx>(impaired).subspan(
            static_cast<size_t>(offset),
            static_cast<size_t>(active_end - offset)));
    frame.samples =
        add_noise(impaired, p_active / undb10(snr_db), derive_seed(seed, 2));
    frame.snr_db = snr_db;
  }
  return frame;
}

std::vector<IqFrame> synthesize_dataset(
    const std::vector<EmitterProfile>& profiles, int count_per_emitter,
    double snr_db, std::uint64_t seed, const FrameSynthesisConfig& cfg) {
  require(!profiles.empty(), "empty profile list");
  require(count_per_emitter >= 1, "count_per_emitter must be >= 1");
  for (const auto& p : profiles) p.validate();

  const std::int64_t total =
      static_cast<std::int64_t>(profiles.size()) * count_per_emitter;
  std::vector<IqFrame> frames(static_cast<size_t>(total));
  parallel::parallel_for(total, [&](std::int64_t i) {
    const auto& profile = profiles[static_cast<size_t>(i / count_per_emitter)];
    frames[static_cast<size_t>(i)] = synthesize_frame(
        profile, snr_db, seed ^ static_cast<std::uint64_t>(i), cfg);
  });
  return frames;
}

double profile_distance(const EmitterProfile& a, const EmitterProfile& b) {
  // band half-widths used for normalization
  constexpr double s_gain = 1.5, s_phase = 8.0, s_cfo = 100e3, s_dc = 0.02,
                   s_a3 = 0.08, s_lw = 200.0;
  const double d[] = {
      (a.iq_gain_imbalance_db - b.iq_gain_imbalance_db) / s_gain,
      (a.iq_phase_imbalance_deg - b.iq_phase_imbalance_deg) / s_phase,
      (a.cfo_hz - b.cfo_hz) / s_cfo,
      (a.dc_offset.real() - b.dc_offset.real()) / s_dc,
      (a.dc_offset.imag() - b.dc_offset.imag()) / s_dc,
      (a.pa_a3 - b.pa_a3) / s_a3,
      (a.phase_noise_linewidth_hz - b.phase_noise_linewidth_hz) / s_lw,
  };
  double acc = 0.0;
  for (double v : d) acc += v * v;
  return std::sqrt(acc);
}

std::vector<EmitterProfile> default_emitter_set() {
  std::vector<EmitterProfile> set;
  auto add = [&](const char* id, double g, double ph, double cfo, double dr,
                 double di, double a3, double lw) {
    EmitterProfile p;
    p.emitter_id = id;
    p.iq_gain_imbalance_db = g;
    p.iq_phase_imbalance_deg = ph;
    p.cfo_hz = cfo;
    p.dc_offset = cplx(dr, di);
    p.pa_a3 = a3;
    p.phase_noise_linewidth_hz = lw;
    return set.push_back(p);
  };
  // serial-number-grade spreads: one device model, narrow disjoint bands
  add("em0", 0.20, 1.0, 12e3, 0.004, 0.002, -0.010, 20.0);
  add("em1", -0.40, -2.0, -18e3, -0.006, 0.003, -0.022, 35.0);
  add("em2", 0.70, 3.5, 25e3, 0.002, -0.007, -0.034, 15.0);
  add("em3", -0.90, -5.0, -35e3, -0.008, -0.004, -0.046, 45.0);
  add("em4", 1.10, 6.5, 45e3, 0.009, 0.006, -0.058, 25.0);
  add("em5", -1.30, -8.0, -52e3, -0.003, 0.009, -0.070, 55.0);
  add("em6", 1.50, -3.0, 60e3, -0.010, 0.008, -0.015, 40.0);
  add("em7", -0.70, 5.5, -65e3, 0.007, -0.009, -0.080, 30.0);
  return set;
}

EmitterProfile default_decoy_profile() {
  EmitterProfile p;
  p.emitter_id = "decoy";
  p.iq_gain_imbalance_db = 2.0;
  p.iq_phase_imbalance_deg = 10.0;
  p.cfo_hz = 85e3;
  p.dc_offset = cplx(0.014, 0.010);
  p.pa_a3 = -0.095;
  p.phase_noise_linewidth_hz = 150.0;
  return p;
}

EmitterProfile default_eve_profile() {
  EmitterProfile p;
  p.emitter_id = "eve";
  p.iq_gain_imbalance_db = 2.2;
  p.iq_phase_imbalance_deg = 11.0;
  p.cfo_hz = 92e3;
  p.dc_offset = cplx(0.016, 0.008);
  p.pa_a3 = -0.100;
  p.phase_noise_linewidth_hz = 170.0;
  return p;
}

SdrProfile b210_profile() {
  return SdrProfile{"b210", 40e6, 12, true, 0};
}

SdrProfile hackrf_profile() {
  return SdrProfile{"hackrf", 20e6, 8, false, 1};
}

SdrProfile ideal_sdr_profile() {
  return SdrProfile{"ideal", 20e6, 32, true, 0};
}

}  // namespace seilab::sigmodel
