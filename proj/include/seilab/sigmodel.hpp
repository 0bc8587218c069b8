#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seilab/common.hpp"

namespace seilab::sigmodel {

/// Standard 802.11a preamble at 20 MHz: ten 16-sample short training
/// symbols followed by a 32-sample guard and two 64-sample long training
/// symbols. Unit energy.
struct IdealPreamble {
  cvec samples;  // length 320
  static constexpr int sts_begin = 0;
  static constexpr int sts_end = 160;
  static constexpr int lts_begin = 160;
  static constexpr int lts_end = 320;
  static constexpr int short_symbol_len = 16;
  static constexpr int long_symbol_len = 64;
};

/// Returns the STS+LTS baseband sequence. The short-symbol repetitions and
/// the two long symbols are bit-identical copies by construction.
const IdealPreamble& generate_ideal_preamble();

/// Front-end impairment model for one radio. Parameters are deliberately
/// small perturbations around the neutral values (0 dB, 0 deg, 0 Hz,
/// 0 offset, a1=1, a3=0, linewidth 0) which make apply_emitter the exact
/// identity.
struct EmitterProfile {
  std::string emitter_id;
  double iq_gain_imbalance_db = 0.0;
  double iq_phase_imbalance_deg = 0.0;
  double cfo_hz = 0.0;            // relative to the 5.805 GHz carrier
  cplx dc_offset{0.0, 0.0};       // fraction of signal RMS
  double pa_a1 = 1.0;             // memoryless cubic PA: a1*x + a3*x|x|^2
  double pa_a3 = 0.0;
  double phase_noise_linewidth_hz = 0.0;

  bool is_neutral() const;
  void validate() const;
};

/// Receive/transmit chain of an SDR platform, reduced to the SWaP-C knobs
/// the experiments sweep: sample rate, ADC depth, and the extra
/// quantization hop a half-duplex radio pays for self-observation.
struct SdrProfile {
  std::string name;
  double sample_rate_hz = 20e6;  // 20 MHz or 40 MHz
  int adc_bits = 12;
  bool full_duplex = true;
  int extra_receive_hops = 0;  // 0 full duplex, 1 half duplex

  void validate() const;
};

/// Labeled complex baseband capture.
struct IqFrame {
  cvec samples;
  double sample_rate_hz = kBaseRate;
  std::optional<std::string> emitter_id;
  std::optional<double> snr_db;
  std::uint64_t seed = 0;
  int quantize_hops = 0;                    // provenance: hops applied so far
  std::optional<int> preamble_offset;       // provenance: true embed offset
};

/// y = PA(IQimbalance(x) * exp(j*2*pi*cfo*n/fs + j*phi_n) + dc), phi_n a
/// Wiener process of the configured linewidth. Deterministic per seed.
cvec apply_emitter(const EmitterProfile& profile, std::span<const cplx> x,
                   std::uint64_t seed, double sample_rate_hz = kBaseRate);

/// Adds circular complex AWGN so the per-sample SNR over x equals snr_db.
/// snr_db = +inf disables the noise.
cvec apply_channel(std::span<const cplx> x, double snr_db, std::uint64_t seed);

/// AWGN with an explicit noise power (used when the reference power is
/// measured over a sub-span of the record).
cvec add_noise(std::span<const cplx> x, double noise_power, std::uint64_t seed);

/// Uniform mid-rise quantization of I and Q over +/-4 sigma of the signal.
cvec quantize(std::span<const cplx> x, int bits);

/// Resample -> quantize (repeated for half-duplex hops). Input must be at
/// 20 MHz baseband.
IqFrame apply_sdr_receive(const SdrProfile& profile, std::span<const cplx> x,
                          std::uint64_t seed);

/// SDR transmit model: quantize at the radio's depth, resample to 20 MHz if
/// the radio runs at another rate, re-normalize to unit energy.
cvec sdr_transmit(const SdrProfile& profile, std::span<const cplx> x);

struct FrameSynthesisConfig {
  int record_len = 4096;       // samples at 20 MHz
  int min_offset = 256;        // earliest preamble start
  int max_offset = 1024;       // latest preamble start
  int min_payload_symbols = 8; // random OFDM-like filler after the preamble
  int max_payload_symbols = 24;
};

/// One framed transmission: silence, preamble, QPSK-OFDM filler payload,
/// impaired by the profile and noise-corrupted. Deterministic per seed.
IqFrame synthesize_frame(const EmitterProfile& profile, double snr_db,
                         std::uint64_t seed,
                         const FrameSynthesisConfig& cfg = {});

/// count_per_emitter frames per profile; per-frame seeds are derived from
/// (seed, global frame index) so parallel and serial synthesis agree
/// bitwise.
std::vector<IqFrame> synthesize_dataset(
    const std::vector<EmitterProfile>& profiles, int count_per_emitter,
    double snr_db, std::uint64_t seed, const FrameSynthesisConfig& cfg = {});

/// L2 distance between band-normalized parameter vectors; the default
/// profile set keeps all pairs above a configured floor so classification
/// is well-posed.
double profile_distance(const EmitterProfile& a, const EmitterProfile& b);

/// The shipped 8-emitter set: same model, serial-number-grade parameter
/// differences in disjoint bands.
std::vector<EmitterProfile> default_emitter_set();

/// Decoy and adversary front-ends, drawn from one band family distinct
/// from the authorized set.
EmitterProfile default_decoy_profile();
EmitterProfile default_eve_profile();

SdrProfile b210_profile();
SdrProfile hackrf_profile();
SdrProfile ideal_sdr_profile();

}  // namespace seilab::sigmodel
