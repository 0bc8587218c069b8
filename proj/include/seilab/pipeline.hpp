#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seilab/elliptic.hpp"
#include "seilab/sigmodel.hpp"

namespace seilab::pipeline {

/// Stage-completion bits carried by every Preamble; run_pipeline asserts
/// the full mask on output.
enum StageBit : unsigned {
  kFiltered = 1u << 0,
  kDetected = 1u << 1,
  kExtracted = 1u << 2,
  kCarrierCorrected = 1u << 3,
  kDownsampled = 1u << 4,
  kNormalized = 1u << 5,
};
inline constexpr unsigned kAllStages = 0x3f;

/// A conditioned 320-sample capture at 20 MHz, the unit of all feature
/// extraction.
struct Preamble {
  cvec samples;
  std::optional<std::string> emitter_id;
  int k = 0;  // capture index within its record
  std::optional<double> snr_db;
  bool normalized = false;
  unsigned stage_mask = 0;

  static constexpr int sample_count = kPreambleLen;
};

struct ResidualPreamble {
  cvec samples;  // length 320
  const Preamble* source = nullptr;
};

struct PipelineConfig {
  FilterSpec filter;
  double threshold_fraction = 0.35;  // of the peak windowed magnitude
  int detect_window = 64;            // samples at 20 MHz, scaled by rate
  double corr_floor = 4.0;           // peak/median of |correlation|
};

struct PipelineResult {
  std::vector<Preamble> preambles;
  int skipped_frames = 0;
  std::vector<std::string> skip_log;  // one line per skipped frame
};

/// Maximal regions whose sliding-window mean magnitude exceeds
/// threshold_fraction * peak. Regions shorter than a preamble are dropped.
std::vector<std::pair<int, int>> detect_frames(const sigmodel::IqFrame& record,
                                               double threshold_fraction,
                                               int detect_window = 64);

/// Cross-correlates |frame| against the resampled ideal preamble magnitude
/// and cuts a preamble-length window at the peak. Returns the window and
/// its start offset within the frame. Throws processing_error when the
/// peak-to-median correlation ratio is below the floor.
std::pair<cvec, int> extract_preamble(std::span<const cplx> frame,
                                      double sample_rate_hz,
                                      double corr_floor = 4.0);

/// Two-stage repetition-based estimate: coarse over the short symbols
/// (lag = one short-symbol period, range +/- fs/(2L)), refined over the
/// long-symbol repetition.
double estimate_cfo(std::span<const cplx> preamble, double sample_rate_hz);

/// Coarse stage only; range is +/- sample_rate/(2 * short symbol period).
double estimate_cfo_coarse(std::span<const cplx> preamble,
                           double sample_rate_hz);

/// Multiplies by exp(j*2*pi*f*n/fs).
cvec apply_cfo(std::span<const cplx> x, double freq_hz,
               double sample_rate_hz);

/// Anti-alias filtered decimation to 20 MHz; ratio must be an integer.
cvec downsample(std::span<const cplx> x, double from_hz, double to_hz = kBaseRate);

/// Scales to unit energy.
cvec energy_normalize(std::span<const cplx> x);

/// Rotates so the complex least-squares fit of the ideal preamble onto x is
/// real and positive (removes the arbitrary channel/oscillator phase).
cvec phase_align(std::span<const cplx> x);

/// residual = p - <ideal, p> * ideal (single complex scalar fit).
ResidualPreamble make_residual(const Preamble& p);

/// filter -> detect -> extract -> carrier correction -> downsample ->
/// normalize. Failed frames are skipped with one log line each.
PipelineResult run_pipeline(const sigmodel::IqFrame& record,
                            const PipelineConfig& config = {});

/// Convenience: run_pipeline over many records, frames processed
/// independently (parallel-safe), outputs ordered by record then offset.
std::vector<Preamble> run_pipeline_batch(
    const std::vector<sigmodel::IqFrame>& records,
    const PipelineConfig& config = {});

}  // namespace seilab::pipeline
