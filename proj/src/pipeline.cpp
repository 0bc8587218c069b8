#include "seilab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>

#include "seilab/parallel.hpp"
#include "seilab/resample.hpp"

namespace seilab::pipeline {

namespace {

int rate_ratio(double sample_rate_hz) {
  const double ratio = sample_rate_hz / kBaseRate;
  const int r = static_cast<int>(std::lround(ratio));
  require(r >= 1 && std::abs(ratio - r) < 1e-9,
          "sample rate must be an integer multiple of 20 MHz");
  return r;
}

// |ideal preamble| resampled to an integer multiple of 20 MHz, cached.
const std::vector<double>& ideal_magnitude(int ratio) {
  static std::mutex m;
  static std::map<int, std::vector<double>> cache;
  std::lock_guard<std::mutex> lock(m);
  auto it = cache.find(ratio);
  if (it == cache.end()) {
    const auto& ideal = sigmodel::generate_ideal_preamble().samples;
    cvec up = upsample_int(ideal, ratio);
    std::vector<double> mag(up.size());
    for (size_t i = 0; i < up.size(); ++i) mag[i] = std::abs(up[i]);
    it = cache.emplace(ratio, std::move(mag)).first;
  }
  return it->second;
}

const IirFilter& band_filter(const FilterSpec& spec, double rate_hz) {
  static std::mutex m;
  static std::map<std::pair<double, double>, IirFilter> cache;
  std::lock_guard<std::mutex> lock(m);
  const auto key = std::make_pair(rate_hz, spec.cutoff_hz);
  auto it = cache.find(key);
  if (it == cache.end()) {
    it = cache.emplace(key, design_elliptic_filter(spec, rate_hz)).first;
  }
  return it->second;
}

}  // namespace

std::vector<std::pair<int, int>> detect_frames(const sigmodel::IqFrame& record,
                                               double threshold_fraction,
                                               int detect_window) {
  require(!record.samples.empty(), "detect_frames: empty record");
  require(threshold_fraction > 0.0 && threshold_fraction < 1.0,
          "threshold fraction must be in (0,1)");
  const int ratio = rate_ratio(record.sample_rate_hz);
  const int w = detect_window * ratio;
  const int n = static_cast<int>(record.samples.size());
  if (n < w) return {};

  // sliding mean of |x| over w samples
  std::vector<double> mag(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) mag[static_cast<size_t>(i)] = std::abs(record.samples[static_cast<size_t>(i)]);
  std::vector<double> win(static_cast<size_t>(n - w + 1));
  double acc = std::accumulate(mag.begin(), mag.begin() + w, 0.0);
  win[0] = acc / w;
  for (int i = 1; i <= n - w; ++i) {
    acc += mag[static_cast<size_t>(i + w - 1)] - mag[static_cast<size_t>(i - 1)];
    win[static_cast<size_t>(i)] = acc / w;
  }
  const double peak = *std::max_element(win.begin(), win.end());
  if (peak <= 0.0) return {};
  const double thr = threshold_fraction * peak;

  std::vector<std::pair<int, int>> regions;
  int start = -1;
  for (int i = 0; i <= n - w; ++i) {
    const bool hot = win[static_cast<size_t>(i)] >= thr;
    if (hot && start < 0) start = i;
    if (!hot && start >= 0) {
      regions.emplace_back(start, i - 1 + w);
      start = -1;
    }
  }
  if (start >= 0) regions.emplace_back(start, n);

  const int min_len = kPreambleLen * ratio;
  std::erase_if(regions, [min_len](const auto& r) {
    return r.second - r.first < min_len;
  });
  return regions;
}

std::pair<cvec, int> extract_preamble(std::span<const cplx> frame,
                                      double sample_rate_hz,
                                      double corr_floor) {
  const int ratio = rate_ratio(sample_rate_hz);
  const auto& tmpl = ideal_magnitude(ratio);
  const int len = static_cast<int>(tmpl.size());
  const int n = static_cast<int>(frame.size());
  require(n > len, "frame shorter than one preamble");

  double t_mean = 0.0;
  for (double v : tmpl) t_mean += v;
  t_mean /= len;
  double t_var = 0.0;
  for (double v : tmpl) t_var += (v - t_mean) * (v - t_mean);

  std::vector<double> mag(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) mag[static_cast<size_t>(i)] = std::abs(frame[static_cast<size_t>(i)]);
  std::vector<double> pre(static_cast<size_t>(n + 1), 0.0);
  std::vector<double> pre2(static_cast<size_t>(n + 1), 0.0);
  for (int i = 0; i < n; ++i) {
    pre[static_cast<size_t>(i + 1)] = pre[static_cast<size_t>(i)] + mag[static_cast<size_t>(i)];
    pre2[static_cast<size_t>(i + 1)] = pre2[static_cast<size_t>(i)] + mag[static_cast<size_t>(i)] * mag[static_cast<size_t>(i)];
  }

  const int lags = n - len + 1;
  std::vector<double> score(static_cast<size_t>(lags));
  for (int t = 0; t < lags; ++t) {
    double dot = 0.0;
    const double* m = mag.data() + t;
    for (int i = 0; i < len; ++i) dot += m[i] * tmpl[static_cast<size_t>(i)];
    const double s1 = pre[static_cast<size_t>(t + len)] - pre[static_cast<size_t>(t)];
    const double s2 = pre2[static_cast<size_t>(t + len)] - pre2[static_cast<size_t>(t)];
    const double var = s2 - s1 * s1 / len;
    const double cov = dot - s1 * t_mean;
    const double denom = std::sqrt(std::max(var, 1e-300) * t_var);
    score[static_cast<size_t>(t)] = std::abs(cov / denom);
  }

  const auto peak_it = std::max_element(score.begin(), score.end());
  const int t_star = static_cast<int>(peak_it - score.begin());

  std::vector<double> sorted(score);
  std::nth_element(sorted.begin(), sorted.begin() + lags / 2, sorted.end());
  const double med = std::max(sorted[static_cast<size_t>(lags / 2)], 1e-12);
  if (*peak_it / med < corr_floor) {
    throw processing_error("no preamble found (correlation floor)");
  }

  cvec window(frame.begin() + t_star, frame.begin() + t_star + len);
  return {std::move(window), t_star};
}

namespace {

double repetition_cfo(std::span<const cplx> x, int begin, int end, int lag,
                      double sample_rate_hz) {
  cplx p{0.0, 0.0};
  for (int i = begin; i + lag < end; ++i) {
    p += std::conj(x[static_cast<size_t>(i)]) * x[static_cast<size_t>(i + lag)];
  }
  if (std::abs(p) <= 0.0) {
    throw processing_error("cfo estimate degenerate (zero-energy input)");
  }
  return std::arg(p) * sample_rate_hz / (2.0 * M_PI * lag);
}

}  // namespace

double estimate_cfo_coarse(std::span<const cplx> preamble,
                           double sample_rate_hz) {
  const int ratio = rate_ratio(sample_rate_hz);
  require(static_cast<int>(preamble.size()) >= 320 * ratio,
          "preamble too short for cfo estimation");
  return repetition_cfo(preamble, 0, 160 * ratio, 16 * ratio, sample_rate_hz);
}

double estimate_cfo(std::span<const cplx> preamble, double sample_rate_hz) {
  const int ratio = rate_ratio(sample_rate_hz);
  const double coarse = estimate_cfo_coarse(preamble, sample_rate_hz);
  const cvec corrected = apply_cfo(preamble, -coarse, sample_rate_hz);
  const double fine = repetition_cfo(corrected, 160 * ratio, 320 * ratio,
                                     64 * ratio, sample_rate_hz);
  return coarse + fine;
}

cvec apply_cfo(std::span<const cplx> x, double freq_hz,
               double sample_rate_hz) {
  cvec y(x.size());
  const double step = 2.0 * M_PI * freq_hz / sample_rate_hz;
  for (size_t i = 0; i < x.size(); ++i) {
    const double a = step * static_cast<double>(i);
    y[i] = x[i] * cplx(std::cos(a), std::sin(a));
  }
  return y;
}

cvec downsample(std::span<const cplx> x, double from_hz, double to_hz) {
  require(to_hz == kBaseRate, "downsample targets 20 MHz");
  const double ratio = from_hz / to_hz;
  const int r = static_cast<int>(std::lround(ratio));
  require(r >= 1 && std::abs(ratio - r) < 1e-9,
          "non-integer decimation ratio");
  return decimate_int(x, r);
}

cvec energy_normalize(std::span<const cplx> x) {
  const double e = energy(x);
  if (e <= 0.0) throw processing_error("energy_normalize: zero-energy input");
  const double s = 1.0 / std::sqrt(e);
  cvec y(x.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] * s;
  return y;
}

cvec phase_align(std::span<const cplx> x) {
  require(x.size() == kPreambleLen, "phase_align expects 320 samples");
  const auto& ideal = sigmodel::generate_ideal_preamble().samples;
  cplx c{0.0, 0.0};
  for (size_t i = 0; i < x.size(); ++i) c += std::conj(ideal[i]) * x[i];
  if (std::abs(c) <= 0.0) return cvec(x.begin(), x.end());
  const cplx rot = std::polar(1.0, -std::arg(c));
  cvec y(x.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] * rot;
  return y;
}

ResidualPreamble make_residual(const Preamble& p) {
  require(p.samples.size() == kPreambleLen, "residual expects 320 samples");
  const auto& ideal = sigmodel::generate_ideal_preamble().samples;
  cplx c{0.0, 0.0};
  for (size_t i = 0; i < p.samples.size(); ++i) {
    c += std::conj(ideal[i]) * p.samples[i];
  }
  ResidualPreamble r;
  r.source = &p;
  r.samples.resize(kPreambleLen);
  for (size_t i = 0; i < p.samples.size(); ++i) {
    r.samples[i] = p.samples[i] - c * ideal[i];
  }
  return r;
}

PipelineResult run_pipeline(const sigmodel::IqFrame& record,
                            const PipelineConfig& config) {
  PipelineResult result;
  if (record.samples.empty()) return result;
  const int ratio = rate_ratio(record.sample_rate_hz);

  const IirFilter& filt = band_filter(config.filter, record.sample_rate_hz);
  sigmodel::IqFrame filtered = record;
  filtered.samples = filt.apply(record.samples);

  const auto regions =
      detect_frames(filtered, config.threshold_fraction, config.detect_window);

  const int margin = 2 * config.detect_window * ratio;
  const int pad = 64 * ratio;
  const int len = kPreambleLen * ratio;
  int index = 0;
  for (const auto& [r_begin, r_end] : regions) {
    const int lo = std::max(0, r_begin - margin);
    const int hi = std::min<int>(static_cast<int>(filtered.samples.size()),
                                 r_end + margin);
    try {
      std::span<const cplx> slice(filtered.samples.data() + lo,
                                  static_cast<size_t>(hi - lo));
      auto [window, t_rel] = extract_preamble(slice, record.sample_rate_hz,
                                              config.corr_floor);
      // padded cut so the decimation filter has context around the preamble
      const int t_abs = lo + t_rel;
      cvec padded(static_cast<size_t>(len + 2 * pad), cplx{0.0, 0.0});
      for (int i = 0; i < len + 2 * pad; ++i) {
        const int src = t_abs - pad + i;
        if (src >= 0 && src < static_cast<int>(filtered.samples.size())) {
          padded[static_cast<size_t>(i)] = filtered.samples[static_cast<size_t>(src)];
        }
      }
      const double cfo = estimate_cfo(
          std::span<const cplx>(padded).subspan(static_cast<size_t>(pad),
                                                static_cast<size_t>(len)),
          record.sample_rate_hz);
      cvec corrected = apply_cfo(padded, -cfo, record.sample_rate_hz);
      cvec down = (ratio == 1)
                      ? std::move(corrected)
                      : downsample(corrected, record.sample_rate_hz);
      const int trim = pad / ratio;
      cvec core(down.begin() + trim, down.begin() + trim + kPreambleLen);
      core = phase_align(core);
      core = energy_normalize(core);

      Preamble p;
      p.samples = std::move(core);
      p.emitter_id = record.emitter_id;
      p.k = index++;
      p.snr_db = record.snr_db;
      p.normalized = true;
      p.stage_mask = kAllStages;
      result.preambles.push_back(std::move(p));
    } catch (const processing_error& e) {
      ++result.skipped_frames;
      result.skip_log.push_back("skipped frame at sample " +
                                std::to_string(r_begin) + ": " + e.what());
    }
  }
  return result;
}

std::vector<Preamble> run_pipeline_batch(
    const std::vector<sigmodel::IqFrame>& records,
    const PipelineConfig& config) {
  std::vector<PipelineResult> per_record(records.size());
  parallel::parallel_for(static_cast<std::int64_t>(records.size()),
                         [&](std::int64_t i) {
                           per_record[static_cast<size_t>(i)] =
                               run_pipeline(records[static_cast<size_t>(i)], config);
                         });
  std::vector<Preamble> out;
  for (auto& r : per_record) {
    for (auto& p : r.preambles) out.push_back(std::move(p));
  }
  return out;
}

}  // namespace seilab::pipeline
