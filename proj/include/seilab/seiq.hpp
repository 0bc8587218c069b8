#pragma once

#include <optional>
#include <string>
#include <vector>

#include "seilab/pipeline.hpp"
#include "seilab/sigmodel.hpp"

namespace seilab::seiq {

/// SEIQ v1 container: 8-byte magic "SEIQ0001", little-endian u32 header
/// length, JSON header, then count*record_len interleaved float32 I,Q
/// pairs. The header always carries sample_rate, emitter_id, snr_db, seed,
/// count and record_len; attack files add kind and sdr.
struct FileHeader {
  double sample_rate_hz = kBaseRate;
  std::optional<std::string> emitter_id;
  std::optional<double> snr_db;
  std::uint64_t seed = 0;
  std::uint32_t count = 0;
  std::uint32_t record_len = 0;
  std::optional<std::string> kind;
  std::optional<std::string> sdr;
  std::optional<int> hops;
};

void write_seiq(const std::string& path, const FileHeader& header,
                std::span<const cplx> samples);

struct SeiqFile {
  FileHeader header;
  cvec samples;  // count * record_len

  cvec record(std::uint32_t i) const;
};

SeiqFile read_seiq(const std::string& path);

/// All frames must share length, rate, label and snr.
void write_frames(const std::string& path,
                  const std::vector<sigmodel::IqFrame>& frames,
                  std::uint64_t seed);
std::vector<sigmodel::IqFrame> read_frames(const std::string& path);

void write_preambles(const std::string& path,
                     const std::vector<pipeline::Preamble>& preambles,
                     std::uint64_t seed);
std::vector<pipeline::Preamble> read_preambles(const std::string& path);

/// Flat float32 array + JSON sidecar (shape, ordering, grid spec, colormap
/// id) for fingerprint/tensor datasets. Writes path and path + ".json".
void write_feature_array(const std::string& path,
                         std::span<const double> values,
                         const std::vector<int>& shape,
                         const std::string& ordering,
                         const std::string& extra_json = "{}");

}  // namespace seilab::seiq
