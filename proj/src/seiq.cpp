#include "seilab/seiq.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "seilab/colormap.hpp"

namespace seilab::seiq {

namespace {

using json = nlohmann::json;

constexpr char kMagic[8] = {'S', 'E', 'I', 'Q', '0', '0', '0', '1'};

json header_to_json(const FileHeader& h) {
  json j;
  j["sample_rate"] = h.sample_rate_hz;
  j["emitter_id"] = h.emitter_id ? json(*h.emitter_id) : json(nullptr);
  j["snr_db"] = h.snr_db ? json(*h.snr_db) : json(nullptr);
  j["seed"] = h.seed;
  j["count"] = h.count;
  j["record_len"] = h.record_len;
  if (h.kind) j["kind"] = *h.kind;
  if (h.sdr) j["sdr"] = *h.sdr;
  if (h.hops) j["hops"] = *h.hops;
  return j;
}

FileHeader header_from_json(const json& j) {
  FileHeader h;
  h.sample_rate_hz = j.at("sample_rate").get<double>();
  if (!j.at("emitter_id").is_null()) {
    h.emitter_id = j.at("emitter_id").get<std::string>();
  }
  if (!j.at("snr_db").is_null()) h.snr_db = j.at("snr_db").get<double>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.count = j.at("count").get<std::uint32_t>();
  h.record_len = j.at("record_len").get<std::uint32_t>();
  if (j.contains("kind")) h.kind = j.at("kind").get<std::string>();
  if (j.contains("sdr")) h.sdr = j.at("sdr").get<std::string>();
  if (j.contains("hops")) h.hops = j.at("hops").get<int>();
  return h;
}

}  // namespace

void write_seiq(const std::string& path, const FileHeader& header,
                std::span<const cplx> samples) {
  require(static_cast<std::uint64_t>(header.count) * header.record_len ==
              samples.size(),
          "seiq: count * record_len must equal the sample count");
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw processing_error("cannot open for writing: " + path);

  const std::string hdr = header_to_json(header).dump();
  const std::uint32_t hlen = static_cast<std::uint32_t>(hdr.size());
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));

  std::vector<float> interleaved(samples.size() * 2);
  for (size_t i = 0; i < samples.size(); ++i) {
    interleaved[2 * i] = static_cast<float>(samples[i].real());
    interleaved[2 * i + 1] = static_cast<float>(samples[i].imag());
  }
  out.write(reinterpret_cast<const char*>(interleaved.data()),
            static_cast<std::streamsize>(interleaved.size() * sizeof(float)));
  if (!out.good()) throw processing_error("seiq write failed: " + path);
}

cvec SeiqFile::record(std::uint32_t i) const {
  require(i < header.count, "record index out of range");
  const size_t len = header.record_len;
  return cvec(samples.begin() + static_cast<std::ptrdiff_t>(i * len),
              samples.begin() + static_cast<std::ptrdiff_t>((i + 1) * len));
}

SeiqFile read_seiq(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw processing_error("cannot open: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  require(in.good() && std::memcmp(magic, kMagic, 8) == 0,
          "not a SEIQ v1 file: " + path);
  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hdr(hlen, '\0');
  in.read(hdr.data(), hlen);
  require(in.good(), "truncated seiq header: " + path);

  SeiqFile file;
  file.header = header_from_json(json::parse(hdr));
  const std::uint64_t n =
      static_cast<std::uint64_t>(file.header.count) * file.header.record_len;
  std::vector<float> interleaved(n * 2);
  in.read(reinterpret_cast<char*>(interleaved.data()),
          static_cast<std::streamsize>(interleaved.size() * sizeof(float)));
  if (!in.good()) throw processing_error("truncated seiq payload: " + path);
  file.samples.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    file.samples[i] = cplx(interleaved[2 * i], interleaved[2 * i + 1]);
  }
  return file;
}

void write_frames(const std::string& path,
                  const std::vector<sigmodel::IqFrame>& frames,
                  std::uint64_t seed) {
  require(!frames.empty(), "no frames to write");
  FileHeader h;
  h.sample_rate_hz = frames.front().sample_rate_hz;
  h.emitter_id = frames.front().emitter_id;
  h.snr_db = frames.front().snr_db;
  h.seed = seed;
  h.count = static_cast<std::uint32_t>(frames.size());
  h.record_len = static_cast<std::uint32_t>(frames.front().samples.size());

  cvec all;
  all.reserve(static_cast<size_t>(h.count) * h.record_len);
  for (const auto& f : frames) {
    require(f.samples.size() == h.record_len, "frames must share a length");
    require(f.sample_rate_hz == h.sample_rate_hz, "frames must share a rate");
    require(f.emitter_id == h.emitter_id, "frames must share a label");
    all.insert(all.end(), f.samples.begin(), f.samples.end());
  }
  write_seiq(path, h, all);
}

std::vector<sigmodel::IqFrame> read_frames(const std::string& path) {
  const SeiqFile file = read_seiq(path);
  std::vector<sigmodel::IqFrame> frames(file.header.count);
  for (std::uint32_t i = 0; i < file.header.count; ++i) {
    frames[i].samples = file.record(i);
    frames[i].sample_rate_hz = file.header.sample_rate_hz;
    frames[i].emitter_id = file.header.emitter_id;
    frames[i].snr_db = file.header.snr_db;
    frames[i].seed = file.header.seed;
  }
  return frames;
}

void write_preambles(const std::string& path,
                     const std::vector<pipeline::Preamble>& preambles,
                     std::uint64_t seed) {
  require(!preambles.empty(), "no preambles to write");
  FileHeader h;
  h.emitter_id = preambles.front().emitter_id;
  h.snr_db = preambles.front().snr_db;
  h.seed = seed;
  h.count = static_cast<std::uint32_t>(preambles.size());
  h.record_len = kPreambleLen;
  cvec all;
  all.reserve(static_cast<size_t>(h.count) * kPreambleLen);
  for (const auto& p : preambles) {
    require(p.samples.size() == kPreambleLen, "preambles must be 320 samples");
    all.insert(all.end(), p.samples.begin(), p.samples.end());
  }
  write_seiq(path, h, all);
}

std::vector<pipeline::Preamble> read_preambles(const std::string& path) {
  const SeiqFile file = read_seiq(path);
  require(file.header.record_len == kPreambleLen,
          "not a preamble file (record_len != 320)");
  std::vector<pipeline::Preamble> out(file.header.count);
  for (std::uint32_t i = 0; i < file.header.count; ++i) {
    out[i].samples = file.record(i);
    out[i].emitter_id = file.header.emitter_id;
    out[i].snr_db = file.header.snr_db;
    out[i].k = static_cast<int>(i);
    out[i].normalized = true;
    out[i].stage_mask = pipeline::kAllStages;
  }
  return out;
}

void write_feature_array(const std::string& path,
                         std::span<const double> values,
                         const std::vector<int>& shape,
                         const std::string& ordering,
                         const std::string& extra_json) {
  std::int64_t numel = 1;
  for (int d : shape) numel *= d;
  require(numel == static_cast<std::int64_t>(values.size()),
          "feature array shape mismatch");

  std::ofstream bin(path, std::ios::binary);
  if (!bin.good()) throw processing_error("cannot open for writing: " + path);
  std::vector<float> f32(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    f32[i] = static_cast<float>(values[i]);
  }
  bin.write(reinterpret_cast<const char*>(f32.data()),
            static_cast<std::streamsize>(f32.size() * sizeof(float)));
  if (!bin.good()) throw processing_error("feature array write failed: " + path);

  json sidecar = json::parse(extra_json);
  sidecar["dtype"] = "float32-le";
  sidecar["shape"] = shape;
  sidecar["ordering"] = ordering;
  sidecar["colormap"] = features::colormap_id();
  std::ofstream meta(path + ".json");
  meta << sidecar.dump(2) << "\n";
}

}  // namespace seilab::seiq
