#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stcm/adt.hpp"
#include "stcm/common.hpp"
#include "stcm/scene.hpp"

namespace stcm {

// On-disk layout (all little-endian):
//   magic "ADTD", version u16,
//   T,N,M,H,W u32, fc f64, dt f64, n_sequences u64,
//   then per sequence: velocity 2 x f64, frames T*H*W complex as
//   interleaved f32 (re, im), row-major (t, h, w).
struct DatasetHeader {
  uint16_t version = 1;
  uint32_t t = 0, n = 0, m = 0, h = 0, w = 0;
  double fc = 0.0;
  double dt = 0.0;
  uint64_t n_sequences = 0;

  size_t bytes_per_sequence() const {
    return 16 + static_cast<size_t>(t) * h * w * 8;
  }
};

class DatasetWriter {
 public:
  DatasetWriter(const std::string& path, const DatasetHeader& header);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void append(const AdSequence& seq);
  void close();

 private:
  std::string path_;
  DatasetHeader header_;
  void* file_ = nullptr;
  uint64_t written_ = 0;
};

class DatasetReader {
 public:
  explicit DatasetReader(const std::string& path);
  ~DatasetReader();
  DatasetReader(const DatasetReader&) = delete;
  DatasetReader& operator=(const DatasetReader&) = delete;

  const DatasetHeader& header() const { return header_; }
  AdSequence read(uint64_t index) const;
  std::vector<AdSequence> read_all() const;

 private:
  std::string path_;
  DatasetHeader header_;
  void* file_ = nullptr;
};

struct GenerateSummary {
  uint64_t n_sequences = 0;
  std::string dataset_path;
  std::string manifest_path;
};

// Runs the scene pipeline for n sequences, stores truncated angle-delay
// frames, and writes a manifest with per-sequence speeds and velocity bins.
GenerateSummary generate_dataset(int64_t n_sequences, const SceneConfig& scene_cfg,
                                 int delay_taps, const std::vector<double>& bin_edges,
                                 uint64_t seed, const std::string& out_path,
                                 const std::string& config_hash, int n_threads);

int velocity_bin(double speed, const std::vector<double>& bin_edges);

}  // namespace stcm
