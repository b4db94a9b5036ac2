#include "stcm/dataset_io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>

#include "json.hpp"

namespace stcm {

namespace {

constexpr char kMagic[4] = {'A', 'D', 'T', 'D'};
constexpr size_t kHeaderBytes = 4 + 2 + 5 * 4 + 8 + 8 + 8;

void ensure_little_endian() {
  uint16_t probe = 1;
  unsigned char b;
  std::memcpy(&b, &probe, 1);
  if (b != 1) throw ValidationError("dataset io requires a little-endian host");
}

void write_raw(std::FILE* f, const void* p, size_t n, const std::string& path) {
  if (std::fwrite(p, 1, n, f) != n)
    throw ValidationError("write failed: " + path);
}

void read_raw(std::FILE* f, void* p, size_t n, const std::string& path) {
  if (std::fread(p, 1, n, f) != n)
    throw ValidationError("read failed: " + path);
}

template <class T>
void write_pod(std::FILE* f, T v, const std::string& path) {
  write_raw(f, &v, sizeof(T), path);
}

template <class T>
T read_pod(std::FILE* f, const std::string& path) {
  T v;
  read_raw(f, &v, sizeof(T), path);
  return v;
}

}  // namespace

DatasetWriter::DatasetWriter(const std::string& path, const DatasetHeader& header)
    : path_(path), header_(header) {
  ensure_little_endian();
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ValidationError("cannot open for writing: " + path);
  file_ = f;
  write_raw(f, kMagic, 4, path_);
  write_pod(f, header_.version, path_);
  write_pod(f, header_.t, path_);
  write_pod(f, header_.n, path_);
  write_pod(f, header_.m, path_);
  write_pod(f, header_.h, path_);
  write_pod(f, header_.w, path_);
  write_pod(f, header_.fc, path_);
  write_pod(f, header_.dt, path_);
  write_pod(f, header_.n_sequences, path_);
}

DatasetWriter::~DatasetWriter() {
  if (file_) std::fclose(static_cast<std::FILE*>(file_));
}

void DatasetWriter::append(const AdSequence& seq) {
  if (!file_) throw ValidationError("writer already closed: " + path_);
  if (seq.t_frames != static_cast<int>(header_.t) || seq.h != static_cast<int>(header_.h) ||
      seq.w != static_cast<int>(header_.w))
    throw ValidationError("sequence dims do not match dataset header: " + path_);
  if (written_ >= header_.n_sequences)
    throw ValidationError("more sequences than the header declares: " + path_);
  std::FILE* f = static_cast<std::FILE*>(file_);
  write_pod(f, seq.meta.velocity.x, path_);
  write_pod(f, seq.meta.velocity.y, path_);
  std::vector<float> buf(seq.frames.size() * 2);
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    buf[2 * i] = static_cast<float>(seq.frames[i].real());
    buf[2 * i + 1] = static_cast<float>(seq.frames[i].imag());
  }
  write_raw(f, buf.data(), buf.size() * sizeof(float), path_);
  ++written_;
}

void DatasetWriter::close() {
  if (!file_) return;
  if (written_ != header_.n_sequences)
    throw ValidationError("fewer sequences than the header declares: " + path_);
  std::fclose(static_cast<std::FILE*>(file_));
  file_ = nullptr;
}

DatasetReader::DatasetReader(const std::string& path) : path_(path) {
  ensure_little_endian();
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw ValidationError("cannot open dataset: " + path);
  file_ = f;
  char magic[4];
  read_raw(f, magic, 4, path_);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw ValidationError("bad magic (not an ADTD dataset): " + path);
  header_.version = read_pod<uint16_t>(f, path_);
  if (header_.version != 1)
    throw ValidationError("unsupported dataset version (endianness or format mismatch): " + path);
  header_.t = read_pod<uint32_t>(f, path_);
  header_.n = read_pod<uint32_t>(f, path_);
  header_.m = read_pod<uint32_t>(f, path_);
  header_.h = read_pod<uint32_t>(f, path_);
  header_.w = read_pod<uint32_t>(f, path_);
  header_.fc = read_pod<double>(f, path_);
  header_.dt = read_pod<double>(f, path_);
  header_.n_sequences = read_pod<uint64_t>(f, path_);

  std::error_code ec;
  auto size = std::filesystem::file_size(path, ec);
  if (ec) throw ValidationError("cannot stat dataset: " + path);
  uint64_t expected = kHeaderBytes + header_.n_sequences * header_.bytes_per_sequence();
  if (size != expected)
    throw ValidationError("payload length mismatch: " + path);
}

DatasetReader::~DatasetReader() {
  if (file_) std::fclose(static_cast<std::FILE*>(file_));
}

AdSequence DatasetReader::read(uint64_t index) const {
  if (index >= header_.n_sequences) throw ValidationError("sequence index out of range: " + path_);
  std::FILE* f = static_cast<std::FILE*>(file_);
  uint64_t off = kHeaderBytes + index * header_.bytes_per_sequence();
  if (std::fseek(f, static_cast<long>(off), SEEK_SET) != 0)
    throw ValidationError("seek failed: " + path_);
  AdSequence seq;
  seq.t_frames = static_cast<int>(header_.t);
  seq.h = static_cast<int>(header_.h);
  seq.w = static_cast<int>(header_.w);
  seq.meta.dt = header_.dt;
  seq.meta.fc = header_.fc;
  seq.meta.n_ant = static_cast<int>(header_.n);
  seq.meta.n_sub = static_cast<int>(header_.m);
  seq.meta.velocity.x = read_pod<double>(f, path_);
  seq.meta.velocity.y = read_pod<double>(f, path_);
  size_t n = static_cast<size_t>(header_.t) * header_.h * header_.w;
  std::vector<float> buf(n * 2);
  read_raw(f, buf.data(), buf.size() * sizeof(float), path_);
  seq.frames.resize(n);
  for (size_t i = 0; i < n; ++i)
    seq.frames[i] = {static_cast<double>(buf[2 * i]), static_cast<double>(buf[2 * i + 1])};
  return seq;
}

std::vector<AdSequence> DatasetReader::read_all() const {
  std::vector<AdSequence> out;
  out.reserve(static_cast<size_t>(header_.n_sequences));
  for (uint64_t i = 0; i < header_.n_sequences; ++i) out.push_back(read(i));
  return out;
}

int velocity_bin(double speed, const std::vector<double>& bin_edges) {
  // edges like {0,10,20,30}: bin i covers [e_i, e_{i+1}); speeds beyond the
  // last edge clamp into the final bin.
  int n_bins = static_cast<int>(bin_edges.size()) - 1;
  for (int i = 0; i < n_bins; ++i)
    if (speed >= bin_edges[static_cast<size_t>(i)] && speed < bin_edges[static_cast<size_t>(i) + 1])
      return i;
  return n_bins - 1;
}

GenerateSummary generate_dataset(int64_t n_sequences, const SceneConfig& scene_cfg,
                                 int delay_taps, const std::vector<double>& bin_edges,
                                 uint64_t seed, const std::string& out_path,
                                 const std::string& config_hash, int n_threads) {
  if (n_sequences < 1) throw ValidationError("generate_dataset: need at least one sequence");
  Scene scene(scene_cfg);

  std::vector<AdSequence> results(static_cast<size_t>(n_sequences));
  parallel_for(n_sequences, resolve_threads(n_threads), [&](int64_t i) {
    uint64_t seq_seed = derive_seed(seed, "sequence", static_cast<uint64_t>(i));
    ChannelSequence raw = generate_sequence(scene, scene_cfg.speed_min, scene_cfg.speed_max,
                                            scene_cfg.t_frames, scene_cfg.dt, seq_seed);
    results[static_cast<size_t>(i)] = to_ad_sequence(raw, delay_taps);
  });

  DatasetHeader header;
  header.t = static_cast<uint32_t>(scene_cfg.t_frames);
  header.n = static_cast<uint32_t>(scene_cfg.n_ant);
  header.m = static_cast<uint32_t>(scene_cfg.n_sub);
  header.h = static_cast<uint32_t>(scene_cfg.n_ant);
  header.w = static_cast<uint32_t>(delay_taps);
  header.fc = scene_cfg.fc;
  header.dt = scene_cfg.dt;
  header.n_sequences = static_cast<uint64_t>(n_sequences);

  DatasetWriter writer(out_path, header);
  nlohmann::json rows = nlohmann::json::array();
  for (int64_t i = 0; i < n_sequences; ++i) {
    const AdSequence& seq = results[static_cast<size_t>(i)];
    writer.append(seq);
    double speed = norm(seq.meta.velocity);
    rows.push_back({{"index", i},
                    {"speed_mps", speed},
                    {"bin", velocity_bin(speed, bin_edges)}});
  }
  writer.close();

  nlohmann::json manifest{{"tool_version", kToolVersion},
                          {"config_hash", config_hash},
                          {"seed", seed},
                          {"n_sequences", n_sequences},
                          {"scene_tag", "scene-" + hex64(scene_cfg.scene_seed)},
                          {"bin_edges_mps", bin_edges},
                          {"sequences", rows}};
  std::string manifest_path = out_path + ".manifest.json";
  std::FILE* mf = std::fopen(manifest_path.c_str(), "wb");
  if (!mf) throw ValidationError("cannot open for writing: " + manifest_path);
  std::string text = manifest.dump(2);
  write_raw(mf, text.data(), text.size(), manifest_path);
  std::fclose(mf);

  return {static_cast<uint64_t>(n_sequences), out_path, manifest_path};
}

}  // namespace stcm
