#include "stcm/adt.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

namespace stcm {

namespace {

// Cached unitary DFT matrices; sign = -1 forward, +1 inverse.
using CMat = std::vector<std::complex<double>>;

std::shared_ptr<const CMat> dft_matrix(int n, int sign) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<const CMat>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(n, sign);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto m = std::make_shared<CMat>(static_cast<size_t>(n) * n);
  double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q)
      (*m)[static_cast<size_t>(p) * n + q] =
          scale * std::polar(1.0, sign * 2.0 * M_PI * p * q / n);
  cache[key] = m;
  return m;
}

// out = A * X * B with A (n x n), X (n x m), B (m x m), all row-major.
void two_sided_transform(const std::complex<double>* x, int n, int m, const CMat& a,
                         const CMat& b, std::complex<double>* out) {
  CMat tmp(static_cast<size_t>(n) * m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      std::complex<double> acc = 0.0;
      for (int k = 0; k < n; ++k)
        acc += a[static_cast<size_t>(i) * n + k] * x[static_cast<size_t>(k) * m + j];
      tmp[static_cast<size_t>(i) * m + j] = acc;
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      std::complex<double> acc = 0.0;
      for (int k = 0; k < m; ++k)
        acc += tmp[static_cast<size_t>(i) * m + k] * b[static_cast<size_t>(k) * m + j];
      out[static_cast<size_t>(i) * m + j] = acc;
    }
  }
}

}  // namespace

void to_angle_delay(const std::complex<double>* in, int n, int m, std::complex<double>* out) {
  // angle: forward DFT over antennas (rows); delay: inverse DFT over
  // subcarriers (columns). B[k][q] = e^{+j2pi kq/M}/sqrt(M) right-multiplied.
  auto a = dft_matrix(n, -1);
  auto b = dft_matrix(m, +1);
  two_sided_transform(in, n, m, *a, *b, out);
}

void from_angle_delay(const std::complex<double>* in, int n, int m, std::complex<double>* out) {
  auto a = dft_matrix(n, +1);
  auto b = dft_matrix(m, -1);
  two_sided_transform(in, n, m, *a, *b, out);
}

double truncate_delay(const std::complex<double>* in, int n, int m, int w_keep,
                      std::complex<double>* out) {
  if (w_keep < 1 || w_keep > m) throw ValidationError("truncate_delay: W out of range");
  double kept = 0.0, total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      double e = std::norm(in[static_cast<size_t>(i) * m + j]);
      total += e;
      if (j < w_keep) {
        kept += e;
        out[static_cast<size_t>(i) * w_keep + j] = in[static_cast<size_t>(i) * m + j];
      }
    }
  }
  return total > 0.0 ? kept / total : 1.0;
}

AdSequence to_ad_sequence(const ChannelSequence& seq, int w_keep) {
  if (w_keep < 1 || w_keep > seq.n_sub) throw ValidationError("to_ad_sequence: W out of range");
  AdSequence ad;
  ad.t_frames = seq.t_frames;
  ad.h = seq.n_ant;
  ad.w = w_keep;
  ad.frames.resize(static_cast<size_t>(seq.t_frames) * seq.n_ant * w_keep);
  ad.meta = {seq.velocity, seq.dt, seq.fc, seq.n_ant, seq.n_sub, seq.city_tag};

  std::vector<std::complex<double>> full(static_cast<size_t>(seq.n_ant) * seq.n_sub);
  for (int t = 0; t < seq.t_frames; ++t) {
    const std::complex<double>* frame =
        seq.frames.data() + static_cast<size_t>(t) * seq.n_ant * seq.n_sub;
    to_angle_delay(frame, seq.n_ant, seq.n_sub, full.data());
    truncate_delay(full.data(), seq.n_ant, seq.n_sub, w_keep,
                   ad.frames.data() + static_cast<size_t>(t) * seq.n_ant * w_keep);
  }
  return ad;
}

double frobenius_norm(const std::complex<double>* x, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += std::norm(x[i]);
  return std::sqrt(acc);
}

AdSequence rms_normalize(const AdSequence& seq) {
  double acc = 0.0;
  for (const auto& v : seq.frames) acc += std::norm(v);
  if (seq.frames.empty() || acc <= 0.0)
    throw ValidationError("degenerate sample: zero-energy sequence");
  double rms = std::sqrt(acc / static_cast<double>(seq.frames.size()));
  AdSequence out = seq;
  for (auto& v : out.frames) v /= rms;
  out.rms = seq.rms * rms;
  return out;
}

}  // namespace stcm
