#pragma once

#include <complex>
#include <string>
#include <vector>

#include "stcm/common.hpp"
#include "stcm/scene.hpp"

namespace stcm {

struct SeqMeta {
  Vec2 velocity;
  double dt = 0.0;
  double fc = 0.0;
  int n_ant = 0;
  int n_sub = 0;
  std::string tag;
};

// Angle-delay frames: h = angle bin (one per antenna), w = delay tap.
struct AdSequence {
  int t_frames = 0;
  int h = 0;
  int w = 0;
  std::vector<std::complex<double>> frames;  // t*h*w, row-major (t, h, w)
  double rms = 1.0;                          // scale divided out by rms_normalize
  SeqMeta meta;

  std::complex<double>& at(int t, int hh, int ww) {
    return frames[(static_cast<size_t>(t) * h + hh) * w + ww];
  }
  std::complex<double> at(int t, int hh, int ww) const {
    return frames[(static_cast<size_t>(t) * h + hh) * w + ww];
  }
};

// Unitary N-point DFT along antennas, unitary M-point IDFT along subcarriers.
// In-place variants write to `out` which may not alias `in`.
void to_angle_delay(const std::complex<double>* in, int n, int m, std::complex<double>* out);
void from_angle_delay(const std::complex<double>* in, int n, int m, std::complex<double>* out);

// Keeps delay columns [0, w_keep); returns the retained energy fraction
// (1.0 for a zero input).
double truncate_delay(const std::complex<double>* in, int n, int m, int w_keep,
                      std::complex<double>* out);

// Full pipeline for one channel sequence: transform each frame, truncate to
// w_keep taps.
AdSequence to_ad_sequence(const ChannelSequence& seq, int w_keep);

// Divides by sqrt(mean |x|^2) over all entries and records the scale.
AdSequence rms_normalize(const AdSequence& seq);

double frobenius_norm(const std::complex<double>* x, size_t n);

}  // namespace stcm
