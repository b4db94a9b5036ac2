#pragma once

#include <cstdint>
#include <cstddef>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stcm {

inline constexpr const char* kToolVersion = "0.1.0";

// Exact by SI definition.
inline constexpr double kSpeedOfLight = 299792458.0;

// Error categories map onto CLI exit codes: usage=1, validation=2, numeric=3.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

uint64_t fnv1a64(const void* data, size_t n, uint64_t state = 0xcbf29ce484222325ull);
uint64_t fnv1a64(std::string_view s);
std::string hex64(uint64_t v);

uint64_t splitmix64(uint64_t x);

// Named sub-stream derivation: all randomness flows from one root seed.
uint64_t derive_seed(uint64_t root, std::string_view stream, uint64_t index = 0);

// mt19937_64 core with hand-rolled distributions so draws are identical
// across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t bits() { return eng_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double normal();

  // [0, n), n > 0
  int64_t below(int64_t n);
  // [lo, hi] inclusive
  int64_t range(int64_t lo, int64_t hi) { return lo + below(hi - lo + 1); }

  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<size_t>(below(static_cast<int64_t>(v.size())))];
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Runs body(i) for i in [0, n). Work is split into contiguous chunks, one per
// thread; callers must ensure bodies write disjoint state. n_threads <= 1 runs
// inline.
void parallel_for(int64_t n, int n_threads, const std::function<void(int64_t)>& body);

// requested == 0 -> hardware concurrency, otherwise clamped to >= 1.
int resolve_threads(int requested);

}  // namespace stcm
