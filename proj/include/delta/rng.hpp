#pragma once

#include <cmath>
#include <cstdint>

namespace delta {

// SplitMix64 stream. Every stochastic component of the simulator draws from
// an explicitly seeded stream so runs are reproducible bit-for-bit and do
// not depend on library distribution internals.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller (cosine branch). Consumes exactly two uniforms per call so
  // the stream position never depends on earlier draws.
  double gaussian() {
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

 private:
  std::uint64_t state_;
};

// Hash-combines for deriving per-agent / per-iteration substreams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  RngStream s(a ^ (0x632be59bd9b4e019ULL + (b << 1)));
  s.next_u64();
  return s.next_u64() ^ b;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

}  // namespace delta
