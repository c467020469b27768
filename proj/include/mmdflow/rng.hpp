#pragma once

#include <cmath>
#include <cstdint>

namespace mmdflow {

// Counter-based generator: every draw is a pure function of
// (seed, stream, counter), so sampling is reproducible across platforms
// and independent of call order.  Streams are cheap to split, which lets
// each component of a composite target own its own stream.
//
// The mixer is splitmix64 (Steele et al., "Fast splittable pseudorandom
// number generators").
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  CounterRng stream(std::uint64_t substream) const {
    return CounterRng(seed_, mix(stream_ ^ mix(substream + 0x1bd11bdaa9fc1a22ULL)));
  }

  std::uint64_t bits(std::uint64_t counter) const {
    return mix(seed_ ^ mix(stream_ ^ mix(counter)));
  }

  // Uniform on (0,1); never returns an exact 0 or 1 so it is safe under log().
  double uniform(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(std::uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * uniform(counter);
  }

  // Standard normal via Box-Muller; consumes two counters (2k, 2k+1).
  double normal(std::uint64_t pair_index) const {
    const double u1 = uniform(2 * pair_index);
    const double u2 = uniform(2 * pair_index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
};

}  // namespace mmdflow
