#pragma once

// Counter-based random numbers: every sample is a pure function of
// (seed, stream, counter), so a parallel fill reproduces a serial fill.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace qsa {

namespace detail {

constexpr std::uint64_t mix64(std::uint64_t z) {
  // SplitMix64 finalizer.
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

class Rng {
 public:
  explicit constexpr Rng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  constexpr std::uint64_t seed() const { return seed_; }
  constexpr std::uint64_t stream() const { return stream_; }
  constexpr std::uint64_t counter() const { return counter_; }

  /// Independent generator keyed on a sub-stream (trial index, head, ...).
  constexpr Rng substream(std::uint64_t id) const {
    return Rng(seed_, detail::mix64(stream_ * 0x9e3779b97f4a7c15ULL + id + 1));
  }

  constexpr std::uint64_t bits_at(std::uint64_t counter) const {
    const std::uint64_t key = detail::mix64(seed_ ^ detail::mix64(stream_ + 0x632be59bd9b4e019ULL));
    return detail::mix64(key + counter * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform on [0, 1) with 53 random bits.
  constexpr double uniform_at(std::uint64_t counter) const {
    return static_cast<double>(bits_at(counter) >> 11) * 0x1.0p-53;
  }

  /// Standard normal sample from the uniform pair at counters (2c, 2c+1):
  /// z = sqrt(-2 ln(1 - u1)) * cos(2 pi u2). Uses one sample per pair.
  double normal_at(std::uint64_t counter) const {
    const double u1 = uniform_at(2 * counter);
    const double u2 = uniform_at(2 * counter + 1);
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Reserve `n` consecutive sample slots and return the first.
  constexpr std::uint64_t advance(std::uint64_t n) {
    const std::uint64_t first = counter_;
    counter_ += n;
    return first;
  }

  double uniform() { return uniform_at(advance(1)); }
  double normal() { return normal_at(advance(1)); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace qsa
