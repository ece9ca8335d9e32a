#pragma once

#include <cstdint>
#include <span>

namespace pat {

// SplitMix64 stream. Every random draw in the library goes through this
// generator so that initialisation, dropout masks, shuffles and synthetic
// data are identical across platforms and standard libraries:
//
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
//
// uniform() takes the top 53 bits; below(n) uses the 128-bit multiply-shift
// reduction; normal() is Box-Muller over two uniforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept : state_(seed) {}

  std::uint64_t next() noexcept;
  // Uniform in [0, 1).
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  double normal() noexcept;

  // Independent child stream; the parent advances by one draw.
  Rng split() noexcept { return Rng(next() ^ 0x6A09E667F3BCC909ULL); }

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace pat
