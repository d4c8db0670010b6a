#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace realmsim {

// Seeded generator shared by every randomized component. mt19937_64 output is
// fixed by the standard, so sequences are identical across toolchains.
class DeterministicRng {
 public:
  explicit DeterministicRng(uint64_t seed) : engine_(seed) {}

  // Independent stream for a named consumer, stable for a given (seed, label).
  static DeterministicRng derive(uint64_t seed, std::string_view label);

  uint64_t next() { return engine_(); }

  // Uniform in [0, bound); bound must be positive.
  uint64_t below(uint64_t bound);

  // Uniform in [0, 1) with 53 bits of resolution.
  double unit();

  // Standard normal via Box-Muller.
  double normal();

  void fill(std::span<uint8_t> out);

  template <size_t N>
  std::array<uint8_t, N> bytes() {
    std::array<uint8_t, N> out;
    fill(out);
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace realmsim
