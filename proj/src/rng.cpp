#include "realmsim/rng.hpp"

#include <cmath>
#include <numbers>

#include "realmsim/bytes.hpp"
#include "realmsim/crypto.hpp"

namespace realmsim {

DeterministicRng DeterministicRng::derive(uint64_t seed, std::string_view label) {
  Bytes material;
  append_le64(material, seed);
  append(material, as_bytes(label));
  Digest d = crypto::sha256(material);
  return DeterministicRng(load_le64(d));
}

uint64_t DeterministicRng::below(uint64_t bound) {
  // Rejection sampling keeps the result unbiased.
  uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return v % bound;
}

double DeterministicRng::unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double DeterministicRng::normal() {
  double u1 = 1.0 - unit();
  double u2 = unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void DeterministicRng::fill(std::span<uint8_t> out) {
  size_t i = 0;
  while (i < out.size()) {
    uint64_t v = engine_();
    for (int b = 0; b < 8 && i < out.size(); ++b, ++i) out[i] = static_cast<uint8_t>(v >> (8 * b));
  }
}

}  // namespace realmsim
