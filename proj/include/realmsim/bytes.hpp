#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace realmsim {

using Bytes = std::vector<uint8_t>;
using ByteView = std::span<const uint8_t>;

using Digest = std::array<uint8_t, 32>;
using Challenge = std::array<uint8_t, 64>;
using Personalization = std::array<uint8_t, 64>;
using PublicKey = std::array<uint8_t, 32>;
using Signature = std::array<uint8_t, 64>;

inline constexpr Digest kZeroDigest{};

std::string to_hex(ByteView bytes);
// Throws Error(Decode) on odd length or a non-hex character.
Bytes from_hex(std::string_view hex);

// Throws Error(Decode) when the size differs from N.
template <size_t N>
std::array<uint8_t, N> to_array(ByteView bytes);

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const uint8_t*>(s.data()), s.size()};
}

void append(Bytes& out, ByteView tail);
void append_le64(Bytes& out, uint64_t value);
void append_le32(Bytes& out, uint32_t value);
void append_le16(Bytes& out, uint16_t value);
uint64_t load_le64(ByteView in);
uint32_t load_le32(ByteView in);
uint16_t load_le16(ByteView in);

// True if `needle` occurs contiguously inside `haystack`.
bool contains(ByteView haystack, ByteView needle);

[[noreturn]] void throw_size_mismatch(size_t expected, size_t actual);

template <size_t N>
std::array<uint8_t, N> to_array(ByteView bytes) {
  if (bytes.size() != N) throw_size_mismatch(N, bytes.size());
  std::array<uint8_t, N> out;
  std::copy(bytes.begin(), bytes.end(), out.begin());
  return out;
}

}  // namespace realmsim
