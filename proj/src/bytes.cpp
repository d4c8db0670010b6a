#include "realmsim/bytes.hpp"

#include <algorithm>

#include "realmsim/error.hpp"

namespace realmsim {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kLifecycle: return "LifecycleError";
    case ErrorCode::kOwnership: return "OwnershipError";
    case ErrorCode::kAccessViolation: return "AccessViolation";
    case ErrorCode::kBounds: return "BoundsError";
    case ErrorCode::kInterface: return "InterfaceError";
    case ErrorCode::kDecode: return "DecodeError";
    case ErrorCode::kIntegrity: return "IntegrityError";
    case ErrorCode::kState: return "StateError";
    case ErrorCode::kPolicyExhausted: return "PolicyExhausted";
    case ErrorCode::kExchangeFull: return "ExchangeFull";
    case ErrorCode::kImageVerification: return "ImageVerificationError";
    case ErrorCode::kMeasurement: return "MeasurementError";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kProtocol: return "ProtocolError";
    case ErrorCode::kIo: return "IoError";
  }
  return "UnknownError";
}

std::string to_hex(ByteView bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) {
    throw Error(ErrorCode::kDecode, "odd-length hex string");
  }
  Bytes out(hex.size() / 2);
  for (size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) {
      throw Error(ErrorCode::kDecode, "invalid hex digit at " + std::to_string(2 * i));
    }
    out[i] = static_cast<uint8_t>((hi << 4) | lo);
  }
  return out;
}

void throw_size_mismatch(size_t expected, size_t actual) {
  throw Error(ErrorCode::kDecode, "expected " + std::to_string(expected) +
                                      " bytes, got " + std::to_string(actual));
}

void append(Bytes& out, ByteView tail) { out.insert(out.end(), tail.begin(), tail.end()); }

void append_le64(Bytes& out, uint64_t value) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(value >> (8 * i)));
}

void append_le32(Bytes& out, uint32_t value) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(value >> (8 * i)));
}

void append_le16(Bytes& out, uint16_t value) {
  out.push_back(static_cast<uint8_t>(value));
  out.push_back(static_cast<uint8_t>(value >> 8));
}

uint64_t load_le64(ByteView in) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | in[i];
  return v;
}

uint32_t load_le32(ByteView in) {
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | in[i];
  return v;
}

uint16_t load_le16(ByteView in) { return static_cast<uint16_t>(in[0] | (in[1] << 8)); }

bool contains(ByteView haystack, ByteView needle) {
  if (needle.empty()) return true;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
         haystack.end();
}

}  // namespace realmsim
