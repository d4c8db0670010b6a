#pragma once

#include <cstdint>
#include <string_view>

#include "realmsim/bytes.hpp"
#include "realmsim/cbor.hpp"

// Provider wire protocol. A frame is a 4-byte big-endian body length followed
// by a CBOR map body whose key 1 is the message type.
namespace realmsim::protocol {

enum class MessageType : uint8_t {
  kHello = 1,
  kChallenge = 2,
  kReport = 3,
  kPackage = 4,
  kRefused = 5,
  kUpdateQuery = 6,
  kUpdate = 7,
  kUpToDate = 8,
};

std::string_view message_name(MessageType type);

inline constexpr uint64_t kTypeKey = 1;
inline constexpr size_t kMaxFrameBody = 1 << 20;

struct Message {
  MessageType type;
  cbor::Map fields;  // keys >= 2

  Bytes body() const;
  // Throws Error(Decode) for malformed bodies or unknown message types.
  static Message parse(ByteView body);
  const cbor::Value& at(uint64_t key) const;
};

Bytes frame(ByteView body);
// Big-endian length prefix of a frame header; throws Error(Decode) when the
// length exceeds kMaxFrameBody.
size_t frame_length(ByteView header);

}  // namespace realmsim::protocol
