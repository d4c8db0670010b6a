#include "realmsim/protocol.hpp"

#include "realmsim/error.hpp"

namespace realmsim::protocol {

std::string_view message_name(MessageType type) {
  switch (type) {
    case MessageType::kHello: return "Hello";
    case MessageType::kChallenge: return "Challenge";
    case MessageType::kReport: return "Report";
    case MessageType::kPackage: return "Package";
    case MessageType::kRefused: return "Refused";
    case MessageType::kUpdateQuery: return "UpdateQuery";
    case MessageType::kUpdate: return "Update";
    case MessageType::kUpToDate: return "UpToDate";
  }
  return "?";
}

Bytes Message::body() const {
  cbor::Map m{{kTypeKey, static_cast<uint64_t>(type)}};
  m.insert(m.end(), fields.begin(), fields.end());
  return cbor::encode(m);
}

Message Message::parse(ByteView body) {
  cbor::Value root = cbor::decode(body);
  const cbor::Map& m = root.as_map();
  if (m.empty() || m.front().first != kTypeKey) {
    throw Error(ErrorCode::kDecode, "message without type");
  }
  uint64_t raw = m.front().second.as_uint();
  if (raw < 1 || raw > static_cast<uint64_t>(MessageType::kUpToDate)) {
    throw Error(ErrorCode::kDecode, "unknown message type " + std::to_string(raw));
  }
  return {static_cast<MessageType>(raw), cbor::Map(m.begin() + 1, m.end())};
}

const cbor::Value& Message::at(uint64_t key) const {
  for (const auto& [k, v] : fields) {
    if (k == key) return v;
  }
  throw Error(ErrorCode::kDecode, std::string(message_name(type)) + " lacks field " +
                                      std::to_string(key));
}

Bytes frame(ByteView body) {
  if (body.size() > kMaxFrameBody) throw Error(ErrorCode::kBounds, "frame too large");
  Bytes out;
  uint32_t n = static_cast<uint32_t>(body.size());
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<uint8_t>(n >> (8 * i)));
  append(out, body);
  return out;
}

size_t frame_length(ByteView header) {
  uint32_t n = 0;
  for (int i = 0; i < 4; ++i) n = (n << 8) | header[i];
  if (n > kMaxFrameBody) throw Error(ErrorCode::kDecode, "frame length " + std::to_string(n));
  return n;
}

}  // namespace realmsim::protocol
